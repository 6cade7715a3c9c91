#ifndef AUTOCL_AUGMENT_HPP
#define AUTOCL_AUGMENT_HPP

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "autocl/random.hpp"
#include "autocl/tensor.hpp"

namespace autocl::augment {

enum class Kind { original, jitter, scale, permute };

struct AugmentationOp {
  Kind kind = Kind::original;
  double sigma = 0.0;
  Index num_segments = 4;

  static AugmentationOp original() { return {}; }
  static AugmentationOp jitter(double sigma = 0.05) { return {Kind::jitter, sigma, 1}; }
  static AugmentationOp scale(double sigma = 0.1) { return {Kind::scale, sigma, 1}; }
  static AugmentationOp permute(Index segments = 4) { return {Kind::permute, 0.0, segments}; }
};

struct AugmentationDefaults {
  double jitter_sigma = 0.05;
  double scale_sigma = 0.1;
  Index permute_segments = 4;
};

inline char code(Kind k) {
  switch (k) {
    case Kind::original: return 'O';
    case Kind::jitter: return 'J';
    case Kind::scale: return 'S';
    case Kind::permute: return 'P';
  }
  return '?';
}

inline AugmentationOp parse_op(char c, const AugmentationDefaults& d = {}) {
  switch (c) {
    case 'O': case 'o': return AugmentationOp::original();
    case 'J': case 'j': return AugmentationOp::jitter(d.jitter_sigma);
    case 'S': case 's': return AugmentationOp::scale(d.scale_sigma);
    case 'P': case 'p': return AugmentationOp::permute(d.permute_segments);
    default: throw std::invalid_argument(std::string("unknown augmentation code '") + c + "' (expected O, J, S or P)");
  }
}

// Two-letter pair code such as "SP" (scaling for view a, permutation for view b).
inline std::pair<AugmentationOp, AugmentationOp> parse_pair(const std::string& s, const AugmentationDefaults& d = {}) {
  if (s.size() != 2) throw std::invalid_argument("augmentation pair must be two letters, got '" + s + "'");
  return {parse_op(s[0], d), parse_op(s[1], d)};
}

inline std::string pair_code(const AugmentationOp& a, const AugmentationOp& b) { return {code(a.kind), code(b.kind)}; }

// Adds i.i.d. Normal(0, sigma^2) noise to every element.
template <typename Scalar>
Sequences<Scalar> jitter(const Sequences<Scalar>& x, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("jitter: sigma must be nonnegative");
  Sequences<Scalar> out = x;
  if (sigma == 0.0) return out;
  for (Index i = 0; i < out.values.size(); ++i) out.values.data()[i] += static_cast<Scalar>(rng.normal(0.0, sigma));
  return out;
}

// Multiplies each (sample, channel) series by one factor drawn from Normal(1, sigma^2).
template <typename Scalar>
Sequences<Scalar> scale(const Sequences<Scalar>& x, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("scale: sigma must be nonnegative");
  Sequences<Scalar> out = x;
  if (sigma == 0.0) return out;
  for (Index n = 0; n < x.count; ++n) {
    auto seq = out.sequence(n);
    for (Index c = 0; c < x.channels(); ++c) seq.col(c) *= static_cast<Scalar>(rng.normal(1.0, sigma));
  }
  return out;
}

// Segment boundaries: `segments` contiguous pieces, the remainder spread over the leading ones.
inline std::vector<std::pair<Index, Index>> segment_bounds(Index length, Index segments) {
  std::vector<std::pair<Index, Index>> b;
  const Index base = length / segments, extra = length % segments;
  Index start = 0;
  for (Index s = 0; s < segments; ++s) {
    const Index len = base + (s < extra ? 1 : 0);
    b.emplace_back(start, len);
    start += len;
  }
  return b;
}

// Reorders the segments of every sample by `order` (output segment i = input segment order[i]).
template <typename Scalar>
Sequences<Scalar> permute_with(const Sequences<Scalar>& x, const std::vector<std::vector<std::size_t>>& orders, Index segments) {
  if (segments < 1 || segments > x.length) throw std::invalid_argument("permute: num_segments must be in [1, W]");
  if (static_cast<Index>(orders.size()) != x.count) throw std::invalid_argument("permute: need one order per sample");
  const auto bounds = segment_bounds(x.length, segments);
  Sequences<Scalar> out(x.count, x.length, x.channels());
  for (Index n = 0; n < x.count; ++n) {
    const auto& order = orders[static_cast<std::size_t>(n)];
    if (static_cast<Index>(order.size()) != segments) throw std::invalid_argument("permute: order length must equal num_segments");
    Index dst = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto [start, len] = bounds.at(order[i]);
      out.sequence(n).middleRows(dst, len) = x.sequence(n).middleRows(start, len);
      dst += len;
    }
  }
  return out;
}

// Random segment permutation; one permutation per sample shared across its channels.
template <typename Scalar>
Sequences<Scalar> permute(const Sequences<Scalar>& x, Index segments, Rng& rng) {
  if (segments < 1 || segments > x.length) throw std::invalid_argument("permute: num_segments must be in [1, W]");
  std::vector<std::vector<std::size_t>> orders;
  orders.reserve(static_cast<std::size_t>(x.count));
  for (Index n = 0; n < x.count; ++n) orders.push_back(rng.permutation(static_cast<std::size_t>(segments)));
  return permute_with(x, orders, segments);
}

template <typename Scalar>
Sequences<Scalar> apply(const Sequences<Scalar>& x, const AugmentationOp& op, Rng& rng) {
  switch (op.kind) {
    case Kind::original: return x;
    case Kind::jitter: return jitter(x, op.sigma, rng);
    case Kind::scale: return scale(x, op.sigma, rng);
    case Kind::permute: return permute(x, op.num_segments, rng);
  }
  throw std::logic_error("unreachable augmentation kind");
}

template <typename Scalar>
std::pair<Sequences<Scalar>, Sequences<Scalar>> make_views(const Sequences<Scalar>& x, const AugmentationOp& a, const AugmentationOp& b,
                                                           Rng& rng) {
  auto va = apply(x, a, rng);
  auto vb = apply(x, b, rng);
  return {std::move(va), std::move(vb)};
}

}  // namespace autocl::augment

#endif  // AUTOCL_AUGMENT_HPP
