#ifndef AUTOCL_LOSSES_HPP
#define AUTOCL_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "autocl/tensor.hpp"

namespace autocl {

// Which embeddings enter the NT-Xent denominator.
//   symmetric: all 2N anchors, each normalized over the other 2N-1 embeddings.
//   first_view_only: N anchors from the first view, normalized over the other first-view embeddings.
enum class DenominatorMode { symmetric, first_view_only };

// How the Pearson term flattens the batch.
enum class CorrelationMode { per_sample, whole_batch };

// How stop-gradient restricts the backward pass.
//   chain: the loss reaches theta only through generator -> first stream;
//          the second stream contributes input gradients but no parameter gradients.
//   detach: only the NT-Xent copy of y is blocked; the second stream updates theta directly.
enum class StopGradientMode { chain, detach };

struct LossConfig {
  double tau = 0.1;
  bool cr_enabled = true;
  double cr_weight = 1.0;
  bool sg_enabled = true;
  StopGradientMode sg_mode = StopGradientMode::chain;
  DenominatorMode denominator_mode = DenominatorMode::symmetric;
  CorrelationMode correlation_mode = CorrelationMode::per_sample;

  void validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("LossConfig: tau must be positive");
    if (!(cr_weight >= 0.0)) throw std::invalid_argument("LossConfig: cr_weight must be nonnegative");
  }
};

template <typename Scalar>
struct NtXentResult {
  Scalar value = 0;
  Mat<Scalar> grad_first;   // d loss / d y1
  Mat<Scalar> grad_second;  // d loss / d y2
};

namespace detail {

template <typename Scalar>
Vec<Scalar> row_norms_checked(const Mat<Scalar>& y, const char* what) {
  Vec<Scalar> norms = y.rowwise().norm();
  for (Index i = 0; i < norms.size(); ++i)
    if (!(norms(i) > Scalar(0))) throw std::domain_error(std::string("nt_xent: zero-norm row ") + std::to_string(i) + " in " + what);
  return norms;
}

}  // namespace detail

// NT-Xent over cosine similarities with temperature tau, averaged over anchors.
template <typename Scalar>
NtXentResult<Scalar> nt_xent_with_grad(const Mat<Scalar>& y1, const Mat<Scalar>& y2, Scalar tau,
                                       DenominatorMode mode = DenominatorMode::symmetric) {
  const Index N = y1.rows();
  if (y2.rows() != N || y2.cols() != y1.cols()) throw std::invalid_argument("nt_xent: views must have equal shape");
  if (N < 2) throw std::invalid_argument("nt_xent: need at least 2 samples per batch (no negatives otherwise)");
  if (!(tau > Scalar(0))) throw std::invalid_argument("nt_xent: tau must be positive");

  Mat<Scalar> u(2 * N, y1.cols());
  u << y1, y2;
  Vec<Scalar> norms(2 * N);
  norms << detail::row_norms_checked(y1, "first view"), detail::row_norms_checked(y2, "second view");
  Mat<Scalar> un = u.array().colwise() / norms.array();
  Mat<Scalar> sim = (un * un.transpose()) / tau;

  const bool symmetric = mode == DenominatorMode::symmetric;
  const Index anchors = symmetric ? 2 * N : N;
  const Index pool = symmetric ? 2 * N : N;  // candidate denominator indices [0, pool)
  Mat<Scalar> dsim = Mat<Scalar>::Zero(2 * N, 2 * N);
  Scalar total = 0;
  for (Index a = 0; a < anchors; ++a) {
    const Index pos = a < N ? a + N : a - N;
    Scalar row_max = -std::numeric_limits<Scalar>::infinity();
    for (Index k = 0; k < pool; ++k)
      if (k != a) row_max = std::max(row_max, sim(a, k));
    Scalar denom = 0;
    for (Index k = 0; k < pool; ++k)
      if (k != a) denom += std::exp(sim(a, k) - row_max);
    total += -sim(a, pos) + row_max + std::log(denom);
    for (Index k = 0; k < pool; ++k)
      if (k != a) dsim(a, k) += std::exp(sim(a, k) - row_max) / denom;
    dsim(a, pos) -= 1;
  }
  const Scalar scale = Scalar(1) / static_cast<Scalar>(anchors);
  dsim *= scale;

  // sim = un un^T / tau  =>  d un = (dsim + dsim^T) un / tau
  Mat<Scalar> dun = ((dsim + dsim.transpose()) * un) / tau;
  // un = u / |u|  =>  du = (dun - un <un, dun>) / |u|
  Vec<Scalar> proj = (un.array() * dun.array()).rowwise().sum();
  Mat<Scalar> du = (dun - (un.array().colwise() * proj.array()).matrix()).array().colwise() / norms.array();

  NtXentResult<Scalar> out;
  out.value = total * scale;
  out.grad_first = du.topRows(N);
  out.grad_second = du.bottomRows(N);
  return out;
}

template <typename Scalar>
Scalar nt_xent(const Mat<Scalar>& y1, const Mat<Scalar>& y2, Scalar tau, DenominatorMode mode = DenominatorMode::symmetric) {
  return nt_xent_with_grad(y1, y2, tau, mode).value;
}

template <typename Scalar>
struct PearsonResult {
  Scalar value = 0;                // batch-mean correlation
  Scalar mean_abs = 0;             // mean |r| over samples (equals |value| in whole-batch mode)
  Sequences<Scalar> grad_generated;  // d value / d x_gen
};

namespace detail {

// Pearson r between two equal-length blocks and d r / d b.
template <typename Scalar, typename A, typename B>
Scalar pearson_block(const A& a_raw, const B& b_raw, Mat<Scalar>* grad_b, Index sample) {
  const auto m = static_cast<Scalar>(a_raw.size());
  Mat<Scalar> a = a_raw.array() - a_raw.sum() / m;
  Mat<Scalar> b = b_raw.array() - b_raw.sum() / m;
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (!(na > Scalar(0)) || !(nb > Scalar(0)))
    throw std::domain_error("pearson_term: zero-variance sample at index " + std::to_string(sample));
  const Scalar r = std::clamp((a.array() * b.array()).sum() / (na * nb), Scalar(-1), Scalar(1));
  if (grad_b != nullptr) *grad_b = a / (na * nb) - (r / (nb * nb)) * b;
  return r;
}

}  // namespace detail

// Pearson correlation between each original window and its generated
// counterpart, flattened over [W, C] and averaged over the batch.
template <typename Scalar>
PearsonResult<Scalar> pearson_term_with_grad(const Sequences<Scalar>& x, const Sequences<Scalar>& x_gen,
                                             CorrelationMode mode = CorrelationMode::per_sample, bool want_grad = true) {
  if (!same_shape(x, x_gen)) throw std::invalid_argument("pearson_term: shapes differ");
  PearsonResult<Scalar> out;
  if (want_grad) out.grad_generated = Sequences<Scalar>(x.count, x.length, x.channels());
  Mat<Scalar> g;
  if (mode == CorrelationMode::whole_batch) {
    out.value = detail::pearson_block<Scalar>(x.values, x_gen.values, want_grad ? &g : nullptr, 0);
    out.mean_abs = std::abs(out.value);
    if (want_grad) out.grad_generated.values = g;
    return out;
  }
  if (x.count < 1) throw std::invalid_argument("pearson_term: empty batch");
  const auto inv_n = Scalar(1) / static_cast<Scalar>(x.count);
  for (Index i = 0; i < x.count; ++i) {
    const Scalar r = detail::pearson_block<Scalar>(x.sequence(i), x_gen.sequence(i), want_grad ? &g : nullptr, i);
    out.value += r * inv_n;
    out.mean_abs += std::abs(r) * inv_n;
    if (want_grad) out.grad_generated.sequence(i) = g * inv_n;
  }
  return out;
}

template <typename Scalar>
Scalar pearson_term(const Sequences<Scalar>& x, const Sequences<Scalar>& x_gen, CorrelationMode mode = CorrelationMode::per_sample) {
  return pearson_term_with_grad(x, x_gen, mode, false).value;
}

// The pieces of a forward pass the combined loss consumes.
template <typename Scalar>
struct ForwardTrace {
  Mat<Scalar> z, y;          // first stream
  Sequences<Scalar> x_gen;   // generated windows
  Mat<Scalar> z_gen, y_gen;  // second stream
};

template <typename Scalar>
struct AutoclLossResult {
  Scalar value = 0;
  Scalar nt_xent = 0;
  std::optional<Scalar> pearson;  // present iff CR is enabled
  Scalar mean_pearson = 0;        // diagnostics, always computed
  Scalar mean_abs_pearson = 0;
  Mat<Scalar> grad_y_used;        // NT-Xent slot for y; exactly zero under stop-gradient
  Mat<Scalar> grad_y_gen;
  Sequences<Scalar> grad_x_gen;   // from the CR term only
};

// NT-Xent between the projections of the two streams plus the weighted Pearson term.
template <typename Scalar>
AutoclLossResult<Scalar> autocl_loss(const ForwardTrace<Scalar>& trace, const Sequences<Scalar>& x, const LossConfig& cfg) {
  cfg.validate();
  AutoclLossResult<Scalar> out;
  auto nt = nt_xent_with_grad<Scalar>(trace.y, trace.y_gen, static_cast<Scalar>(cfg.tau), cfg.denominator_mode);
  out.nt_xent = nt.value;
  out.grad_y_gen = std::move(nt.grad_second);
  out.grad_y_used = cfg.sg_enabled ? Mat<Scalar>::Zero(trace.y.rows(), trace.y.cols()) : std::move(nt.grad_first);

  auto pr = pearson_term_with_grad(x, trace.x_gen, cfg.correlation_mode, cfg.cr_enabled);
  out.mean_pearson = pr.value;
  out.mean_abs_pearson = pr.mean_abs;
  out.value = out.nt_xent;
  if (cfg.cr_enabled) {
    const auto w = static_cast<Scalar>(cfg.cr_weight);
    out.pearson = pr.value;
    out.value += w * pr.value;
    out.grad_x_gen = std::move(pr.grad_generated);
    out.grad_x_gen.values *= w;
  } else {
    out.grad_x_gen = Sequences<Scalar>(x.count, x.length, x.channels());
  }
  return out;
}

}  // namespace autocl

#endif  // AUTOCL_LOSSES_HPP
