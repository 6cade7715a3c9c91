#ifndef AUTOCL_MODELS_HPP
#define AUTOCL_MODELS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "autocl/gru.hpp"
#include "autocl/layers.hpp"

namespace autocl {

enum class GeneratorVariant { embedding, data };  // AutoCL-E, AutoCL-D

struct ModelSpec {
  Index window = 128;
  Index channels = 9;
  std::vector<Index> conv_channels{32, 64, 128};
  Index conv_kernel = 8;
  Index pool = 2;
  double dropout = 0.1;
  Index proj_hidden = 256;
  Index proj_out = 128;
  Index gru_layers = 3;
  Index gru_hidden = 0;  // 0 means 4 * channels
  bool projector_softmax = true;
  GeneratorVariant variant = GeneratorVariant::embedding;
  nn::BiMerge gru_merge = nn::BiMerge::sum;
  Index head_hidden = 128;

  Index hidden_size() const { return gru_hidden > 0 ? gru_hidden : 4 * channels; }
  Index embedding_size() const { return conv_channels.back(); }

  void validate() const {
    if (window < 2 || channels < 1) throw std::invalid_argument("ModelSpec: window must be >= 2 and channels >= 1");
    if (conv_channels.empty()) throw std::invalid_argument("ModelSpec: conv_channels must not be empty");
    for (Index c : conv_channels)
      if (c < 1) throw std::invalid_argument("ModelSpec: conv channel widths must be positive");
    if (conv_kernel < 1 || pool < 1) throw std::invalid_argument("ModelSpec: conv_kernel and pool must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("ModelSpec: dropout must be in [0, 1)");
    if (proj_hidden < 1 || proj_out < 1 || gru_layers < 1 || head_hidden < 1)
      throw std::invalid_argument("ModelSpec: layer sizes must be positive");
    Index len = window;
    for (std::size_t i = 0; i < conv_channels.size(); ++i) len /= pool;
    if (len < 1) throw std::invalid_argument("ModelSpec: window too short for the pooling stack");
  }
};

inline std::string to_string(GeneratorVariant v) { return v == GeneratorVariant::embedding ? "E" : "D"; }

inline GeneratorVariant parse_variant(const std::string& s) {
  if (s == "E" || s == "e") return GeneratorVariant::embedding;
  if (s == "D" || s == "d") return GeneratorVariant::data;
  throw std::invalid_argument("unknown generator variant '" + s + "' (expected E or D)");
}

// Fully convolutional encoder f: [N, W, C] -> [N, D_z].
// Each block: conv -> batch norm -> relu -> max pool -> dropout; then a global max pool.
template <typename Scalar>
class Encoder {
 public:
  struct BlockCache {
    typename nn::Conv1d<Scalar>::Cache conv;
    typename nn::BatchNorm<Scalar>::Cache bn;
    Mat<Scalar> activated;
    nn::MaxPoolCache<Scalar> pool;
    Mat<Scalar> mask;
    Index length = 0;
  };
  struct Cache {
    std::vector<BlockCache> blocks;
    std::vector<Index> argmax;
    Index final_length = 0;
  };

  Encoder() = default;
  explicit Encoder(const ModelSpec& spec) : pool_(spec.pool), dropout_(spec.dropout) {
    Index in = spec.channels;
    for (std::size_t i = 0; i < spec.conv_channels.size(); ++i) {
      const std::string name = "encoder.block" + std::to_string(i);
      convs_.emplace_back(name + ".conv", in, spec.conv_channels[i], spec.conv_kernel);
      norms_.emplace_back(name + ".bn", spec.conv_channels[i]);
      in = spec.conv_channels[i];
    }
  }

  void init(Rng& rng) {
    for (auto& c : convs_) c.init(rng);
    for (auto& b : norms_) b.init();
  }

  Mat<Scalar> forward(const Sequences<Scalar>& x, bool train, Rng* rng, Cache& cache) {
    if (!x.values.allFinite()) throw std::domain_error("encoder: input contains non-finite values");
    cache.blocks.resize(convs_.size());
    Sequences<Scalar> h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      auto& bc = cache.blocks[i];
      bc.length = h.length;
      Sequences<Scalar> c = convs_[i].forward(h, bc.conv);
      bc.activated = nn::relu<Scalar>(norms_[i].forward(c.values, train, bc.bn));
      h = nn::max_pool(Sequences<Scalar>(c.count, c.length, bc.activated), pool_, bc.pool);
      if (train && dropout_ > 0.0) {
        if (rng == nullptr) throw std::invalid_argument("encoder: training-mode dropout needs a random stream");
        bc.mask = nn::dropout_mask<Scalar>(h.values.rows(), h.values.cols(), dropout_, *rng);
        h.values.array() *= bc.mask.array();
      } else {
        bc.mask.resize(0, 0);
      }
    }
    cache.final_length = h.length;
    return nn::global_max_pool(h, cache.argmax);
  }

  // Returns the gradient with respect to the encoder input.
  Sequences<Scalar> backward(const Cache& cache, const Mat<Scalar>& dz, bool accumulate) {
    Sequences<Scalar> dh = nn::global_max_pool_backward<Scalar>(cache.argmax, cache.final_length, dz);
    for (std::size_t i = convs_.size(); i-- > 0;) {
      const auto& bc = cache.blocks[i];
      if (bc.mask.size() > 0) dh.values.array() *= bc.mask.array();
      Sequences<Scalar> dpre = nn::max_pool_backward(bc.pool, dh);
      dpre.values = norms_[i].backward(bc.bn, nn::relu_backward<Scalar>(bc.activated, dpre.values), accumulate);
      dh = convs_[i].backward(bc.conv, dpre, accumulate);
    }
    return dh;
  }

  void visit(const nn::ParamVisitor<Scalar>& f) {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].visit(f);
      norms_[i].visit(f);
    }
  }
  void visit_buffers(const nn::BufferVisitor<Scalar>& f) {
    for (auto& b : norms_) b.visit_buffers(f);
  }

 private:
  Index pool_ = 2;
  double dropout_ = 0.0;
  std::vector<nn::Conv1d<Scalar>> convs_;
  std::vector<nn::BatchNorm<Scalar>> norms_;
};

// Projector p: FC -> batch norm -> relu -> FC -> optional softmax.
template <typename Scalar>
class Projector {
 public:
  struct Cache {
    Mat<Scalar> input;
    typename nn::BatchNorm<Scalar>::Cache bn;
    Mat<Scalar> activated;
    Mat<Scalar> output;
  };

  Projector() = default;
  explicit Projector(const ModelSpec& spec)
      : fc1_("projector.fc1", spec.embedding_size(), spec.proj_hidden),
        bn_("projector.bn", spec.proj_hidden),
        fc2_("projector.fc2", spec.proj_hidden, spec.proj_out),
        softmax_(spec.projector_softmax) {}

  void init(Rng& rng) {
    fc1_.init(rng);
    bn_.init();
    fc2_.init(rng);
  }

  Mat<Scalar> forward(const Mat<Scalar>& z, bool train, Cache& cache) {
    cache.input = z;
    cache.activated = nn::relu<Scalar>(bn_.forward(fc1_.forward(z), train, cache.bn));
    Mat<Scalar> logits = fc2_.forward(cache.activated);
    cache.output = softmax_ ? nn::softmax_rows<Scalar>(logits) : logits;
    return cache.output;
  }

  Mat<Scalar> backward(const Cache& cache, const Mat<Scalar>& dy, bool accumulate) {
    Mat<Scalar> dlogits = softmax_ ? nn::softmax_rows_backward<Scalar>(cache.output, dy) : dy;
    Mat<Scalar> da = fc2_.backward(cache.activated, dlogits, accumulate);
    Mat<Scalar> dh = bn_.backward(cache.bn, nn::relu_backward<Scalar>(cache.activated, da), accumulate);
    return fc1_.backward(cache.input, dh, accumulate);
  }

  void visit(const nn::ParamVisitor<Scalar>& f) {
    fc1_.visit(f);
    bn_.visit(f);
    fc2_.visit(f);
  }
  void visit_buffers(const nn::BufferVisitor<Scalar>& f) { bn_.visit_buffers(f); }

 private:
  nn::Linear<Scalar> fc1_;
  nn::BatchNorm<Scalar> bn_;
  nn::Linear<Scalar> fc2_;
  bool softmax_ = true;
};

// Generator g. Variant E conditions on the projection y (batch norm, relu,
// repeated over time); variant D on the batch-normalized raw window. Both
// run a stacked BiGRU and a C-group pointwise head back to C channels.
template <typename Scalar>
class Generator {
 public:
  struct Cache {
    typename nn::BatchNorm<Scalar>::Cache bn;
    Mat<Scalar> activated;  // variant E only
    typename nn::BiGru<Scalar>::Cache gru;
    Mat<Scalar> gru_out;
    Index count = 0;
  };

  Generator() = default;
  explicit Generator(const ModelSpec& spec)
      : variant_(spec.variant), window_(spec.window), channels_(spec.channels), proj_out_(spec.proj_out) {
    const Index in = variant_ == GeneratorVariant::embedding ? spec.proj_out : spec.channels;
    bn_ = nn::BatchNorm<Scalar>("generator.bn_in", in);
    gru_ = nn::BiGru<Scalar>("generator.gru", in, spec.hidden_size(), spec.gru_layers, spec.gru_merge);
    const Index width = gru_.output_features();
    if (width % spec.channels != 0) throw std::invalid_argument("generator: GRU output width must be divisible by channels");
    head_ = nn::GroupedPointwise<Scalar>("generator.head", spec.channels, width / spec.channels);
  }

  void init(Rng& rng) {
    bn_.init();
    gru_.init(rng);
    head_.init(rng);
  }

  GeneratorVariant variant() const { return variant_; }

  // Variant E: y [N, proj_out] -> [N, W, C].
  Sequences<Scalar> forward_embedding(const Mat<Scalar>& y, bool train, Cache& cache) {
    if (variant_ != GeneratorVariant::embedding) throw std::invalid_argument("generator: variant D expects raw windows, got an embedding");
    if (y.cols() != proj_out_) throw std::invalid_argument("generator: embedding width does not match proj_out");
    const Index N = y.rows();
    cache.count = N;
    cache.activated = nn::relu<Scalar>(bn_.forward(y, train, cache.bn));
    Mat<Scalar> tiled = cache.activated.replicate(window_, 1);  // time-major: row t*N + n
    return run_recurrent(tiled, cache);
  }

  // Variant D: x [N, W, C] -> [N, W, C].
  Sequences<Scalar> forward_data(const Sequences<Scalar>& x, bool train, Cache& cache) {
    if (variant_ != GeneratorVariant::data) throw std::invalid_argument("generator: variant E expects an embedding, got raw windows");
    if (x.channels() != channels_ || x.length != window_) throw std::invalid_argument("generator: window shape does not match the model");
    cache.count = x.count;
    Sequences<Scalar> normed(x.count, x.length, bn_.forward(x.values, train, cache.bn));
    return run_recurrent(to_time_major(normed), cache);
  }

  // Gradient with respect to y (variant E).
  Mat<Scalar> backward_embedding(const Cache& cache, const Sequences<Scalar>& dx_gen, bool accumulate) {
    Mat<Scalar> dtiled = backward_recurrent(cache, dx_gen, accumulate);
    const Index N = cache.count;
    Mat<Scalar> dact = Mat<Scalar>::Zero(N, dtiled.cols());
    for (Index t = 0; t < window_; ++t) dact += dtiled.middleRows(t * N, N);
    return bn_.backward(cache.bn, nn::relu_backward<Scalar>(cache.activated, dact), accumulate);
  }

  // Gradient with respect to the raw window (variant D).
  Sequences<Scalar> backward_data(const Cache& cache, const Sequences<Scalar>& dx_gen, bool accumulate) {
    Mat<Scalar> dnormed = backward_recurrent(cache, dx_gen, accumulate);
    Sequences<Scalar> d = from_time_major(dnormed, cache.count, window_);
    d.values = bn_.backward(cache.bn, d.values, accumulate);
    return d;
  }

  void visit(const nn::ParamVisitor<Scalar>& f) {
    bn_.visit(f);
    gru_.visit(f);
    head_.visit(f);
  }
  void visit_buffers(const nn::BufferVisitor<Scalar>& f) { bn_.visit_buffers(f); }

  nn::GroupedPointwise<Scalar>& head() { return head_; }

 private:
  Sequences<Scalar> run_recurrent(const Mat<Scalar>& time_major, Cache& cache) {
    cache.gru_out = gru_.forward(time_major, cache.count, cache.gru);
    return from_time_major(head_.forward(cache.gru_out), cache.count, window_);
  }

  Mat<Scalar> backward_recurrent(const Cache& cache, const Sequences<Scalar>& dx_gen, bool accumulate) {
    Mat<Scalar> dout = head_.backward(cache.gru_out, to_time_major(dx_gen), accumulate);
    return gru_.backward(cache.gru, dout, cache.count, accumulate);
  }

  GeneratorVariant variant_ = GeneratorVariant::embedding;
  Index window_ = 0;
  Index channels_ = 0;
  Index proj_out_ = 0;
  nn::BatchNorm<Scalar> bn_;
  nn::BiGru<Scalar> gru_;
  nn::GroupedPointwise<Scalar> head_;
};

// Few-shot prediction head: FC -> batch norm -> relu -> FC -> softmax.
template <typename Scalar>
class PredictionHead {
 public:
  struct Cache {
    Mat<Scalar> input;
    typename nn::BatchNorm<Scalar>::Cache bn;
    Mat<Scalar> activated;
    Mat<Scalar> probs;
  };

  PredictionHead() = default;
  PredictionHead(Index in, Index hidden, Index classes)
      : fc1_("head.fc1", in, hidden), bn_("head.bn", hidden), fc2_("head.fc2", hidden, classes) {
    if (classes < 1) throw std::invalid_argument("prediction head needs at least one class");
  }

  void init(Rng& rng) {
    fc1_.init(rng);
    bn_.init();
    fc2_.init(rng);
  }

  Index num_classes() const { return fc2_.out_features(); }

  Mat<Scalar> forward(const Mat<Scalar>& z, bool train, Cache& cache) {
    cache.input = z;
    cache.activated = nn::relu<Scalar>(bn_.forward(fc1_.forward(z), train, cache.bn));
    cache.probs = nn::softmax_rows<Scalar>(fc2_.forward(cache.activated));
    return cache.probs;
  }

  Mat<Scalar> predict(const Mat<Scalar>& z) {
    Cache cache;
    return forward(z, false, cache);
  }

  // Mean cross-entropy against integer labels; accumulates gradients.
  Scalar backward_cross_entropy(const Cache& cache, const std::vector<std::int32_t>& labels) {
    const Index N = cache.probs.rows();
    Mat<Scalar> dlogits = cache.probs;
    Scalar loss = 0;
    for (Index i = 0; i < N; ++i) {
      const auto k = static_cast<Index>(labels[static_cast<std::size_t>(i)]);
      loss -= std::log(std::max(cache.probs(i, k), std::numeric_limits<Scalar>::min()));
      dlogits(i, k) -= 1;
    }
    dlogits /= static_cast<Scalar>(N);
    Mat<Scalar> da = fc2_.backward(cache.activated, dlogits, true);
    fc1_.backward(cache.input, bn_.backward(cache.bn, nn::relu_backward<Scalar>(cache.activated, da), true), true);
    return loss / static_cast<Scalar>(N);
  }

  void visit(const nn::ParamVisitor<Scalar>& f) {
    fc1_.visit(f);
    bn_.visit(f);
    fc2_.visit(f);
  }
  void visit_buffers(const nn::BufferVisitor<Scalar>& f) { bn_.visit_buffers(f); }

 private:
  nn::Linear<Scalar> fc1_;
  nn::BatchNorm<Scalar> bn_;
  nn::Linear<Scalar> fc2_;
};

// The Siamese backbone (theta = encoder + projector) and the generator (xi).
// Both streams call the same encoder/projector objects, so the weights are
// shared by construction.
template <typename Scalar>
struct AutoclModel {
  ModelSpec spec;
  Encoder<Scalar> encoder;
  Projector<Scalar> projector;
  Generator<Scalar> generator;

  AutoclModel() = default;
  explicit AutoclModel(const ModelSpec& s) : spec(s), encoder(s), projector(s), generator(s) { s.validate(); }

  void visit_theta(const nn::ParamVisitor<Scalar>& f) {
    encoder.visit(f);
    projector.visit(f);
  }
  void visit_xi(const nn::ParamVisitor<Scalar>& f) { generator.visit(f); }
  void visit_params(const nn::ParamVisitor<Scalar>& f) {
    visit_theta(f);
    visit_xi(f);
  }
  void visit_buffers(const nn::BufferVisitor<Scalar>& f) {
    encoder.visit_buffers(f);
    projector.visit_buffers(f);
    generator.visit_buffers(f);
  }
  void zero_grad() {
    visit_params([](nn::Param<Scalar>& p) { p.zero_grad(); });
  }
  Index parameter_count() {
    Index n = 0;
    visit_params([&](nn::Param<Scalar>& p) { n += p.value.size(); });
    return n;
  }
};

template <typename Scalar>
AutoclModel<Scalar> init_model(const ModelSpec& spec, std::uint64_t seed) {
  AutoclModel<Scalar> model(spec);
  Rng rng(seed);
  model.encoder.init(rng);
  model.projector.init(rng);
  model.generator.init(rng);
  return model;
}

// Convenience: eval-mode encoder features, processed in chunks.
template <typename Scalar>
Mat<Scalar> encode(Encoder<Scalar>& encoder, const Sequences<Scalar>& x, Index chunk = 256) {
  Mat<Scalar> out;
  for (Index start = 0; start < x.count; start += chunk) {
    const Index n = std::min(chunk, x.count - start);
    Sequences<Scalar> part(n, x.length, x.values.middleRows(start * x.length, n * x.length).eval());
    typename Encoder<Scalar>::Cache cache;
    Mat<Scalar> z = encoder.forward(part, false, nullptr, cache);
    if (out.size() == 0) out.resize(x.count, z.cols());
    out.middleRows(start, n) = z;
  }
  return out;
}

}  // namespace autocl

#endif  // AUTOCL_MODELS_HPP
