#ifndef AUTOCL_PIPELINE_HPP
#define AUTOCL_PIPELINE_HPP

#include "autocl/losses.hpp"
#include "autocl/models.hpp"

namespace autocl {

template <typename Scalar>
struct StreamCache {
  typename Encoder<Scalar>::Cache encoder;
  typename Projector<Scalar>::Cache projector;
};

template <typename Scalar>
struct AutoclForward {
  ForwardTrace<Scalar> trace;
  StreamCache<Scalar> first, second;
  typename Generator<Scalar>::Cache generator;
  bool generator_bypassed = false;
};

template <typename Scalar>
Mat<Scalar> stream_forward(AutoclModel<Scalar>& model, const Sequences<Scalar>& x, bool train, Rng* rng, StreamCache<Scalar>& cache,
                           Mat<Scalar>* z_out = nullptr) {
  Mat<Scalar> z = model.encoder.forward(x, train, rng, cache.encoder);
  Mat<Scalar> y = model.projector.forward(z, train, cache.projector);
  if (z_out != nullptr) *z_out = std::move(z);
  return y;
}

template <typename Scalar>
Sequences<Scalar> stream_backward(AutoclModel<Scalar>& model, const StreamCache<Scalar>& cache, const Mat<Scalar>& dy, bool accumulate) {
  return model.encoder.backward(cache.encoder, model.projector.backward(cache.projector, dy, accumulate), accumulate);
}

// First stream -> generator -> second stream. A non-null `x_gen_override`
// replaces the generator output with a constant (no path back to the first stream).
template <typename Scalar>
AutoclForward<Scalar> autocl_forward(AutoclModel<Scalar>& model, const Sequences<Scalar>& x, bool train, Rng* rng,
                                     const Sequences<Scalar>* x_gen_override = nullptr) {
  AutoclForward<Scalar> f;
  auto& t = f.trace;
  t.y = stream_forward(model, x, train, rng, f.first, &t.z);
  if (x_gen_override != nullptr) {
    if (!same_shape(*x_gen_override, x)) throw std::invalid_argument("autocl_forward: override shape differs from the input");
    t.x_gen = *x_gen_override;
    f.generator_bypassed = true;
  } else if (model.spec.variant == GeneratorVariant::embedding) {
    t.x_gen = model.generator.forward_embedding(t.y, train, f.generator);
  } else {
    t.x_gen = model.generator.forward_data(x, train, f.generator);
  }
  t.y_gen = stream_forward(model, t.x_gen, train, rng, f.second, &t.z_gen);
  if (!t.y.allFinite() || !t.y_gen.allFinite()) throw std::domain_error("autocl_forward: non-finite projection");
  return f;
}

// Evaluates the combined loss and accumulates gradients into the model.
//
// Under stop-gradient the NT-Xent copy of y receives no gradient. In chain
// mode the second stream additionally acts as a pure function of x_gen, so
// theta is reached only through generator -> first stream.
template <typename Scalar>
AutoclLossResult<Scalar> autocl_backward(AutoclModel<Scalar>& model, const AutoclForward<Scalar>& f, const Sequences<Scalar>& x,
                                         const LossConfig& cfg) {
  auto loss = autocl_loss(f.trace, x, cfg);
  const bool second_stream_params = !(cfg.sg_enabled && cfg.sg_mode == StopGradientMode::chain);

  Sequences<Scalar> dx_gen = stream_backward(model, f.second, loss.grad_y_gen, second_stream_params);
  dx_gen.values += loss.grad_x_gen.values;

  Mat<Scalar> dy = loss.grad_y_used;
  if (!f.generator_bypassed) {
    if (model.spec.variant == GeneratorVariant::embedding) {
      dy += model.generator.backward_embedding(f.generator, dx_gen, true);
    } else {
      model.generator.backward_data(f.generator, dx_gen, true);
    }
  }
  if (!dy.isZero(0)) stream_backward(model, f.first, dy, true);
  return loss;
}

template <typename Scalar>
AutoclLossResult<Scalar> autocl_step(AutoclModel<Scalar>& model, const Sequences<Scalar>& x, const LossConfig& cfg, Rng& rng,
                                     const Sequences<Scalar>* x_gen_override = nullptr) {
  auto f = autocl_forward(model, x, true, &rng, x_gen_override);
  return autocl_backward(model, f, x, cfg);
}

// SimCLR baseline: both augmented views through the shared backbone, NT-Xent only.
template <typename Scalar>
Scalar simclr_step(AutoclModel<Scalar>& model, const Sequences<Scalar>& view_a, const Sequences<Scalar>& view_b, const LossConfig& cfg,
                   Rng& rng) {
  StreamCache<Scalar> ca, cb;
  Mat<Scalar> ya = stream_forward(model, view_a, true, &rng, ca);
  Mat<Scalar> yb = stream_forward(model, view_b, true, &rng, cb);
  auto nt = nt_xent_with_grad<Scalar>(ya, yb, static_cast<Scalar>(cfg.tau), cfg.denominator_mode);
  stream_backward(model, cb, nt.grad_second, true);
  stream_backward(model, ca, nt.grad_first, true);
  return nt.value;
}

}  // namespace autocl

#endif  // AUTOCL_PIPELINE_HPP
