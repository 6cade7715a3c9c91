#ifndef AUTOCL_OPTIM_HPP
#define AUTOCL_OPTIM_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "autocl/layers.hpp"

namespace autocl {

enum class WeightDecayMode { decoupled, l2 };

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  WeightDecayMode decay_mode = WeightDecayMode::decoupled;
};

template <typename Scalar>
struct AdamState {
  long step = 0;
  std::vector<Mat<Scalar>> m, v;
};

template <typename Scalar>
using ParamRefs = std::vector<nn::Param<Scalar>*>;

// One Adam update over all parameters in `params` (moment slots follow list order).
template <typename Scalar>
void adam_step(const ParamRefs<Scalar>& params, AdamState<Scalar>& state, const AdamConfig& cfg) {
  for (const auto* p : params)
    if (!p->grad.allFinite()) throw std::domain_error("adam_step: non-finite gradient in " + p->name);
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: parameter list changed between steps");

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto lr = static_cast<Scalar>(cfg.lr);
  const auto wd = static_cast<Scalar>(cfg.weight_decay);
  const auto eps = static_cast<Scalar>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    Mat<Scalar> g = p.grad;
    if (cfg.decay_mode == WeightDecayMode::l2 && wd != Scalar(0)) g += wd * p.value;
    state.m[i] = b1 * state.m[i] + (1 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1 - b2) * g.cwiseAbs2();
    auto m_hat = state.m[i].array() / static_cast<Scalar>(bc1);
    auto v_hat = state.v[i].array() / static_cast<Scalar>(bc2);
    if (cfg.decay_mode == WeightDecayMode::decoupled && wd != Scalar(0)) p.value *= (1 - lr * wd);
    p.value.array() -= lr * m_hat / (v_hat.sqrt() + eps);
  }
}

// Rescales gradients so their joint L2 norm is at most max_norm; returns the pre-clip norm.
template <typename Scalar>
double clip_grad_norm(const ParamRefs<Scalar>& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) sq += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const auto s = static_cast<Scalar>(max_norm / norm);
    for (auto* p : params) p->grad *= s;
  }
  return norm;
}

}  // namespace autocl

#endif  // AUTOCL_OPTIM_HPP
