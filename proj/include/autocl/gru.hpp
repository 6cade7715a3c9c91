#ifndef AUTOCL_GRU_HPP
#define AUTOCL_GRU_HPP

#include <string>
#include <vector>

#include "autocl/layers.hpp"

namespace autocl::nn {

template <typename Scalar>
Mat<Scalar> sigmoid(const Mat<Scalar>& x) {
  return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
}

// Single-direction GRU with gate order (reset, update, new):
//   r = s(x Wir + bir + h Whr + bhr)
//   z = s(x Wiz + biz + h Whz + bhz)
//   n = tanh(x Win + bin + r * (h Whn + bhn))
//   h' = (1 - z) * n + z * h
// Inputs and outputs are time-major [T*N, F] matrices (row = t * N + n).
template <typename Scalar>
class GruDirection {
 public:
  struct Cache {
    Mat<Scalar> input;
    Mat<Scalar> r, z, n, hn, h_prev;  // all [T*N, H]
  };

  GruDirection() = default;
  GruDirection(const std::string& name, Index in, Index hidden, bool reverse)
      : hidden_(hidden), reverse_(reverse),
        w_ih_(name + ".w_ih", Mat<Scalar>::Zero(in, 3 * hidden)),
        w_hh_(name + ".w_hh", Mat<Scalar>::Zero(hidden, 3 * hidden)),
        b_ih_(name + ".b_ih", Mat<Scalar>::Zero(1, 3 * hidden)),
        b_hh_(name + ".b_hh", Mat<Scalar>::Zero(1, 3 * hidden)) {}

  void init(Rng& rng) {
    fill_uniform(w_ih_.value, Scalar(1) / std::sqrt(static_cast<Scalar>(w_ih_.value.rows())), rng);
    fill_uniform(w_hh_.value, Scalar(1) / std::sqrt(static_cast<Scalar>(hidden_)), rng);
    b_ih_.value.setZero();
    b_hh_.value.setZero();
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, Index batch, Cache& cache) const {
    const Index H = hidden_;
    const Index T = x.rows() / batch;
    cache.input = x;
    Mat<Scalar> gi = x * w_ih_.value;
    gi.rowwise() += b_ih_.value.row(0);
    cache.r.resize(x.rows(), H);
    cache.z.resize(x.rows(), H);
    cache.n.resize(x.rows(), H);
    cache.hn.resize(x.rows(), H);
    cache.h_prev.resize(x.rows(), H);
    Mat<Scalar> out(x.rows(), H);
    Mat<Scalar> h = Mat<Scalar>::Zero(batch, H);
    for (Index s = 0; s < T; ++s) {
      const Index t = reverse_ ? T - 1 - s : s;
      const Index r0 = t * batch;
      Mat<Scalar> gh = h * w_hh_.value;
      gh.rowwise() += b_hh_.value.row(0);
      auto gi_t = gi.middleRows(r0, batch);
      Mat<Scalar> r = sigmoid<Scalar>(gi_t.leftCols(H) + gh.leftCols(H));
      Mat<Scalar> z = sigmoid<Scalar>(gi_t.middleCols(H, H) + gh.middleCols(H, H));
      Mat<Scalar> hn = gh.rightCols(H);
      Mat<Scalar> n = (gi_t.rightCols(H).array() + r.array() * hn.array()).tanh().matrix();
      cache.h_prev.middleRows(r0, batch) = h;
      h = ((Scalar(1) - z.array()) * n.array() + z.array() * h.array()).matrix();
      cache.r.middleRows(r0, batch) = r;
      cache.z.middleRows(r0, batch) = z;
      cache.n.middleRows(r0, batch) = n;
      cache.hn.middleRows(r0, batch) = hn;
      out.middleRows(r0, batch) = h;
    }
    return out;
  }

  Mat<Scalar> backward(const Cache& cache, const Mat<Scalar>& dout, Index batch, bool accumulate) {
    const Index H = hidden_;
    const Index T = dout.rows() / batch;
    Mat<Scalar> dgi(dout.rows(), 3 * H);
    Mat<Scalar> dh_next = Mat<Scalar>::Zero(batch, H);
    Mat<Scalar> dgh(batch, 3 * H);
    for (Index s = T - 1; s >= 0; --s) {
      const Index t = reverse_ ? T - 1 - s : s;
      const Index r0 = t * batch;
      auto r = cache.r.middleRows(r0, batch).array();
      auto z = cache.z.middleRows(r0, batch).array();
      auto n = cache.n.middleRows(r0, batch).array();
      auto hn = cache.hn.middleRows(r0, batch).array();
      auto hp = cache.h_prev.middleRows(r0, batch);
      Mat<Scalar> dh = dout.middleRows(r0, batch) + dh_next;
      auto dha = dh.array();
      Mat<Scalar> dn_pre = (dha * (Scalar(1) - z) * (Scalar(1) - n * n)).matrix();
      Mat<Scalar> dz_pre = (dha * (hp.array() - n) * z * (Scalar(1) - z)).matrix();
      Mat<Scalar> dr_pre = (dn_pre.array() * hn * r * (Scalar(1) - r)).matrix();
      dgi.middleRows(r0, batch) << dr_pre, dz_pre, dn_pre;
      dgh << dr_pre, dz_pre, (dn_pre.array() * r).matrix();
      if (accumulate) {
        w_hh_.grad.noalias() += hp.transpose() * dgh;
        b_hh_.grad += dgh.colwise().sum();
      }
      dh_next = (dha * z).matrix();
      dh_next.noalias() += dgh * w_hh_.value.transpose();
    }
    if (accumulate) {
      w_ih_.grad.noalias() += cache.input.transpose() * dgi;
      b_ih_.grad += dgi.colwise().sum();
    }
    return dgi * w_ih_.value.transpose();
  }

  void visit(const ParamVisitor<Scalar>& f) {
    f(w_ih_);
    f(w_hh_);
    f(b_ih_);
    f(b_hh_);
  }

 private:
  Index hidden_ = 0;
  bool reverse_ = false;
  Param<Scalar> w_ih_;
  Param<Scalar> w_hh_;
  Param<Scalar> b_ih_;
  Param<Scalar> b_hh_;
};

enum class BiMerge { sum, concat };

// Stacked bidirectional GRU. Inner layers see the concatenated [fwd, bwd]
// output; the last layer's directions are merged by `merge`.
template <typename Scalar>
class BiGru {
 public:
  struct Cache {
    std::vector<typename GruDirection<Scalar>::Cache> fwd, bwd;
  };

  BiGru() = default;
  BiGru(const std::string& name, Index in, Index hidden, Index layers, BiMerge merge) : hidden_(hidden), merge_(merge) {
    for (Index l = 0; l < layers; ++l) {
      const Index layer_in = l == 0 ? in : 2 * hidden;
      const std::string prefix = name + ".l" + std::to_string(l);
      fwd_.emplace_back(prefix + ".fwd", layer_in, hidden, false);
      bwd_.emplace_back(prefix + ".bwd", layer_in, hidden, true);
    }
  }

  void init(Rng& rng) {
    for (std::size_t l = 0; l < fwd_.size(); ++l) {
      fwd_[l].init(rng);
      bwd_[l].init(rng);
    }
  }

  Index output_features() const { return merge_ == BiMerge::sum ? hidden_ : 2 * hidden_; }

  Mat<Scalar> forward(const Mat<Scalar>& x, Index batch, Cache& cache) const {
    const std::size_t L = fwd_.size();
    cache.fwd.resize(L);
    cache.bwd.resize(L);
    Mat<Scalar> h = x;
    for (std::size_t l = 0; l < L; ++l) {
      Mat<Scalar> f = fwd_[l].forward(h, batch, cache.fwd[l]);
      Mat<Scalar> b = bwd_[l].forward(h, batch, cache.bwd[l]);
      if (l + 1 == L && merge_ == BiMerge::sum) return f + b;
      h.resize(f.rows(), 2 * hidden_);
      h << f, b;
    }
    return h;
  }

  Mat<Scalar> backward(const Cache& cache, const Mat<Scalar>& dout, Index batch, bool accumulate) {
    Mat<Scalar> dh;
    if (merge_ == BiMerge::sum) {
      dh.resize(dout.rows(), 2 * hidden_);
      dh << dout, dout;
    } else {
      dh = dout;
    }
    for (std::size_t l = fwd_.size(); l-- > 0;) {
      Mat<Scalar> df = dh.leftCols(hidden_);
      Mat<Scalar> db = dh.rightCols(hidden_);
      dh = fwd_[l].backward(cache.fwd[l], df, batch, accumulate);
      dh += bwd_[l].backward(cache.bwd[l], db, batch, accumulate);
    }
    return dh;
  }

  void visit(const ParamVisitor<Scalar>& f) {
    for (std::size_t l = 0; l < fwd_.size(); ++l) {
      fwd_[l].visit(f);
      bwd_[l].visit(f);
    }
  }

 private:
  Index hidden_ = 0;
  BiMerge merge_ = BiMerge::sum;
  std::vector<GruDirection<Scalar>> fwd_;
  std::vector<GruDirection<Scalar>> bwd_;
};

// Kernel-1 grouped convolution: input channel block j (width group_width)
// maps to output channel j only. Weight is [groups, group_width].
template <typename Scalar>
class GroupedPointwise {
 public:
  GroupedPointwise() = default;
  GroupedPointwise(const std::string& name, Index groups, Index group_width)
      : weight_(name + ".weight", Mat<Scalar>::Zero(groups, group_width)), bias_(name + ".bias", Mat<Scalar>::Zero(1, groups)) {}

  void init(Rng& rng) {
    fill_uniform(weight_.value, Scalar(1) / std::sqrt(static_cast<Scalar>(weight_.value.cols())), rng);
    bias_.value.setZero();
  }

  Index groups() const { return weight_.value.rows(); }
  Index group_width() const { return weight_.value.cols(); }

  Mat<Scalar> forward(const Mat<Scalar>& x) const {
    const Index G = group_width();
    Mat<Scalar> y(x.rows(), groups());
    for (Index j = 0; j < groups(); ++j) y.col(j) = x.middleCols(j * G, G) * weight_.value.row(j).transpose();
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  Mat<Scalar> backward(const Mat<Scalar>& x, const Mat<Scalar>& dy, bool accumulate) {
    const Index G = group_width();
    Mat<Scalar> dx(x.rows(), x.cols());
    for (Index j = 0; j < groups(); ++j) {
      if (accumulate) weight_.grad.row(j) += dy.col(j).transpose() * x.middleCols(j * G, G);
      dx.middleCols(j * G, G) = dy.col(j) * weight_.value.row(j);
    }
    if (accumulate) bias_.grad += dy.colwise().sum();
    return dx;
  }

  void visit(const ParamVisitor<Scalar>& f) {
    f(weight_);
    f(bias_);
  }

 private:
  Param<Scalar> weight_;
  Param<Scalar> bias_;
};

}  // namespace autocl::nn

#endif  // AUTOCL_GRU_HPP
