#ifndef AUTOCL_LAYERS_HPP
#define AUTOCL_LAYERS_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "autocl/random.hpp"
#include "autocl/tensor.hpp"

namespace autocl::nn {

// A learnable array and its accumulated gradient.
template <typename Scalar>
struct Param {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;

  Param() = default;
  Param(std::string n, Mat<Scalar> v) : name(std::move(n)), value(std::move(v)), grad(Mat<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
using ParamVisitor = std::function<void(Param<Scalar>&)>;

// Non-learnable state that still belongs in a checkpoint (batch-norm running statistics).
template <typename Scalar>
struct Buffer {
  std::string name;
  Mat<Scalar> value;
};

template <typename Scalar>
using BufferVisitor = std::function<void(Buffer<Scalar>&)>;

template <typename Scalar>
void fill_uniform(Mat<Scalar>& m, Scalar bound, Rng& rng) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.uniform(-1.0, 1.0)) * bound;
}

// y = x W + b, with W stored [in, out].
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Index in, Index out)
      : weight_(name + ".weight", Mat<Scalar>::Zero(in, out)), bias_(name + ".bias", Mat<Scalar>::Zero(1, out)) {}

  void init(Rng& rng) {
    fill_uniform(weight_.value, Scalar(1) / std::sqrt(static_cast<Scalar>(weight_.value.rows())), rng);
    bias_.value.setZero();
  }

  Mat<Scalar> forward(const Mat<Scalar>& x) const {
    Mat<Scalar> y = x * weight_.value;
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  Mat<Scalar> backward(const Mat<Scalar>& x, const Mat<Scalar>& dy, bool accumulate) {
    if (accumulate) {
      weight_.grad.noalias() += x.transpose() * dy;
      bias_.grad += dy.colwise().sum();
    }
    return dy * weight_.value.transpose();
  }

  Index in_features() const { return weight_.value.rows(); }
  Index out_features() const { return weight_.value.cols(); }

  void visit(const ParamVisitor<Scalar>& f) {
    f(weight_);
    f(bias_);
  }

  Param<Scalar>& weight() { return weight_; }
  Param<Scalar>& bias() { return bias_; }

 private:
  Param<Scalar> weight_;
  Param<Scalar> bias_;
};

// Batch normalization over rows, one statistic per column.
template <typename Scalar>
class BatchNorm {
 public:
  struct Cache {
    Mat<Scalar> xhat;
    RowVec<Scalar> inv_std;
    bool train = false;
  };

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm() = default;
  BatchNorm(const std::string& name, Index features)
      : gamma_(name + ".gamma", Mat<Scalar>::Ones(1, features)),
        beta_(name + ".beta", Mat<Scalar>::Zero(1, features)),
        running_mean_{name + ".running_mean", Mat<Scalar>::Zero(1, features)},
        running_var_{name + ".running_var", Mat<Scalar>::Ones(1, features)} {}

  void init() {
    gamma_.value.setOnes();
    beta_.value.setZero();
    running_mean_.value.setZero();
    running_var_.value.setOnes();
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, bool train, Cache& cache) {
    const Scalar eps = static_cast<Scalar>(kEps);
    cache.train = train;
    RowVec<Scalar> mean, var;
    if (train) {
      const auto m = static_cast<Scalar>(x.rows());
      mean = x.colwise().mean();
      var = (x.rowwise() - mean).array().square().colwise().sum().matrix() / m;
      const Scalar mom = static_cast<Scalar>(kMomentum);
      const Scalar unbias = x.rows() > 1 ? m / (m - 1) : Scalar(1);
      running_mean_.value = (1 - mom) * running_mean_.value + mom * mean;
      running_var_.value = (1 - mom) * running_var_.value + mom * unbias * var;
    } else {
      mean = running_mean_.value.row(0);
      var = running_var_.value.row(0);
    }
    cache.inv_std = (var.array() + eps).rsqrt().matrix();
    cache.xhat = ((x.rowwise() - mean).array().rowwise() * cache.inv_std.array()).matrix();
    Mat<Scalar> y = (cache.xhat.array().rowwise() * gamma_.value.row(0).array()).matrix();
    y.rowwise() += beta_.value.row(0);
    return y;
  }

  Mat<Scalar> backward(const Cache& cache, const Mat<Scalar>& dy, bool accumulate) {
    if (accumulate) {
      gamma_.grad += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
      beta_.grad += dy.colwise().sum();
    }
    Mat<Scalar> dxhat = (dy.array().rowwise() * gamma_.value.row(0).array()).matrix();
    if (!cache.train) return (dxhat.array().rowwise() * cache.inv_std.array()).matrix();
    const auto m = static_cast<Scalar>(dy.rows());
    RowVec<Scalar> sum_d = dxhat.colwise().sum();
    RowVec<Scalar> sum_dx = (dxhat.array() * cache.xhat.array()).colwise().sum().matrix();
    Mat<Scalar> dx = (m * dxhat).rowwise() - sum_d;
    dx.array() -= cache.xhat.array().rowwise() * sum_dx.array();
    dx.array().rowwise() *= (cache.inv_std.array() / m);
    return dx;
  }

  void visit(const ParamVisitor<Scalar>& f) {
    f(gamma_);
    f(beta_);
  }
  void visit_buffers(const BufferVisitor<Scalar>& f) {
    f(running_mean_);
    f(running_var_);
  }

 private:
  Param<Scalar> gamma_;
  Param<Scalar> beta_;
  Buffer<Scalar> running_mean_;
  Buffer<Scalar> running_var_;
};

template <typename Scalar>
Mat<Scalar> relu(const Mat<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

// Gradient of relu given its output.
template <typename Scalar>
Mat<Scalar> relu_backward(const Mat<Scalar>& y, const Mat<Scalar>& dy) {
  return (y.array() > Scalar(0)).select(dy, Scalar(0));
}

// Inverted dropout; the mask already carries the 1/(1-p) scale.
template <typename Scalar>
Mat<Scalar> dropout_mask(Index rows, Index cols, double rate, Rng& rng) {
  Mat<Scalar> mask(rows, cols);
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.bernoulli(rate) ? Scalar(0) : keep_scale;
  return mask;
}

template <typename Scalar>
Mat<Scalar> softmax_rows(const Mat<Scalar>& x) {
  Mat<Scalar> y = x.colwise() - x.rowwise().maxCoeff();
  y = y.array().exp();
  y.array().colwise() /= y.rowwise().sum().array();
  return y;
}

template <typename Scalar>
Mat<Scalar> softmax_rows_backward(const Mat<Scalar>& y, const Mat<Scalar>& dy) {
  Vec<Scalar> dot = (y.array() * dy.array()).rowwise().sum().matrix();
  return (y.array() * (dy.colwise() - dot).array()).matrix();
}

// 1-D convolution over Sequences, stride 1, "same" padding (left (k-1)/2, right k/2).
// Weight is stored [kernel * in_channels, out_channels]; row k * in + c.
template <typename Scalar>
class Conv1d {
 public:
  struct Cache {
    Mat<Scalar> columns;
  };

  Conv1d() = default;
  Conv1d(const std::string& name, Index in, Index out, Index kernel)
      : in_(in), kernel_(kernel),
        weight_(name + ".weight", Mat<Scalar>::Zero(kernel * in, out)),
        bias_(name + ".bias", Mat<Scalar>::Zero(1, out)) {}

  void init(Rng& rng) {
    fill_uniform(weight_.value, Scalar(1) / std::sqrt(static_cast<Scalar>(kernel_ * in_)), rng);
    bias_.value.setZero();
  }

  Index pad_left() const { return (kernel_ - 1) / 2; }

  Sequences<Scalar> forward(const Sequences<Scalar>& x, Cache& cache) const {
    const Index L = x.length;
    cache.columns.setZero(x.count * L, kernel_ * in_);
    for (Index n = 0; n < x.count; ++n) {
      for (Index t = 0; t < L; ++t) {
        auto row = cache.columns.row(n * L + t);
        for (Index k = 0; k < kernel_; ++k) {
          const Index src = t + k - pad_left();
          if (src < 0 || src >= L) continue;
          row.segment(k * in_, in_) = x.values.row(n * L + src);
        }
      }
    }
    Mat<Scalar> y = cache.columns * weight_.value;
    y.rowwise() += bias_.value.row(0);
    return Sequences<Scalar>(x.count, L, std::move(y));
  }

  Sequences<Scalar> backward(const Cache& cache, const Sequences<Scalar>& dy, bool accumulate) {
    if (accumulate) {
      weight_.grad.noalias() += cache.columns.transpose() * dy.values;
      bias_.grad += dy.values.colwise().sum();
    }
    Mat<Scalar> dcols = dy.values * weight_.value.transpose();
    const Index L = dy.length;
    Sequences<Scalar> dx(dy.count, L, in_);
    for (Index n = 0; n < dy.count; ++n) {
      for (Index t = 0; t < L; ++t) {
        auto row = dcols.row(n * L + t);
        for (Index k = 0; k < kernel_; ++k) {
          const Index src = t + k - pad_left();
          if (src < 0 || src >= L) continue;
          dx.values.row(n * L + src) += row.segment(k * in_, in_);
        }
      }
    }
    return dx;
  }

  void visit(const ParamVisitor<Scalar>& f) {
    f(weight_);
    f(bias_);
  }

 private:
  Index in_ = 0;
  Index kernel_ = 0;
  Param<Scalar> weight_;
  Param<Scalar> bias_;
};

// Non-overlapping max pooling along time; a trailing remainder is dropped.
template <typename Scalar>
struct MaxPoolCache {
  Index in_length = 0;
  std::vector<Index> argmax;  // source row per output element
};

template <typename Scalar>
Sequences<Scalar> max_pool(const Sequences<Scalar>& x, Index pool, MaxPoolCache<Scalar>& cache) {
  const Index out_len = x.length / pool;
  const Index C = x.channels();
  Sequences<Scalar> y(x.count, out_len, C);
  cache.in_length = x.length;
  cache.argmax.assign(static_cast<std::size_t>(x.count * out_len * C), 0);
  for (Index n = 0; n < x.count; ++n)
    for (Index t = 0; t < out_len; ++t)
      for (Index c = 0; c < C; ++c) {
        Index best = n * x.length + t * pool;
        for (Index k = 1; k < pool; ++k) {
          const Index r = n * x.length + t * pool + k;
          if (x.values(r, c) > x.values(best, c)) best = r;
        }
        y.values(n * out_len + t, c) = x.values(best, c);
        cache.argmax[static_cast<std::size_t>((n * out_len + t) * C + c)] = best;
      }
  return y;
}

template <typename Scalar>
Sequences<Scalar> max_pool_backward(const MaxPoolCache<Scalar>& cache, const Sequences<Scalar>& dy) {
  const Index C = dy.channels();
  Sequences<Scalar> dx(dy.count, cache.in_length, C);
  for (Index r = 0; r < dy.values.rows(); ++r)
    for (Index c = 0; c < C; ++c) dx.values(cache.argmax[static_cast<std::size_t>(r * C + c)], c) += dy.values(r, c);
  return dx;
}

// Max over the whole time axis: [N, L, C] -> [N, C].
template <typename Scalar>
Mat<Scalar> global_max_pool(const Sequences<Scalar>& x, std::vector<Index>& argmax) {
  const Index C = x.channels();
  Mat<Scalar> y(x.count, C);
  argmax.assign(static_cast<std::size_t>(x.count * C), 0);
  for (Index n = 0; n < x.count; ++n)
    for (Index c = 0; c < C; ++c) {
      Index t_best = 0;
      x.sequence(n).col(c).maxCoeff(&t_best);
      y(n, c) = x(n, t_best, c);
      argmax[static_cast<std::size_t>(n * C + c)] = t_best;
    }
  return y;
}

template <typename Scalar>
Sequences<Scalar> global_max_pool_backward(const std::vector<Index>& argmax, Index length, const Mat<Scalar>& dy) {
  Sequences<Scalar> dx(dy.rows(), length, dy.cols());
  for (Index n = 0; n < dy.rows(); ++n)
    for (Index c = 0; c < dy.cols(); ++c) dx(n, argmax[static_cast<std::size_t>(n * dy.cols() + c)], c) += dy(n, c);
  return dx;
}

}  // namespace autocl::nn

#endif  // AUTOCL_LAYERS_HPP
