#ifndef AUTOCL_TENSOR_HPP
#define AUTOCL_TENSOR_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace autocl {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// A batch of equal-length multichannel sequences, shape [count, length, channels].
// Storage is row-major with one row per (sequence, step): row = n * length + t.
template <typename Scalar>
struct Sequences {
  Index count = 0;
  Index length = 0;
  Mat<Scalar> values;

  Sequences() = default;
  Sequences(Index n, Index w, Index c) : count(n), length(w), values(Mat<Scalar>::Zero(n * w, c)) {}
  Sequences(Index n, Index w, Mat<Scalar> v) : count(n), length(w), values(std::move(v)) {
    if (values.rows() != n * w) throw std::invalid_argument("Sequences: row count must equal count * length");
  }

  Index channels() const { return values.cols(); }

  Scalar& operator()(Index n, Index t, Index c) { return values(n * length + t, c); }
  Scalar operator()(Index n, Index t, Index c) const { return values(n * length + t, c); }

  // Rows belonging to sequence n, shape [length, channels].
  auto sequence(Index n) { return values.middleRows(n * length, length); }
  auto sequence(Index n) const { return values.middleRows(n * length, length); }

  template <typename Other>
  Sequences<Other> cast() const {
    return Sequences<Other>(count, length, values.template cast<Other>().eval());
  }
};

template <typename Scalar>
bool same_shape(const Sequences<Scalar>& a, const Sequences<Scalar>& b) {
  return a.count == b.count && a.length == b.length && a.channels() == b.channels();
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

// Gathers the listed sequences into a new batch.
template <typename Scalar, typename IndexRange>
Sequences<Scalar> gather(const Sequences<Scalar>& src, const IndexRange& indices) {
  Index n = 0;
  for ([[maybe_unused]] auto i : indices) ++n;
  Sequences<Scalar> out(n, src.length, src.channels());
  Index k = 0;
  for (auto i : indices) out.sequence(k++) = src.sequence(static_cast<Index>(i));
  return out;
}

// Batch-major [N*W, C] <-> time-major [W*N, C] (row = t * N + n).
template <typename Scalar>
Mat<Scalar> to_time_major(const Sequences<Scalar>& x) {
  Mat<Scalar> out(x.values.rows(), x.values.cols());
  for (Index n = 0; n < x.count; ++n)
    for (Index t = 0; t < x.length; ++t) out.row(t * x.count + n) = x.values.row(n * x.length + t);
  return out;
}

template <typename Scalar>
Sequences<Scalar> from_time_major(const Mat<Scalar>& m, Index count, Index length) {
  Sequences<Scalar> out(count, length, m.cols());
  for (Index n = 0; n < count; ++n)
    for (Index t = 0; t < length; ++t) out.values.row(n * length + t) = m.row(t * count + n);
  return out;
}

}  // namespace autocl

#endif  // AUTOCL_TENSOR_HPP
