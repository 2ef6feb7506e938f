#include "cmtf/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace cmtf {

namespace {

void checkShape(const Shape& shape) {
  if (shape.size() < 2) {
    throw ShapeError("tensor order must be at least 2, got " + std::to_string(shape.size()));
  }
  for (auto n : shape) {
    if (n == 0) throw ShapeError("tensor dimensions must be positive");
  }
}

void checkMode(std::size_t mode, std::size_t order) {
  if (mode >= order) {
    throw ShapeError("mode " + std::to_string(mode) + " out of range for order " +
                     std::to_string(order));
  }
}

// Sizes of the index blocks left of, at, and right of `mode`.
struct Split {
  std::size_t left, mid, right;
};

Split splitAt(const Shape& shape, std::size_t mode) {
  Split s{1, shape[mode], 1};
  for (std::size_t k = 0; k < mode; ++k) s.left *= shape[k];
  for (std::size_t k = mode + 1; k < shape.size(); ++k) s.right *= shape[k];
  return s;
}

// Khatri-Rao of factors in [first, last) taken highest mode first.
Matrix khatriRaoRange(const KruskalFactors& k, std::size_t first, std::size_t last) {
  const Eigen::Index rank = k.rank();
  if (first >= last) return Matrix::Ones(1, rank);
  Matrix acc = k[first];
  for (std::size_t m = first + 1; m < last; ++m) acc = khatriRao(k[m], acc);
  return acc;
}

void checkFactors(const DenseTensor& t, const KruskalFactors& k) {
  if (t.order() != k.order()) {
    throw ShapeError("tensor order " + std::to_string(t.order()) + " != factor count " +
                     std::to_string(k.order()));
  }
  for (std::size_t d = 0; d < t.order(); ++d) {
    if (static_cast<std::size_t>(k[d].rows()) != t.dim(d)) {
      throw ShapeError("factor " + std::to_string(d) + " has " + std::to_string(k[d].rows()) +
                       " rows, tensor dimension is " + std::to_string(t.dim(d)));
    }
  }
}

}  // namespace

std::size_t product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
  checkShape(shape_);
  values_.assign(product(shape_), 0.0);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  checkShape(shape_);
  if (values_.size() != product(shape_)) {
    throw ShapeError("value count " + std::to_string(values_.size()) +
                     " does not match shape product " + std::to_string(product(shape_)));
  }
}

std::size_t DenseTensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("index order mismatch");
  std::size_t off = 0;
  std::size_t stride = 1;
  for (std::size_t k = 0; k < shape_.size(); ++k) {
    if (index[k] >= shape_[k]) throw ShapeError("index out of range");
    off += index[k] * stride;
    stride *= shape_[k];
  }
  return off;
}

double DenseTensor::squaredNorm() const { return asVector().squaredNorm(); }
double DenseTensor::frobeniusNorm() const { return std::sqrt(squaredNorm()); }

KruskalFactors::KruskalFactors(std::vector<Matrix> factors) : factors_(std::move(factors)) {
  if (factors_.empty()) throw ShapeError("a CP model needs at least one factor");
  const auto r = factors_.front().cols();
  for (const auto& f : factors_) {
    if (f.cols() != r) throw ShapeError("factor matrices must share their column count");
    if (f.rows() < 1 || f.cols() < 1) throw ShapeError("factor matrices must be non-empty");
  }
}

Shape KruskalFactors::shape() const {
  Shape s;
  s.reserve(factors_.size());
  for (const auto& f : factors_) s.push_back(static_cast<std::size_t>(f.rows()));
  return s;
}

Matrix unfold(const DenseTensor& t, std::size_t mode) {
  checkMode(mode, t.order());
  const auto [left, mid, right] = splitAt(t.shape(), mode);
  Matrix out(mid, left * right);
  const double* src = t.data();
  for (std::size_t r = 0; r < right; ++r) {
    for (std::size_t j = 0; j < mid; ++j) {
      const double* slab = src + left * (j + mid * r);
      for (std::size_t l = 0; l < left; ++l) out(j, l + left * r) = slab[l];
    }
  }
  return out;
}

DenseTensor refold(const Matrix& m, std::size_t mode, const Shape& shape) {
  DenseTensor t(shape);
  checkMode(mode, t.order());
  const auto [left, mid, right] = splitAt(shape, mode);
  if (static_cast<std::size_t>(m.rows()) != mid ||
      static_cast<std::size_t>(m.cols()) != left * right) {
    throw ShapeError("unfolded matrix does not match target shape");
  }
  double* dst = t.data();
  for (std::size_t r = 0; r < right; ++r) {
    for (std::size_t j = 0; j < mid; ++j) {
      double* slab = dst + left * (j + mid * r);
      for (std::size_t l = 0; l < left; ++l) slab[l] = m(j, l + left * r);
    }
  }
  return t;
}

Matrix khatriRao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("khatriRao: column counts " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.cols()) + " differ");
  }
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.cols(); ++r) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out.col(r).segment(i * b.rows(), b.rows()) = a(i, r) * b.col(r);
    }
  }
  return out;
}

Matrix coKhatriRao(const KruskalFactors& k, std::size_t skipMode) {
  checkMode(skipMode, k.order());
  const Matrix low = khatriRaoRange(k, 0, skipMode);
  const Matrix high = khatriRaoRange(k, skipMode + 1, k.order());
  if (skipMode == 0) return high;
  if (skipMode + 1 == k.order()) return low;
  return khatriRao(high, low);
}

Matrix mttkrp(const DenseTensor& t, const KruskalFactors& k, std::size_t mode) {
  checkMode(mode, t.order());
  checkFactors(t, k);
  const auto [left, mid, right] = splitAt(t.shape(), mode);
  const auto rank = k.rank();
  const auto L = static_cast<Eigen::Index>(left);
  const auto N = static_cast<Eigen::Index>(mid);
  const auto Rt = static_cast<Eigen::Index>(right);

  if (mode == 0) {
    Eigen::Map<const Matrix> unfolded(t.data(), N, Rt);
    return unfolded * khatriRaoRange(k, 1, t.order());
  }
  const Matrix low = khatriRaoRange(k, 0, mode);
  if (mode + 1 == t.order()) {
    Eigen::Map<const Matrix> slab(t.data(), L, N);
    return slab.transpose() * low;
  }
  const Matrix high = khatriRaoRange(k, mode + 1, t.order());
  Matrix out = Matrix::Zero(N, rank);
  Matrix partial(N, rank);
  for (Eigen::Index r = 0; r < Rt; ++r) {
    Eigen::Map<const Matrix> slab(t.data() + L * N * r, L, N);
    partial.noalias() = slab.transpose() * low;
    out += partial * high.row(r).asDiagonal();
  }
  return out;
}

Matrix mttkrpNaive(const DenseTensor& t, const KruskalFactors& k, std::size_t mode) {
  checkFactors(t, k);
  return unfold(t, mode) * coKhatriRao(k, mode);
}

Matrix gramHadamard(const KruskalFactors& k, std::size_t skipMode) {
  checkMode(skipMode, k.order());
  Matrix g = Matrix::Ones(k.rank(), k.rank());
  for (std::size_t d = 0; d < k.order(); ++d) {
    if (d == skipMode) continue;
    g.array() *= (k[d].transpose() * k[d]).array();
  }
  return g;
}

DenseTensor reconstruct(const KruskalFactors& k, const Shape& shape) {
  if (shape != k.shape()) throw ShapeError("reconstruct: factor rows do not match shape");
  DenseTensor t(shape);
  Eigen::Map<Matrix> unfolded(t.data(), static_cast<Eigen::Index>(shape[0]),
                              static_cast<Eigen::Index>(t.size() / shape[0]));
  unfolded.noalias() = k[0] * khatriRaoRange(k, 1, k.order()).transpose();
  return t;
}

DenseTensor reconstruct(const KruskalFactors& k) { return reconstruct(k, k.shape()); }

}  // namespace cmtf
