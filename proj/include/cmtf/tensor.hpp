#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cmtf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Shape = std::vector<std::size_t>;

/// Thrown when operand dimensions disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense N-way array (N >= 2) stored with the first index varying fastest,
/// so the mode-0 unfolding is a plain reshape.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape);
  DenseTensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t order() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t mode) const { return shape_.at(mode); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t linear) { return values_[linear]; }
  double operator[](std::size_t linear) const { return values_[linear]; }

  /// Linear offset of a multi-index.
  std::size_t offset(std::span<const std::size_t> index) const;
  double& at(std::span<const std::size_t> index) { return values_[offset(index)]; }
  double at(std::span<const std::size_t> index) const { return values_[offset(index)]; }

  /// Read-only view of the values as an Eigen vector.
  Eigen::Map<const Vector> asVector() const {
    return {values_.data(), static_cast<Eigen::Index>(values_.size())};
  }
  Eigen::Map<Vector> asVector() {
    return {values_.data(), static_cast<Eigen::Index>(values_.size())};
  }

  double frobeniusNorm() const;
  double squaredNorm() const;

  bool operator==(const DenseTensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// Factor matrices of one CP model; all share the same column count.
class KruskalFactors {
 public:
  KruskalFactors() = default;
  explicit KruskalFactors(std::vector<Matrix> factors);

  std::size_t order() const noexcept { return factors_.size(); }
  Eigen::Index rank() const { return factors_.empty() ? 0 : factors_.front().cols(); }
  Shape shape() const;

  const Matrix& operator[](std::size_t mode) const { return factors_.at(mode); }
  Matrix& operator[](std::size_t mode) { return factors_.at(mode); }
  const std::vector<Matrix>& factors() const noexcept { return factors_; }

 private:
  std::vector<Matrix> factors_;
};

std::size_t product(std::span<const std::size_t> dims);

/// Mode-`mode` unfolding (zero-based), columns ordered with the lower
/// remaining modes varying fastest.
Matrix unfold(const DenseTensor& t, std::size_t mode);

/// Inverse of `unfold`.
DenseTensor refold(const Matrix& m, std::size_t mode, const Shape& shape);

/// Columnwise Kronecker product; rows of `b` vary fastest.
Matrix khatriRao(const Matrix& a, const Matrix& b);

/// Khatri-Rao of every factor except `skipMode`, highest mode first, so that
/// unfold(reconstruct(k), d) == k[d] * coKhatriRao(k, d)^T.
Matrix coKhatriRao(const KruskalFactors& k, std::size_t skipMode);

/// unfold(t, mode) * coKhatriRao(k, mode) without materializing either
/// operand in full.
Matrix mttkrp(const DenseTensor& t, const KruskalFactors& k, std::size_t mode);

/// Reference two-step MTTKRP; materializes the unfolding and co-Khatri-Rao.
Matrix mttkrpNaive(const DenseTensor& t, const KruskalFactors& k, std::size_t mode);

/// Hadamard product of all C_d^T C_d with d != skipMode.
Matrix gramHadamard(const KruskalFactors& k, std::size_t skipMode);

DenseTensor reconstruct(const KruskalFactors& k, const Shape& shape);
DenseTensor reconstruct(const KruskalFactors& k);

}  // namespace cmtf
