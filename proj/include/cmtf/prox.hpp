#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "cmtf/tensor.hpp"

namespace cmtf {

enum class RegularizerKind {
  None,
  NonNegative,
  Box,
  Simplex,
  Monotone,
  L1Ball,
  L2UnitBall,
  Lasso,
  L2Norm,
  Smoothness,
  NormalizedHardSparsity,
};

/// Whether a regularizer acts on each entry or on each column of a factor.
enum class ProxAxis { Elementwise, PerColumn };

/// g(C) of a factor matrix together with its parameters. Only the fields
/// relevant to `kind` are read.
struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::None;
  double lower = 0.0;   // Box
  double upper = 1.0;   // Box
  double radius = 1.0;  // L1Ball
  double gamma = 1.0;   // Lasso, L2Norm, Smoothness
  int differenceOrder = 1;  // Smoothness
  int sparsity = 1;         // NormalizedHardSparsity: entries kept per column

  static RegularizerSpec none() { return {}; }
  static RegularizerSpec nonNegative() { return {.kind = RegularizerKind::NonNegative}; }
  static RegularizerSpec box(double lo, double hi) {
    return {.kind = RegularizerKind::Box, .lower = lo, .upper = hi};
  }
  static RegularizerSpec simplex() { return {.kind = RegularizerKind::Simplex}; }
  static RegularizerSpec monotone() { return {.kind = RegularizerKind::Monotone}; }
  static RegularizerSpec l1Ball(double r) { return {.kind = RegularizerKind::L1Ball, .radius = r}; }
  static RegularizerSpec l2UnitBall() { return {.kind = RegularizerKind::L2UnitBall}; }
  static RegularizerSpec lasso(double g) { return {.kind = RegularizerKind::Lasso, .gamma = g}; }
  static RegularizerSpec l2Norm(double g) { return {.kind = RegularizerKind::L2Norm, .gamma = g}; }
  static RegularizerSpec smoothness(double g, int order = 1) {
    return {.kind = RegularizerKind::Smoothness, .gamma = g, .differenceOrder = order};
  }
  static RegularizerSpec normalizedHardSparsity(int k) {
    return {.kind = RegularizerKind::NormalizedHardSparsity, .sparsity = k};
  }

  bool active() const noexcept { return kind != RegularizerKind::None; }
  bool isIndicator() const noexcept;
  bool isConvex() const noexcept { return kind != RegularizerKind::NormalizedHardSparsity; }
  /// True when the feasible set lies in the nonnegative orthant.
  bool impliesNonnegative() const noexcept;
  ProxAxis axis() const noexcept;

  /// Throws std::invalid_argument on bad parameters; `columnLength` is the
  /// factor row count when known.
  void validate(Eigen::Index columnLength = -1) const;
};

std::string_view toString(RegularizerKind kind);
RegularizerKind regularizerKindFromString(std::string_view name);

/// prox_{stepScale * g}(x): the minimizer of g(u) + 1/(2 stepScale) ||x - u||^2,
/// applied per entry or per column according to the kind. stepScale is 1/rho.
Matrix applyProx(const RegularizerSpec& spec, const Matrix& x, double stepScale);

/// g(x). Indicator kinds return 0 when feasible within 1e-9, +inf otherwise.
double evalRegularizer(const RegularizerSpec& spec, const Matrix& x);

namespace prox {

// Column kernels, exposed for testing.
Vector projectSimplex(const Vector& x);
Vector projectL1Ball(const Vector& x, double radius);
Vector isotonicRegression(const Vector& x);
Vector softThreshold(const Vector& x, double threshold);
Vector normalizedHardThreshold(const Vector& x, int k);
/// (n - order) x n forward-difference matrix of the given order.
Matrix differenceMatrix(Eigen::Index n, int order);

}  // namespace prox

}  // namespace cmtf
