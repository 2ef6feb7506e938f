#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "cmtf/tensor.hpp"

namespace cmtf {

enum class LossKind { Frobenius, KL, IS, BetaDivergence, AlphaDivergence, Huber };

/// Thrown when data or model entries leave a loss's domain.
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, std::size_t index)
      : std::domain_error(what + " at linear index " + std::to_string(index)), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Elementwise data-fitting loss l(t, x) summed over all entries.
struct LossSpec {
  LossKind kind = LossKind::Frobenius;
  double beta = 2.0;   // BetaDivergence
  double alpha = 2.0;  // AlphaDivergence
  double delta = 1.0;  // Huber threshold d

  static LossSpec frobenius() { return {}; }
  static LossSpec kl() { return {.kind = LossKind::KL}; }
  static LossSpec itakuraSaito() { return {.kind = LossKind::IS}; }
  static LossSpec betaDivergence(double b) { return {.kind = LossKind::BetaDivergence, .beta = b}; }
  static LossSpec alphaDivergence(double a) {
    return {.kind = LossKind::AlphaDivergence, .alpha = a};
  }
  static LossSpec huber(double d) { return {.kind = LossKind::Huber, .delta = d}; }

  /// KL, IS and the alpha/beta families are only defined for x >= 0.
  bool requiresNonnegativeModel() const noexcept {
    return kind != LossKind::Frobenius && kind != LossKind::Huber;
  }
  void validate() const;
};

std::string_view toString(LossKind kind);
LossKind lossKindFromString(std::string_view name);

/// Model entries below this are clamped inside the log/power based losses.
inline constexpr double kModelFloor = 1e-12;
/// Negative model entries beyond this tolerance are a domain violation.
inline constexpr double kNegativeTolerance = 1e-8;

double lossValue(const LossSpec& spec, const DenseTensor& t, const DenseTensor& x);
DenseTensor lossGradient(const LossSpec& spec, const DenseTensor& t, const DenseTensor& x);

/// Value and gradient over raw entry ranges; `gradient` may be empty to skip it.
/// With `dropDataConstant` the terms that depend on t alone are left out,
/// which the factor subsolver uses since they do not move the minimizer.
double lossValueAndGradient(const LossSpec& spec, std::span<const double> t,
                            std::span<const double> x, std::span<double> gradient,
                            bool dropDataConstant = false);

/// Throws DomainError when a data entry is outside the loss's domain.
void checkDataDomain(const LossSpec& spec, std::span<const double> t);

}  // namespace cmtf
