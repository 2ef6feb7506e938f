#include "cmtf/loss.hpp"

#include <cmath>

namespace cmtf {

namespace {

double clampModel(double x, std::size_t index) {
  if (x < -kNegativeTolerance) throw DomainError("negative model entry " + std::to_string(x), index);
  return x < kModelFloor ? kModelFloor : x;
}

// Applies `term(t, x, grad*)` over all entries and sums the values.
template <typename Term>
double accumulate(std::span<const double> t, std::span<const double> x, std::span<double> grad,
                  bool clamp, Term term) {
  double total = 0.0;
  const bool wantGrad = !grad.empty();
  for (std::size_t j = 0; j < t.size(); ++j) {
    const double xj = clamp ? clampModel(x[j], j) : x[j];
    double g = 0.0;
    total += term(t[j], xj, g);
    if (wantGrad) grad[j] = g;
  }
  return total;
}

// Array form of the KL term; t = 0 entries contribute x.
double klValueAndGradient(std::span<const double> t, std::span<const double> x,
                          std::span<double> grad, bool dropDataConstant) {
  using Array = Eigen::ArrayXd;
  const auto n = static_cast<Eigen::Index>(t.size());
  const Eigen::Map<const Array> tv(t.data(), n);
  const Eigen::Map<const Array> xv(x.data(), n);
  Eigen::Index worst = 0;
  if (n > 0 && xv.minCoeff(&worst) < -kNegativeTolerance) clampModel(xv[worst], worst);
  const auto xc = xv.max(kModelFloor);
  double value = (xc - tv * xc.log()).sum();
  if (!dropDataConstant) {
    value += (tv > 0.0).select(tv * tv.max(kModelFloor).log() - tv, 0.0).sum();
  }
  if (!grad.empty()) Eigen::Map<Array>(grad.data(), n) = 1.0 - tv / xc;
  return value;
}

}  // namespace

void LossSpec::validate() const {
  switch (kind) {
    case LossKind::BetaDivergence:
      if (beta == 0.0 || beta == 1.0 || !std::isfinite(beta)) {
        throw std::invalid_argument("beta-divergence requires beta outside {0, 1}");
      }
      break;
    case LossKind::AlphaDivergence:
      if (alpha == 0.0 || alpha == 1.0 || !std::isfinite(alpha)) {
        throw std::invalid_argument("alpha-divergence requires alpha outside {0, 1}");
      }
      break;
    case LossKind::Huber:
      if (!(delta > 0.0)) throw std::invalid_argument("Huber threshold must be positive");
      break;
    default:
      break;
  }
}

std::string_view toString(LossKind kind) {
  switch (kind) {
    case LossKind::Frobenius: return "frobenius";
    case LossKind::KL: return "kl";
    case LossKind::IS: return "is";
    case LossKind::BetaDivergence: return "beta";
    case LossKind::AlphaDivergence: return "alpha";
    case LossKind::Huber: return "huber";
  }
  return "unknown";
}

LossKind lossKindFromString(std::string_view name) {
  for (auto kind : {LossKind::Frobenius, LossKind::KL, LossKind::IS, LossKind::BetaDivergence,
                    LossKind::AlphaDivergence, LossKind::Huber}) {
    if (toString(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown loss kind '" + std::string(name) + "'");
}

void checkDataDomain(const LossSpec& spec, std::span<const double> t) {
  for (std::size_t j = 0; j < t.size(); ++j) {
    const double v = t[j];
    if (!std::isfinite(v)) throw DomainError("non-finite data entry", j);
    if (spec.kind == LossKind::IS && !(v > 0.0)) {
      throw DomainError("Itakura-Saito needs positive data, got " + std::to_string(v), j);
    }
    if (spec.requiresNonnegativeModel() && v < 0.0) {
      throw DomainError(std::string(toString(spec.kind)) + " needs nonnegative data, got " +
                            std::to_string(v),
                        j);
    }
  }
}

double lossValueAndGradient(const LossSpec& spec, std::span<const double> t,
                            std::span<const double> x, std::span<double> gradient,
                            bool dropDataConstant) {
  if (t.size() != x.size() || (!gradient.empty() && gradient.size() != t.size())) {
    throw ShapeError("loss operands differ in size");
  }
  const double keep = dropDataConstant ? 0.0 : 1.0;
  switch (spec.kind) {
    case LossKind::Frobenius:
      return accumulate(t, x, gradient, false, [](double tj, double xj, double& g) {
        const double r = xj - tj;
        g = 2.0 * r;
        return r * r;
      });
    case LossKind::KL:
      return klValueAndGradient(t, x, gradient, dropDataConstant);
    case LossKind::IS:
      return accumulate(t, x, gradient, true, [keep](double tj, double xj, double& g) {
        g = (xj - tj) / (xj * xj);
        return tj / xj + std::log(xj) - keep * (std::log(tj) + 1.0);
      });
    case LossKind::BetaDivergence: {
      const double b = spec.beta;
      return accumulate(t, x, gradient, true, [b, keep](double tj, double xj, double& g) {
        const double xb2 = std::pow(xj, b - 2.0);
        g = xb2 * (xj - tj);
        return keep * std::pow(tj, b) / (b * (b - 1.0)) + xb2 * xj * xj / b -
               tj * xb2 * xj / (b - 1.0);
      });
    }
    case LossKind::AlphaDivergence: {
      const double a = spec.alpha;
      const double scale = 1.0 / (a * (a - 1.0));
      return accumulate(t, x, gradient, true, [a, scale, keep](double tj, double xj, double& g) {
        const double ratio = std::pow(tj / xj, a);  // t^a x^-a
        g = (1.0 - ratio) / a;
        return scale * (ratio * xj - keep * a * tj + (a - 1.0) * xj);
      });
    }
    case LossKind::Huber: {
      const double d = spec.delta;
      return accumulate(t, x, gradient, false, [d](double tj, double xj, double& g) {
        const double r = xj - tj;
        if (std::abs(r) <= d) {
          g = 2.0 * r;
          return r * r;
        }
        g = 2.0 * d * (r > 0.0 ? 1.0 : -1.0);
        return 2.0 * d * std::abs(r) - d * d;
      });
    }
  }
  return 0.0;
}

double lossValue(const LossSpec& spec, const DenseTensor& t, const DenseTensor& x) {
  if (t.shape() != x.shape()) throw ShapeError("loss operands have different shapes");
  spec.validate();
  checkDataDomain(spec, t.values());
  return lossValueAndGradient(spec, t.values(), x.values(), {});
}

DenseTensor lossGradient(const LossSpec& spec, const DenseTensor& t, const DenseTensor& x) {
  if (t.shape() != x.shape()) throw ShapeError("loss operands have different shapes");
  spec.validate();
  checkDataDomain(spec, t.values());
  DenseTensor grad(t.shape());
  lossValueAndGradient(spec, t.values(), x.values(), grad.values());
  return grad;
}

}  // namespace cmtf
