#include "cmtf/prox.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <shared_mutex>
#include <tuple>

namespace cmtf {

namespace {

constexpr double kFeasibilityTol = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Threshold tau such that sum(max(u - tau, 0)) == total, for total > 0.
double simplexThreshold(const Vector& u, double total) {
  std::vector<double> sorted(u.data(), u.data() + u.size());
  std::stable_sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    cumulative += sorted[j];
    const double candidate = (cumulative - total) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) tau = candidate;
  }
  return tau;
}

// Cached LLT of (coeff * D^T D + I), keyed by (n, order, coeff).
class SmoothnessCache {
 public:
  using Key = std::tuple<Eigen::Index, int, std::uint64_t>;

  std::shared_ptr<const Eigen::LLT<Matrix>> get(Eigen::Index n, int order, double coeff) {
    const Key key{n, order, std::bit_cast<std::uint64_t>(coeff)};
    {
      std::shared_lock lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    const Matrix d = prox::differenceMatrix(n, order);
    Matrix system = coeff * d.transpose() * d;
    system.diagonal().array() += 1.0;
    auto llt = std::make_shared<const Eigen::LLT<Matrix>>(system);
    std::unique_lock lock(mutex_);
    if (cache_.size() > 256) cache_.clear();
    return cache_.try_emplace(key, std::move(llt)).first->second;
  }

 private:
  std::shared_mutex mutex_;
  std::map<Key, std::shared_ptr<const Eigen::LLT<Matrix>>> cache_;
};

SmoothnessCache& smoothnessCache() {
  static SmoothnessCache cache;
  return cache;
}

template <typename ColumnOp>
Matrix perColumn(const Matrix& x, ColumnOp op) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) out.col(c) = op(Vector(x.col(c)));
  return out;
}

bool columnsSatisfy(const Matrix& x, auto predicate) {
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (!predicate(Vector(x.col(c)))) return false;
  }
  return true;
}

}  // namespace

namespace prox {

Vector softThreshold(const Vector& x, double threshold) {
  return x.unaryExpr([threshold](double v) {
    return std::copysign(std::max(0.0, std::abs(v) - threshold), v);
  });
}

Vector projectSimplex(const Vector& x) {
  if (x.size() == 0) throw std::invalid_argument("simplex projection of an empty column");
  const double tau = simplexThreshold(x, 1.0);
  return (x.array() - tau).max(0.0).matrix();
}

Vector projectL1Ball(const Vector& x, double radius) {
  if (x.lpNorm<1>() <= radius) return x;
  const Vector magnitude = x.cwiseAbs();
  return softThreshold(x, simplexThreshold(magnitude, radius));
}

Vector isotonicRegression(const Vector& x) {
  // Pool adjacent violators over blocks of (mean, count).
  std::vector<double> mean;
  std::vector<Eigen::Index> count;
  mean.reserve(x.size());
  count.reserve(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    mean.push_back(x[i]);
    count.push_back(1);
    while (mean.size() > 1 && mean[mean.size() - 2] > mean.back()) {
      const auto n1 = count[count.size() - 2];
      const auto n2 = count.back();
      const double pooled = (mean[mean.size() - 2] * n1 + mean.back() * n2) / (n1 + n2);
      mean.pop_back();
      count.pop_back();
      mean.back() = pooled;
      count.back() = n1 + n2;
    }
  }
  Vector out(x.size());
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < mean.size(); ++b) {
    out.segment(pos, count[b]).setConstant(mean[b]);
    pos += count[b];
  }
  return out;
}

Vector normalizedHardThreshold(const Vector& x, int k) {
  std::vector<Eigen::Index> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&x](Eigen::Index a, Eigen::Index b) {
    return std::abs(x[a]) > std::abs(x[b]);
  });
  Vector out = Vector::Zero(x.size());
  for (int i = 0; i < k && i < x.size(); ++i) out[order[i]] = x[order[i]];
  const double norm = out.norm();
  if (norm == 0.0) {
    out.setZero();
    out[0] = 1.0;
    return out;
  }
  return out / norm;
}

Matrix differenceMatrix(Eigen::Index n, int order) {
  Matrix d = Matrix::Identity(n, n);
  for (int k = 0; k < order && d.rows() > 0; ++k) {
    Matrix next = d.bottomRows(d.rows() - 1) - d.topRows(d.rows() - 1);
    d = std::move(next);
  }
  return d;
}

}  // namespace prox

bool RegularizerSpec::isIndicator() const noexcept {
  switch (kind) {
    case RegularizerKind::NonNegative:
    case RegularizerKind::Box:
    case RegularizerKind::Simplex:
    case RegularizerKind::Monotone:
    case RegularizerKind::L1Ball:
    case RegularizerKind::L2UnitBall:
    case RegularizerKind::NormalizedHardSparsity:
      return true;
    default:
      return false;
  }
}

bool RegularizerSpec::impliesNonnegative() const noexcept {
  return kind == RegularizerKind::NonNegative || kind == RegularizerKind::Simplex ||
         (kind == RegularizerKind::Box && lower >= 0.0);
}

ProxAxis RegularizerSpec::axis() const noexcept {
  switch (kind) {
    case RegularizerKind::None:
    case RegularizerKind::NonNegative:
    case RegularizerKind::Box:
    case RegularizerKind::Lasso:
      return ProxAxis::Elementwise;
    default:
      return ProxAxis::PerColumn;
  }
}

void RegularizerSpec::validate(Eigen::Index columnLength) const {
  const auto fail = [this](const std::string& what) {
    throw std::invalid_argument(std::string(toString(kind)) + ": " + what);
  };
  switch (kind) {
    case RegularizerKind::Box:
      if (!(lower <= upper)) fail("lower bound exceeds upper bound");
      break;
    case RegularizerKind::L1Ball:
      if (!(radius > 0.0)) fail("radius must be positive");
      break;
    case RegularizerKind::Lasso:
    case RegularizerKind::L2Norm:
      if (!(gamma > 0.0)) fail("gamma must be positive");
      break;
    case RegularizerKind::Smoothness:
      if (!(gamma > 0.0)) fail("gamma must be positive");
      if (differenceOrder < 1) fail("difference order must be at least 1");
      break;
    case RegularizerKind::NormalizedHardSparsity:
      if (sparsity < 1) fail("k must be at least 1");
      if (columnLength >= 0 && sparsity > columnLength) fail("k exceeds the column length");
      break;
    default:
      break;
  }
}

std::string_view toString(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::None: return "none";
    case RegularizerKind::NonNegative: return "nonnegative";
    case RegularizerKind::Box: return "box";
    case RegularizerKind::Simplex: return "simplex";
    case RegularizerKind::Monotone: return "monotone";
    case RegularizerKind::L1Ball: return "l1ball";
    case RegularizerKind::L2UnitBall: return "l2ball";
    case RegularizerKind::Lasso: return "lasso";
    case RegularizerKind::L2Norm: return "l2norm";
    case RegularizerKind::Smoothness: return "smoothness";
    case RegularizerKind::NormalizedHardSparsity: return "normalized_sparsity";
  }
  return "unknown";
}

RegularizerKind regularizerKindFromString(std::string_view name) {
  for (auto kind : {RegularizerKind::None, RegularizerKind::NonNegative, RegularizerKind::Box,
                    RegularizerKind::Simplex, RegularizerKind::Monotone, RegularizerKind::L1Ball,
                    RegularizerKind::L2UnitBall, RegularizerKind::Lasso, RegularizerKind::L2Norm,
                    RegularizerKind::Smoothness, RegularizerKind::NormalizedHardSparsity}) {
    if (toString(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown regularizer kind '" + std::string(name) + "'");
}

Matrix applyProx(const RegularizerSpec& spec, const Matrix& x, double stepScale) {
  if (!(stepScale > 0.0)) throw std::invalid_argument("prox step scale must be positive");
  spec.validate(x.rows());
  switch (spec.kind) {
    case RegularizerKind::None:
      return x;
    case RegularizerKind::NonNegative:
      return x.cwiseMax(0.0);
    case RegularizerKind::Box:
      return x.cwiseMax(spec.lower).cwiseMin(spec.upper);
    case RegularizerKind::Simplex:
      return perColumn(x, prox::projectSimplex);
    case RegularizerKind::Monotone:
      return perColumn(x, prox::isotonicRegression);
    case RegularizerKind::L1Ball:
      return perColumn(x, [&](const Vector& c) { return prox::projectL1Ball(c, spec.radius); });
    case RegularizerKind::L2UnitBall:
      return perColumn(x, [](const Vector& c) -> Vector { return c / std::max(c.norm(), 1.0); });
    case RegularizerKind::Lasso: {
      const double t = spec.gamma * stepScale;
      return x.unaryExpr([t](double v) { return std::copysign(std::max(0.0, std::abs(v) - t), v); });
    }
    case RegularizerKind::L2Norm: {
      const double t = spec.gamma * stepScale;
      return perColumn(x, [t](const Vector& c) -> Vector {
        return (1.0 - t / std::max(c.norm(), t)) * c;
      });
    }
    case RegularizerKind::Smoothness: {
      const auto llt =
          smoothnessCache().get(x.rows(), spec.differenceOrder, 2.0 * spec.gamma * stepScale);
      return llt->solve(x);
    }
    case RegularizerKind::NormalizedHardSparsity:
      return perColumn(x, [&](const Vector& c) {
        return prox::normalizedHardThreshold(c, spec.sparsity);
      });
  }
  return x;
}

double evalRegularizer(const RegularizerSpec& spec, const Matrix& x) {
  const auto indicator = [](bool feasible) { return feasible ? 0.0 : kInf; };
  switch (spec.kind) {
    case RegularizerKind::None:
      return 0.0;
    case RegularizerKind::NonNegative:
      return indicator(x.size() == 0 || x.minCoeff() >= -kFeasibilityTol);
    case RegularizerKind::Box:
      return indicator(x.size() == 0 || (x.minCoeff() >= spec.lower - kFeasibilityTol &&
                                         x.maxCoeff() <= spec.upper + kFeasibilityTol));
    case RegularizerKind::Simplex:
      return indicator(columnsSatisfy(x, [](const Vector& c) {
        return c.minCoeff() >= -kFeasibilityTol && std::abs(c.sum() - 1.0) <= kFeasibilityTol;
      }));
    case RegularizerKind::Monotone:
      return indicator(columnsSatisfy(x, [](const Vector& c) {
        for (Eigen::Index i = 1; i < c.size(); ++i) {
          if (c[i] < c[i - 1] - kFeasibilityTol) return false;
        }
        return true;
      }));
    case RegularizerKind::L1Ball:
      return indicator(columnsSatisfy(
          x, [&](const Vector& c) { return c.lpNorm<1>() <= spec.radius + kFeasibilityTol; }));
    case RegularizerKind::L2UnitBall:
      return indicator(
          columnsSatisfy(x, [](const Vector& c) { return c.norm() <= 1.0 + kFeasibilityTol; }));
    case RegularizerKind::Lasso:
      return spec.gamma * x.lpNorm<1>();
    case RegularizerKind::L2Norm:
      return spec.gamma * x.colwise().norm().sum();
    case RegularizerKind::Smoothness: {
      const Matrix d = prox::differenceMatrix(x.rows(), spec.differenceOrder);
      return spec.gamma * (d * x).squaredNorm();
    }
    case RegularizerKind::NormalizedHardSparsity:
      return indicator(columnsSatisfy(x, [&](const Vector& c) {
        const auto nonzeros = (c.array() != 0.0).count();
        return std::abs(c.norm() - 1.0) <= kFeasibilityTol && nonzeros <= spec.sparsity;
      }));
  }
  return 0.0;
}

}  // namespace cmtf
