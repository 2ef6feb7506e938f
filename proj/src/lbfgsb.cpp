#include "cmtf/lbfgsb.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace cmtf {

namespace {

struct CorrectionPair {
  Vector s, y;
  double rho;  // 1 / (y^T s)
};

Vector project(const Vector& x, const Vector& lower, const Vector& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

// Variables held at a bound because the gradient pushes them outward.
Eigen::Array<bool, Eigen::Dynamic, 1> freeMask(const Vector& x, const Vector& g,
                                               const Vector& lower, const Vector& upper) {
  Eigen::Array<bool, Eigen::Dynamic, 1> free(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool atLower = x[i] <= lower[i] && g[i] > 0.0;
    const bool atUpper = x[i] >= upper[i] && g[i] < 0.0;
    free[i] = !(atLower || atUpper);
  }
  return free;
}

Vector twoLoop(const Vector& g, const std::deque<CorrectionPair>& memory) {
  Vector q = g;
  std::vector<double> alpha(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    alpha[k] = memory[k].rho * memory[k].s.dot(q);
    q -= alpha[k] * memory[k].y;
  }
  if (!memory.empty()) {
    const auto& last = memory.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const double beta = memory[k].rho * memory[k].y.dot(q);
    q += (alpha[k] - beta) * memory[k].s;
  }
  return q;
}

}  // namespace

BoundedLbfgsResult minimizeBounded(const SmoothObjective& f, const Vector& x0, const Vector& lower,
                                   const Vector& upper, const BoundedLbfgsOptions& options) {
  if (lower.size() != x0.size() || upper.size() != x0.size()) {
    throw std::invalid_argument("bound vectors must match the variable count");
  }
  if ((lower.array() > upper.array()).any()) {
    throw std::invalid_argument("lower bound exceeds upper bound");
  }
  constexpr double kArmijo = 1e-4;

  BoundedLbfgsResult result;
  Vector x = project(x0, lower, upper);
  Vector g(x.size());
  double fx = f(x, g);
  result.evaluations = 1;
  result.initialValue = fx;
  if (options.recordTrace) result.trace.push_back(fx);
  if (!std::isfinite(fx)) throw std::domain_error("objective is not finite at the start point");

  std::deque<CorrectionPair> memory;
  Vector xNew(x.size());
  Vector gNew(x.size());

  int it = 0;
  for (; it < options.maxIterations; ++it) {
    const double pgNorm = (project(x - g, lower, upper) - x).lpNorm<Eigen::Infinity>();
    if (pgNorm <= options.projectedGradientTol) {
      result.status = LbfgsStatus::ProjectedGradientConverged;
      break;
    }
    const auto free = freeMask(x, g, lower, upper);
    const Vector gFree = free.select(g, 0.0);

    bool accepted = false;
    double fNew = fx;
    // First try the quasi-Newton direction, then plain steepest descent.
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      const bool quasiNewton = attempt == 0 && !memory.empty();
      if (attempt == 0 && memory.empty()) continue;
      Vector d = quasiNewton ? Vector(-twoLoop(gFree, memory)) : Vector(-gFree);
      d = free.select(d, 0.0);
      if (quasiNewton && d.dot(g) >= 0.0) continue;

      double step = quasiNewton ? 1.0 : 1.0 / std::max(1.0, gFree.norm());
      for (int ls = 0; ls < options.maxLineSearchSteps; ++ls, step *= 0.5) {
        xNew = project(x + step * d, lower, upper);
        const double slope = g.dot(xNew - x);
        if (slope >= 0.0) break;  // projection destroyed descent
        fNew = f(xNew, gNew);
        ++result.evaluations;
        if (std::isfinite(fNew) && fNew <= fx + kArmijo * slope && fNew < fx) {
          accepted = true;
          break;
        }
      }
      if (!accepted) memory.clear();
    }
    if (!accepted) {
      result.status = LbfgsStatus::LineSearchFailed;
      break;
    }

    Vector s = xNew - x;
    Vector y = gNew - g;
    const double sy = s.dot(y);
    if (sy > std::numeric_limits<double>::epsilon() * y.squaredNorm()) {
      memory.push_back({std::move(s), std::move(y), 1.0 / sy});
      if (static_cast<int>(memory.size()) > options.memory) memory.pop_front();
    }

    const double decrease = fx - fNew;
    const double scale = std::max({std::abs(fx), std::abs(fNew), 1.0});
    x.swap(xNew);
    g.swap(gNew);
    fx = fNew;
    if (options.recordTrace) result.trace.push_back(fx);
    if (decrease <= options.relativeFunctionTol * scale) {
      ++it;
      result.status = LbfgsStatus::FunctionChangeConverged;
      break;
    }
  }
  result.iterations = it;
  result.x = std::move(x);
  result.value = fx;
  return result;
}

}  // namespace cmtf
