#include "cmtf/fms.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cmtf {

std::vector<int> maxWeightAssignment(const Matrix& score) {
  if (score.rows() != score.cols()) throw ShapeError("assignment needs a square score matrix");
  const int n = static_cast<int>(score.rows());
  if (n == 0) return {};
  // Shortest augmenting path on costs -score, 1-based potentials.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int row = 1; row <= n; ++row) {
    match[0] = row;
    int col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const int r0 = match[col0];
      double delta = inf;
      int col1 = 0;
      for (int col = 1; col <= n; ++col) {
        if (used[col]) continue;
        const double cur = -score(r0 - 1, col - 1) - u[r0] - v[col];
        if (cur < minv[col]) {
          minv[col] = cur;
          way[col] = col0;
        }
        if (minv[col] < delta) {
          delta = minv[col];
          col1 = col;
        }
      }
      for (int col = 0; col <= n; ++col) {
        if (used[col]) {
          u[match[col]] += delta;
          v[col] -= delta;
        } else {
          minv[col] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const int col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int col = 1; col <= n; ++col) assignment[match[col] - 1] = col - 1;
  return assignment;
}

Matrix componentSimilarity(const KruskalFactors& estimate, const KruskalFactors& truth) {
  if (estimate.order() != truth.order() || estimate.rank() != truth.rank()) {
    throw ShapeError("factor match: order or rank mismatch");
  }
  const Eigen::Index r = truth.rank();
  Matrix s = Matrix::Ones(r, r);
  for (std::size_t d = 0; d < truth.order(); ++d) {
    const Matrix& a = estimate[d];
    const Matrix& b = truth[d];
    if (a.rows() != b.rows()) throw ShapeError("factor match: row count mismatch");
    const Vector na = a.colwise().norm().transpose().cwiseMax(1e-300);
    const Vector nb = b.colwise().norm().transpose().cwiseMax(1e-300);
    const Matrix cosines =
        (na.cwiseInverse().asDiagonal() * (a.transpose() * b) * nb.cwiseInverse().asDiagonal())
            .cwiseAbs();
    s = s.cwiseProduct(cosines);
  }
  return s;
}

double fmsThreshold(const std::vector<KruskalFactors>& truth) {
  std::size_t modes = 0;
  for (const auto& k : truth) modes += k.order();
  return std::pow(0.99, static_cast<double>(modes));
}

FmsReport factorMatchScore(const std::vector<KruskalFactors>& estimate,
                           const std::vector<KruskalFactors>& truth) {
  if (estimate.size() != truth.size()) throw ShapeError("factor match: tensor count mismatch");
  FmsReport report;
  report.fms = 1.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const Matrix s = componentSimilarity(estimate[i], truth[i]);
    auto perm = maxWeightAssignment(s);
    double sum = 0.0;
    for (std::size_t r = 0; r < perm.size(); ++r) sum += s(static_cast<Eigen::Index>(r), perm[r]);
    report.fms *= sum / static_cast<double>(perm.size());
    report.permutations.push_back(std::move(perm));
  }
  report.threshold = fmsThreshold(truth);
  report.passed = report.fms >= report.threshold;
  return report;
}

}  // namespace cmtf
