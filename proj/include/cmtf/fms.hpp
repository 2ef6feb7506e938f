#pragma once

#include <vector>

#include "cmtf/tensor.hpp"

namespace cmtf {

/// Maximum-weight perfect matching on a square score matrix (Hungarian
/// method). Returns assignment[row] = column.
std::vector<int> maxWeightAssignment(const Matrix& score);

struct FmsReport {
  double fms = 0.0;
  /// permutations[i][r] is the true component matched to estimated column r.
  std::vector<std::vector<int>> permutations;
  double threshold = 0.0;
  bool passed = false;
};

/// Product of absolute column cosines across modes, per component pair.
Matrix componentSimilarity(const KruskalFactors& estimate, const KruskalFactors& truth);

/// Factor match score over all tensors after the best per-tensor component
/// matching, with threshold 0.99^(total number of modes).
FmsReport factorMatchScore(const std::vector<KruskalFactors>& estimate,
                           const std::vector<KruskalFactors>& truth);

double fmsThreshold(const std::vector<KruskalFactors>& truth);

}  // namespace cmtf
