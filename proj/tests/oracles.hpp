#pragma once

// Brute-force reference computations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "cmtf/coupling.hpp"
#include "cmtf/rng.hpp"
#include "cmtf/tensor.hpp"

namespace oracle {

using cmtf::Matrix;
using cmtf::Vector;

inline Eigen::Map<const Vector> vec(const Matrix& m) { return {m.data(), m.size()}; }

inline Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

inline Matrix identity(Eigen::Index n) { return Matrix::Identity(n, n); }

/// Matrix of C -> A(C) acting on vec(C) for a participant whose factor is n x R.
inline Matrix factorOperator(cmtf::CouplingCase kind, const Matrix& h, Eigen::Index n,
                             Eigen::Index r) {
  using cmtf::CouplingCase;
  switch (kind) {
    case CouplingCase::ModeTransformToDelta: return kron(identity(r), h);
    case CouplingCase::ComponentTransformToDelta: return kron(h.transpose(), identity(n));
    default: return identity(n * r);
  }
}

/// Matrix of Delta -> B(Delta) acting on vec(Delta).
inline Matrix deltaOperator(cmtf::CouplingCase kind, const Matrix& h, Eigen::Index deltaRows,
                            Eigen::Index deltaCols) {
  using cmtf::CouplingCase;
  switch (kind) {
    case CouplingCase::DeltaToMode: return kron(identity(deltaCols), h);
    case CouplingCase::DeltaToComponent: return kron(h.transpose(), identity(deltaRows));
    default: return identity(deltaRows * deltaCols);
  }
}

/// Entry (j_1..j_D) = sum_r prod_d C_d(j_d, r) by explicit loops.
inline cmtf::DenseTensor loopReconstruct(const cmtf::KruskalFactors& k) {
  cmtf::Shape shape;
  for (std::size_t d = 0; d < k.order(); ++d) shape.push_back(static_cast<std::size_t>(k[d].rows()));
  cmtf::DenseTensor t(shape);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t lin = 0; lin < t.size(); ++lin) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < k.rank(); ++r) {
      double p = 1.0;
      for (std::size_t d = 0; d < shape.size(); ++d) p *= k[d](static_cast<Eigen::Index>(idx[d]), r);
      s += p;
    }
    t[lin] = s;
    for (std::size_t d = 0; d < shape.size(); ++d) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return t;
}

/// Columnwise Kronecker product by a double loop.
inline Matrix loopKhatriRao(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index l = 0; l < b.rows(); ++l) out(i * b.rows() + l, j) = a(i, j) * b(l, j);
    }
  }
  return out;
}

/// Least-squares isotonic fit by enumerating every partition of the index
/// range into contiguous blocks and keeping the best nondecreasing one.
inline Vector isotonicByEnumeration(const Vector& x) {
  const Eigen::Index n = x.size();
  Vector best;
  double bestCost = INFINITY;
  for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
    Vector fit(n);
    Eigen::Index start = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool cut = i == n - 1 || (mask >> i) & 1u;
      if (!cut) continue;
      fit.segment(start, i - start + 1).setConstant(x.segment(start, i - start + 1).mean());
      start = i + 1;
    }
    bool monotone = true;
    for (Eigen::Index i = 1; i < n; ++i) monotone = monotone && fit(i) >= fit(i - 1) - 1e-15;
    const double cost = (fit - x).squaredNorm();
    if (monotone && cost < bestCost) {
      bestCost = cost;
      best = fit;
    }
  }
  return best;
}

/// Best score over all permutations, sum_r score(r, perm[r]).
inline double bestPermutationScore(const Matrix& score) {
  std::vector<int> perm(static_cast<std::size_t>(score.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = -INFINITY;
  do {
    double s = 0.0;
    for (std::size_t r = 0; r < perm.size(); ++r) s += score(static_cast<Eigen::Index>(r), perm[r]);
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Central finite-difference gradient.
inline Vector finiteDifference(const std::function<double(const Vector&)>& f, const Vector& x,
                               double step) {
  Vector g(x.size());
  Vector y = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    y(j) = x(j) + step;
    const double up = f(y);
    y(j) = x(j) - step;
    const double down = f(y);
    y(j) = x(j);
    g(j) = (up - down) / (2.0 * step);
  }
  return g;
}

inline cmtf::KruskalFactors randomKruskal(const cmtf::Shape& shape, Eigen::Index rank,
                                          cmtf::Rng& rng) {
  std::vector<Matrix> f;
  for (std::size_t n : shape) f.push_back(cmtf::randomNormal(static_cast<Eigen::Index>(n), rank, rng));
  return cmtf::KruskalFactors(std::move(f));
}

inline cmtf::DenseTensor randomTensor(const cmtf::Shape& shape, cmtf::Rng& rng) {
  cmtf::DenseTensor t(shape);
  const Matrix v = cmtf::randomNormal(static_cast<Eigen::Index>(t.size()), 1, rng);
  for (std::size_t j = 0; j < t.size(); ++j) t[j] = v(static_cast<Eigen::Index>(j));
  return t;
}

}  // namespace oracle
