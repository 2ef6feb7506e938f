#include "cmtf/solver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "cmtf/fms.hpp"
#include "cmtf/subproblem.hpp"

namespace cmtf {

namespace {

constexpr double kFloor = 1e-15;

double ratio(double num, double den) { return num / std::max(den, kFloor); }

struct Member {
  std::size_t tensor = 0;
  double rho = 1.0;
  const TensorBlock* block = nullptr;
  std::optional<CouplingMap> map;
  std::optional<FrobeniusFactorSolver> frobenius;
  Matrix mttkrp;
  Matrix unfolded;
  Matrix coKr;
};

Member makeMember(const ProblemSpec& p, std::size_t tensor, std::size_t mode,
                  const SolverState& state, std::optional<CouplingMap> map) {
  Member m;
  m.tensor = tensor;
  m.block = &p.tensors[tensor];
  const KruskalFactors& k = state.factors[tensor];
  m.rho = computeRho(k, mode, m.block->rank);
  m.map = std::move(map);
  if (m.block->loss.kind == LossKind::Frobenius) {
    const bool split = state.splits[tensor][mode].has_value();
    m.frobenius.emplace(gramHadamard(k, mode), m.block->weight, m.rho, split,
                        m.map ? &*m.map : nullptr);
    m.mttkrp = mttkrp(m.block->data, k, mode);
  } else {
    m.unfolded = unfold(m.block->data, mode);
    m.coKr = coKhatriRao(k, mode);
  }
  return m;
}

double lowerBoundFor(const TensorBlock& b) {
  return b.loss.requiresNonnegativeModel() ? 0.0 : -std::numeric_limits<double>::infinity();
}

Matrix updateFactor(const Member& m, const Matrix& current, const std::optional<SplitState>& split,
                    const Matrix* couplingTarget, const SolverOptions& opts) {
  std::optional<Matrix> splitTarget;
  if (split) splitTarget = split->z - split->dual;
  if (m.frobenius) {
    return m.frobenius->solve(m.mttkrp, splitTarget ? &*splitTarget : nullptr, couplingTarget);
  }
  FactorSubproblem sp{.loss = m.block->loss,
                      .unfolded = &m.unfolded,
                      .coKr = &m.coKr,
                      .weight = m.block->weight,
                      .rho = m.rho,
                      .splitTarget = splitTarget,
                      .map = m.map,
                      .couplingTarget = couplingTarget ? *couplingTarget : Matrix(),
                      .lowerBound = lowerBoundFor(*m.block)};
  return solveFactorSubproblemGeneral(sp, current, opts.subsolver).x;
}

GroupIterate snapshot(const std::vector<Member>& members, std::size_t mode,
                      const SolverState& state, const ConsensusState* cs) {
  GroupIterate g;
  for (const Member& m : members) {
    g.factors.push_back(state.factors[m.tensor][mode]);
    g.splits.push_back(state.splits[m.tensor][mode]);
  }
  if (cs) g.consensus = *cs;
  return g;
}

// Runs ADMM for one group until the inner residuals fall below tolerance.
std::pair<int, InnerResiduals> runGroup(const std::vector<Member>& members, std::size_t mode,
                                        const CouplingSpec* coupling, ConsensusState* cs,
                                        SolverState& state, const SolverOptions& opts) {
  InnerResiduals res;
  int it = 0;
  while (it < opts.innerMaxIters) {
    ++it;
    const GroupIterate before = snapshot(members, mode, state, cs);
    for (std::size_t j = 0; j < members.size(); ++j) {
      const Member& m = members[j];
      Matrix& c = state.factors[m.tensor][mode];
      std::optional<Matrix> target;
      if (cs) target = m.map->applyDelta(cs->delta) - cs->duals[j];
      c = updateFactor(m, c, state.splits[m.tensor][mode], target ? &*target : nullptr, opts);
    }
    if (cs) {
      std::vector<Matrix> current;
      for (const Member& m : members) current.push_back(state.factors[m.tensor][mode]);
      cs->delta = updateDelta(*coupling, current, *cs);
    }
    for (const Member& m : members) {
      auto& split = state.splits[m.tensor][mode];
      if (!split) continue;
      const Matrix& c = state.factors[m.tensor][mode];
      split->z = applyProx(m.block->regularizer(mode), c + split->dual, 1.0 / m.rho);
      split->dual += c - split->z;
    }
    if (cs) {
      for (std::size_t j = 0; j < members.size(); ++j) {
        cs->duals[j] = updateDualDelta(*coupling, j, state.factors[members[j].tensor][mode],
                                       cs->delta, cs->duals[j]);
      }
    }
    res = innerResiduals(coupling, before, snapshot(members, mode, state, cs));
    if (res.below(opts.innerTol)) break;
  }
  return {it, res};
}

Matrix leadingLeftSingularVectors(const Matrix& a, Eigen::Index rank, Rng& rng) {
  const Eigen::Index n = a.rows();
  Matrix out = randomNormal(n, rank, rng);
  const Eigen::Index keep = std::min(rank, n);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a * a.transpose());
  for (Eigen::Index r = 0; r < keep; ++r) out.col(r) = eig.eigenvectors().col(n - 1 - r);
  return out;
}

Matrix randomFactor(const TensorBlock& b, std::size_t mode, Eigen::Index rows, InitMode init,
                    Rng& rng) {
  if (init == InitMode::RandomUniform || b.nonnegativeFactor(mode)) {
    return randomUniform(rows, b.rank, rng);
  }
  return randomNormal(rows, b.rank, rng);
}

bool converged(double now, std::optional<double> prev, const SolverOptions& opts) {
  if (now < opts.outerTolAbs) return true;
  return prev && std::abs(now - *prev) / std::max(std::abs(now), 1e-300) < opts.outerTolRel;
}

std::string formatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double computeRho(const KruskalFactors& k, std::size_t mode, Eigen::Index rank) {
  if (rank < 1) throw std::invalid_argument("rank must be positive");
  const double rho = gramHadamard(k, mode).trace() / static_cast<double>(rank);
  return std::max(rho, 1e-12);
}

InnerResiduals innerResiduals(const CouplingSpec* coupling, const GroupIterate& before,
                              const GroupIterate& after) {
  InnerResiduals r;
  for (std::size_t j = 0; j < after.factors.size(); ++j) {
    const auto& split = after.splits[j];
    if (split) {
      r.constraintPrimal += ratio((after.factors[j] - split->z).norm(), after.factors[j].norm());
      r.constraintDual += ratio((split->z - before.splits[j]->z).norm(),
                                before.splits[j]->dual.norm());
    }
  }
  if (coupling && after.consensus) {
    const Matrix change = after.consensus->delta - before.consensus->delta;
    for (std::size_t j = 0; j < after.factors.size(); ++j) {
      r.couplingPrimal += couplingResidual(*coupling, j, after.factors[j], after.consensus->delta);
      r.couplingDual += ratio(coupling->map(j).applyDelta(change).norm(),
                              before.consensus->duals[j].norm());
    }
  }
  return r;
}

ModeUpdateReport admmModeUpdate(const ProblemSpec& p, std::size_t mode, SolverState& state,
                                const SolverOptions& opts) {
  ModeUpdateReport report;
  report.innerIterations.assign(p.tensors.size(), 0);

  std::vector<bool> handled(p.tensors.size(), false);
  if (const auto ci = p.couplingIndexForMode(mode)) {
    const CouplingSpec& c = p.couplings[*ci];
    std::vector<Member> members;
    for (std::size_t j = 0; j < c.participants.size(); ++j) {
      members.push_back(makeMember(p, c.participants[j].tensor, mode, state, c.map(j)));
    }
    const auto [iters, res] = runGroup(members, mode, &c, &state.consensus[*ci], state, opts);
    for (const Member& m : members) {
      report.innerIterations[m.tensor] = iters;
      handled[m.tensor] = true;
    }
    report.residuals.push_back(res);
  }

  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    if (handled[i] || mode >= p.tensors[i].data.order()) continue;
    std::vector<Member> members{makeMember(p, i, mode, state, std::nullopt)};
    if (!state.splits[i][mode]) {
      // Unregularized and uncoupled: one exact (or subsolver) update.
      Matrix& c = state.factors[i][mode];
      c = updateFactor(members[0], c, std::nullopt, nullptr, opts);
      report.innerIterations[i] = 1;
      continue;
    }
    const auto [iters, res] = runGroup(members, mode, nullptr, nullptr, state, opts);
    report.innerIterations[i] = iters;
    report.residuals.push_back(res);
  }
  return report;
}

ObjectiveValues evaluateObjective(const ProblemSpec& p, const SolverState& state) {
  ObjectiveValues v;
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const TensorBlock& b = p.tensors[i];
    const DenseTensor model = reconstruct(state.factors[i], b.data.shape());
    v.fTensors += b.weight * lossValue(b.loss, b.data, model);
    for (std::size_t d = 0; d < state.splits[i].size(); ++d) {
      const auto& split = state.splits[i][d];
      if (!split) continue;
      const Matrix& c = state.factors[i][d];
      v.fConstraints += ratio((c - split->z).norm(), c.norm());
    }
  }
  for (std::size_t ci = 0; ci < p.couplings.size(); ++ci) {
    const CouplingSpec& c = p.couplings[ci];
    for (std::size_t j = 0; j < c.participants.size(); ++j) {
      v.fCouplings += couplingResidual(c, j, state.factors[c.participants[j].tensor][c.mode],
                                       state.consensus[ci].delta);
    }
  }
  return v;
}

SolverState initializeState(const ProblemSpec& p, const SolverOptions& opts, Rng& rng) {
  InitMode init = opts.init;
  if (init == InitMode::Svd) {
    for (const auto& c : p.couplings) {
      if (c.kind != CouplingCase::Exact) {
        spdlog::warn("singular-vector initialization needs exact couplings; using random init");
        init = InitMode::RandomNormal;
        break;
      }
    }
  }

  SolverState s;
  s.factors.resize(p.tensors.size());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const TensorBlock& b = p.tensors[i];
    std::vector<Matrix> factors;
    for (std::size_t d = 0; d < b.data.order(); ++d) {
      const auto rows = static_cast<Eigen::Index>(b.data.dim(d));
      if (init != InitMode::Svd) {
        factors.push_back(randomFactor(b, d, rows, init, rng));
        continue;
      }
      const CouplingSpec* c = p.couplingForMode(d);
      if (c && c->participants.front().tensor != i && c->participantOf(i)) {
        factors.push_back(s.factors[c->participants.front().tensor][d]);
        continue;
      }
      Matrix a = unfold(b.data, d);
      if (c && c->participantOf(i)) {
        for (std::size_t j = 1; j < c->participants.size(); ++j) {
          const Matrix other = unfold(p.tensors[c->participants[j].tensor].data, d);
          Matrix joined(a.rows(), a.cols() + other.cols());
          joined << a, other;
          a = std::move(joined);
        }
      }
      factors.push_back(leadingLeftSingularVectors(a, b.rank, rng));
    }
    s.factors[i] = KruskalFactors(std::move(factors));
  }

  for (const CouplingSpec& c : p.couplings) {
    ConsensusState cs;
    cs.delta = randomNormal(c.deltaRows, c.deltaCols, rng);
    for (std::size_t j = 0; j < c.participants.size(); ++j) {
      const Matrix image = c.map(j).applyFactor(s.factors[c.participants[j].tensor][c.mode]);
      cs.duals.push_back(randomNormal(image.rows(), image.cols(), rng));
    }
    s.consensus.push_back(std::move(cs));
  }

  s.splits.resize(p.tensors.size());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const TensorBlock& b = p.tensors[i];
    s.splits[i].resize(b.data.order());
    for (std::size_t d = 0; d < b.data.order(); ++d) {
      if (!b.regularizer(d).active()) continue;
      const Matrix& c = s.factors[i][d];
      s.splits[i][d] = SplitState{applyProx(b.regularizer(d), c, 1.0),
                                  randomNormal(c.rows(), c.cols(), rng)};
    }
  }
  return s;
}

std::size_t totalModes(const ProblemSpec& p) {
  std::size_t m = 0;
  for (const auto& t : p.tensors) m += t.data.order();
  return m;
}

FitResult fit(const ProblemSpec& p, const SolverOptions& opts,
              const std::vector<KruskalFactors>* groundTruth, std::optional<SolverState> initial) {
  opts.validate();
  p.validate();
  Rng rng(opts.seed);
  FitResult result;
  result.state = initial ? std::move(*initial) : initializeState(p, opts, rng);
  SolverState& state = result.state;

  std::vector<std::size_t> offsets;
  std::size_t m = 0;
  for (const auto& t : p.tensors) {
    offsets.push_back(m);
    m += t.data.order();
  }

  const auto start = std::chrono::steady_clock::now();
  std::optional<ObjectiveValues> prev;
  for (int it = 1; it <= opts.outerMaxIters; ++it) {
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      for (std::size_t d = 0; d < state.factors[i].order(); ++d) {
        Matrix& c = state.factors[i][d];
        if (c.norm() > 0.0) continue;
        spdlog::warn("factor {} of tensor {} vanished at iteration {}; re-randomizing", d + 1,
                     i + 1, it);
        c = randomFactor(p.tensors[i], d, c.rows(), opts.init, rng);
      }
    }

    TraceRecord rec;
    rec.outerIteration = it;
    rec.innerIterations.assign(m, 0);
    for (std::size_t d = 0; d < p.maxOrder(); ++d) {
      const ModeUpdateReport report = admmModeUpdate(p, d, state, opts);
      for (std::size_t i = 0; i < p.tensors.size(); ++i) {
        if (d < p.tensors[i].data.order()) {
          rec.innerIterations[offsets[i] + d] = report.innerIterations[i];
        }
      }
    }

    const ObjectiveValues obj = evaluateObjective(p, state);
    if (!std::isfinite(obj.fTensors) || !std::isfinite(obj.fCouplings) ||
        !std::isfinite(obj.fConstraints)) {
      throw std::runtime_error("objective became non-finite at outer iteration " +
                               std::to_string(it) + " (f_tensors=" + formatDouble(obj.fTensors) +
                               ", f_couplings=" + formatDouble(obj.fCouplings) +
                               ", f_constraints=" + formatDouble(obj.fConstraints) + ")");
    }
    rec.fTensors = obj.fTensors;
    rec.fCouplings = obj.fCouplings;
    rec.fConstraints = obj.fConstraints;
    rec.seconds = opts.deterministicTiming
                      ? 0.0
                      : std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                            .count();
    if (groundTruth) rec.fms = factorMatchScore(state.factors, *groundTruth).fms;
    result.trace.push_back(std::move(rec));
    result.iterations = it;

    const auto settled = [&](double ObjectiveValues::*field) {
      return converged(obj.*field, prev ? std::optional((*prev).*field) : std::nullopt, opts);
    };
    const bool done = settled(&ObjectiveValues::fTensors) &&
                      settled(&ObjectiveValues::fCouplings) &&
                      settled(&ObjectiveValues::fConstraints);
    prev = obj;
    if (done) {
      result.reason = TerminationReason::Converged;
      break;
    }
  }
  return result;
}

void writeTraceCsv(std::ostream& os, const std::vector<TraceRecord>& trace, std::size_t modes) {
  os << "iter,f_tensors,f_couplings,f_constraints,seconds";
  for (std::size_t j = 1; j <= modes; ++j) os << ",inner_iters_mode_" << j;
  os << ",fms\n";
  for (const TraceRecord& r : trace) {
    os << r.outerIteration << ',' << formatDouble(r.fTensors) << ',' << formatDouble(r.fCouplings)
       << ',' << formatDouble(r.fConstraints) << ',' << formatDouble(r.seconds);
    for (std::size_t j = 0; j < modes; ++j) {
      os << ',' << (j < r.innerIterations.size() ? r.innerIterations[j] : 0);
    }
    os << ',';
    if (r.fms) os << formatDouble(*r.fms);
    os << '\n';
  }
}

}  // namespace cmtf
