#include "cmtf/problem.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cmtf {

std::size_t ProblemSpec::maxOrder() const {
  std::size_t d = 0;
  for (const auto& t : tensors) d = std::max(d, t.data.order());
  return d;
}

const CouplingSpec* ProblemSpec::couplingForMode(std::size_t mode) const {
  const auto idx = couplingIndexForMode(mode);
  return idx ? &couplings[*idx] : nullptr;
}

std::optional<std::size_t> ProblemSpec::couplingIndexForMode(std::size_t mode) const {
  for (std::size_t c = 0; c < couplings.size(); ++c) {
    if (couplings[c].mode == mode) return c;
  }
  return std::nullopt;
}

std::vector<std::string> ProblemSpec::diagnostics(bool checkData) const {
  std::vector<std::string> out;
  if (tensors.empty()) out.push_back("problem has no tensors");

  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const TensorBlock& t = tensors[i];
    const std::string who = "tensor " + std::to_string(i + 1) +
                            (t.name.empty() ? std::string() : " (" + t.name + ")") + ": ";
    if (t.data.order() < 2) out.push_back(who + "needs at least two modes");
    if (t.data.size() == 0) out.push_back(who + "has no entries");
    if (t.rank < 1) out.push_back(who + "rank must be at least 1");
    if (!(t.weight > 0.0) || !std::isfinite(t.weight)) out.push_back(who + "weight must be positive");
    try {
      t.loss.validate();
    } catch (const std::exception& e) {
      out.push_back(who + e.what());
    }
    if (t.regularizers.size() != t.data.order()) {
      out.push_back(who + "expected " + std::to_string(t.data.order()) +
                    " regularizer entries, got " + std::to_string(t.regularizers.size()));
    } else {
      for (std::size_t d = 0; d < t.regularizers.size(); ++d) {
        try {
          t.regularizers[d].validate(static_cast<Eigen::Index>(t.data.dim(d)));
        } catch (const std::exception& e) {
          out.push_back(who + "mode " + std::to_string(d + 1) + " regularizer: " + e.what());
        }
      }
    }
    if (checkData) {
      try {
        checkDataDomain(t.loss, t.data.values());
      } catch (const std::exception& e) {
        out.push_back(who + e.what());
      }
    }
  }

  std::set<std::size_t> coupledModes;
  for (const CouplingSpec& c : couplings) {
    if (!coupledModes.insert(c.mode).second) {
      out.push_back("mode " + std::to_string(c.mode + 1) +
                    " has more than one coupling (at most one per mode)");
      continue;
    }
    std::vector<FactorShape> shapes;
    bool ok = true;
    for (const auto& p : c.participants) {
      if (p.tensor >= tensors.size()) {
        out.push_back("coupling in mode " + std::to_string(c.mode + 1) + ": tensor " +
                      std::to_string(p.tensor + 1) + " does not exist");
        ok = false;
        continue;
      }
      const TensorBlock& t = tensors[p.tensor];
      if (c.mode >= t.data.order()) {
        out.push_back("coupling in mode " + std::to_string(c.mode + 1) + ": tensor " +
                      std::to_string(p.tensor + 1) + " has only " +
                      std::to_string(t.data.order()) + " modes");
        ok = false;
        continue;
      }
      shapes.push_back({static_cast<Eigen::Index>(t.data.dim(c.mode)), t.rank});
    }
    if (!ok) continue;
    for (auto& msg : couplingDiagnostics(c, shapes)) out.push_back(std::move(msg));
  }
  return out;
}

void ProblemSpec::validate(bool checkData) const {
  const auto errors = diagnostics(checkData);
  if (errors.empty()) return;
  std::string msg = "invalid problem:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw std::invalid_argument(msg);
}

TensorBlock makeBlock(std::string name, DenseTensor data, Eigen::Index rank, double weight,
                      LossSpec loss) {
  TensorBlock b{.name = std::move(name), .rank = rank, .weight = weight, .loss = loss};
  b.regularizers.assign(data.order(), RegularizerSpec::none());
  b.data = std::move(data);
  return b;
}

void normalizeTensors(ProblemSpec& p) {
  const double w = 1.0 / static_cast<double>(p.tensors.size());
  for (auto& t : p.tensors) {
    const double norm = t.data.frobeniusNorm();
    if (norm > 0.0) t.data.asVector() /= norm;
    t.weight = w;
  }
}

std::string_view toString(InitMode mode) {
  switch (mode) {
    case InitMode::Svd: return "svd";
    case InitMode::RandomNormal: return "random";
    case InitMode::RandomUniform: return "uniform";
  }
  return "?";
}

InitMode initModeFromString(std::string_view name) {
  for (auto m : {InitMode::Svd, InitMode::RandomNormal, InitMode::RandomUniform}) {
    if (toString(m) == name) return m;
  }
  throw std::invalid_argument("unknown init mode '" + std::string(name) +
                              "' (expected svd, random or uniform)");
}

void SolverOptions::validate() const {
  if (innerMaxIters < 1) throw std::invalid_argument("inner_max_iters must be at least 1");
  if (outerMaxIters < 0) throw std::invalid_argument("outer_max_iters must be nonnegative");
  if (!(innerTol > 0.0) || !(outerTolAbs > 0.0) || !(outerTolRel > 0.0)) {
    throw std::invalid_argument("tolerances must be positive");
  }
}

std::string_view toString(TerminationReason reason) {
  return reason == TerminationReason::Converged ? "converged" : "iteration_cap";
}

}  // namespace cmtf
