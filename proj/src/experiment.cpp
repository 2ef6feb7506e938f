#include "cmtf/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cmtf/config.hpp"
#include "cmtf/fms.hpp"
#include "cmtf/tensor_io.hpp"

namespace cmtf {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

std::size_t parseCount(const std::string& text, const std::string& what) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || v < 1) throw std::invalid_argument("invalid " + what + " '" + text + "'");
  return static_cast<std::size_t>(v);
}

double parseReal(const std::string& text, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size()) throw std::invalid_argument("invalid " + what + " '" + text + "'");
  return v;
}

std::string padded(int v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", v);
  return buf;
}

bool unconstrainedFrobenius(const ProblemSpec& p) {
  for (const auto& t : p.tensors) {
    if (t.loss.kind != LossKind::Frobenius) return false;
    for (const auto& r : t.regularizers) {
      if (r.active()) return false;
    }
  }
  for (const auto& c : p.couplings) {
    if (c.kind != CouplingCase::Exact) return false;
  }
  return true;
}

ProblemSpec frobeniusControl(const ProblemSpec& p) {
  ProblemSpec q = p;
  for (auto& t : q.tensors) {
    t.loss = LossSpec::frobenius();
    t.regularizers.assign(t.data.order(), RegularizerSpec::nonNegative());
  }
  return q;
}

struct Arm {
  std::string name;
  bool frobeniusControl = false;
};

json runJson(const RunRecord& r) {
  return {{"dataset", r.dataset + 1},
          {"init", r.init + 1},
          {"iterations", r.iterations},
          {"termination", std::string(toString(r.reason))},
          {"f_tensors", r.fTensors},
          {"f_couplings", r.fCouplings},
          {"f_constraints", r.fConstraints},
          {"fms", r.fms},
          {"failed", r.failed}};
}

json solverJson(const SolverOptions& o) {
  return {{"inner_max_iters", o.innerMaxIters},
          {"inner_tol", o.innerTol},
          {"outer_tol_abs", o.outerTolAbs},
          {"outer_tol_rel", o.outerTolRel},
          {"outer_max_iters", o.outerMaxIters},
          {"lbfgs_memory", o.subsolver.memory},
          {"lbfgs_max_iters", o.subsolver.maxIterations},
          {"lbfgs_pgtol", o.subsolver.projectedGradientTol},
          {"lbfgs_ftol", o.subsolver.relativeFunctionTol},
          {"deterministic_timing", o.deterministicTiming}};
}

void writeText(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

}  // namespace

std::vector<Shape> parseShapes(const std::string& text) {
  std::vector<Shape> shapes;
  for (const std::string& part : split(text, ',')) {
    Shape s;
    for (const std::string& dim : split(part, 'x')) s.push_back(parseCount(dim, "dimension"));
    if (s.size() < 2) throw std::invalid_argument("shape '" + part + "' needs at least two modes");
    shapes.push_back(std::move(s));
  }
  if (shapes.empty()) throw std::invalid_argument("no shapes given");
  return shapes;
}

std::vector<std::pair<std::string, std::string>> applySynthOverrides(
    SynthSpec& spec, const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<std::pair<std::string, std::string>> rest;
  for (const auto& [key, value] : overrides) {
    if (key == "shapes") {
      spec.shapes = parseShapes(value);
    } else if (key == "ranks") {
      spec.ranks.clear();
      for (const auto& r : split(value, ',')) {
        spec.ranks.push_back(static_cast<Eigen::Index>(parseCount(r, "rank")));
      }
    } else if (key == "congruence") {
      if (value == "none") spec.congruence.reset();
      else spec.congruence = parseReal(value, "congruence");
    } else if (key == "noise") {
      spec.noiseLevel = parseReal(value, "noise level");
    } else if (key == "factors") {
      if (value == "normal") spec.factors = FactorDistribution::Normal;
      else if (value == "uniform") spec.factors = FactorDistribution::Uniform;
      else if (value == "gamma") spec.factors = FactorDistribution::Gamma;
      else throw std::invalid_argument("factors must be normal, uniform or gamma");
    } else {
      rest.emplace_back(key, value);
    }
  }
  // A single rank applies to every tensor.
  if (spec.ranks.size() == 1 && spec.shapes.size() > 1) {
    spec.ranks.assign(spec.shapes.size(), spec.ranks.front());
  }
  return rest;
}

SolverOptions experimentSolverOptions(const std::string& name) {
  SolverOptions o;
  if (name == "exp5") o.outerTolRel = 1e-6;
  return o;
}

void finalizeArm(ArmSummary& arm, int datasets) {
  arm.best.clear();
  arm.failedAll = 0;
  arm.failedBest = 0;
  for (const RunRecord& r : arm.runs) arm.failedAll += r.failed ? 1 : 0;
  std::vector<double> bestFms;
  for (int d = 0; d < datasets; ++d) {
    const RunRecord* best = nullptr;
    for (const RunRecord& r : arm.runs) {
      if (r.dataset == d && (!best || r.fTensors < best->fTensors)) best = &r;
    }
    if (!best) continue;
    arm.best.push_back(*best);
    arm.failedBest += best->failed ? 1 : 0;
    bestFms.push_back(best->fms);
  }
  std::sort(bestFms.begin(), bestFms.end());
  const std::size_t n = bestFms.size();
  arm.medianBestFms = n == 0 ? 0.0
                    : n % 2 ? bestFms[n / 2]
                            : 0.5 * (bestFms[n / 2 - 1] + bestFms[n / 2]);
}

std::string summaryJson(const RunSummary& s) {
  json arms = json::array();
  for (const ArmSummary& a : s.arms) {
    json runs = json::array();
    for (const auto& r : a.runs) runs.push_back(runJson(r));
    json best = json::array();
    for (const auto& r : a.best) best.push_back(runJson(r));
    arms.push_back({{"name", a.name},
                    {"failed_all", a.failedAll},
                    {"failed_best", a.failedBest},
                    {"median_best_fms", a.medianBestFms},
                    {"best_runs", best},
                    {"runs", runs}});
  }
  const json doc = {{"experiment", s.experiment}, {"seed", s.seed},
                    {"datasets", s.datasets},     {"inits", s.inits},
                    {"fms_threshold", s.fmsThreshold}, {"arms", arms}};
  return doc.dump(2) + "\n";
}

RunSummary runExperiment(const ExperimentOptions& opts, const fs::path& out) {
  if (opts.datasets < 1) throw std::invalid_argument("datasets must be at least 1");
  if (opts.inits < 0) throw std::invalid_argument("inits must be nonnegative");
  SynthSpec spec = experimentDefaults(opts.name);
  const auto solverOverrides = applySynthOverrides(spec, opts.overrides);
  SolverOptions base = experimentSolverOptions(opts.name);
  for (const auto& [key, value] : solverOverrides) setSolverOption(base, key, value);
  base.deterministicTiming = !opts.wallClock;
  base.validate();
  const int inits = opts.inits > 0 ? opts.inits : (opts.name == "exp4" ? 10 : 5);

  std::vector<Arm> arms{{std::string(toString(spec.loss.kind)), false}};
  if (spec.loss.kind != LossKind::Frobenius) arms.push_back({"frobenius", true});

  fs::create_directories(out);
  for (const Arm& a : arms) fs::create_directories(out / "traces" / a.name);
  {
    json overrides = json::object();
    for (const auto& [k, v] : opts.overrides) overrides[k] = v;
    json shapes = json::array();
    for (const auto& s : spec.shapes) shapes.push_back(s);
    const json snapshot = {{"experiment", opts.name},
                           {"seed", opts.seed},
                           {"datasets", opts.datasets},
                           {"inits", inits},
                           {"overrides", overrides},
                           {"shapes", shapes},
                           {"ranks", spec.ranks},
                           {"congruence", spec.congruence ? json(*spec.congruence) : json()},
                           {"noise_level", spec.noiseLevel},
                           {"solver", solverJson(base)}};
    writeText(out / "config.json", snapshot.dump(2) + "\n");
  }

  RunSummary summary;
  summary.experiment = opts.name;
  summary.seed = opts.seed;
  summary.datasets = opts.datasets;
  summary.inits = inits;

  std::vector<SyntheticProblem> data;
  for (int d = 0; d < opts.datasets; ++d) {
    Rng rng(streamSeed(opts.seed, {kDataStream, static_cast<std::uint64_t>(d)}));
    data.push_back(buildExperiment(spec, rng));
    if (opts.exportTruth) {
      const fs::path dir = out / "truth" / ("dataset_" + padded(d + 1));
      fs::create_directories(dir);
      for (std::size_t i = 0; i < data.back().truth.size(); ++i) {
        for (std::size_t m = 0; m < data.back().truth[i].order(); ++m) {
          writeMatrixText(dir / (data.back().problem.tensors[i].name + "_mode" +
                                 std::to_string(m + 1) + ".txt"),
                          data.back().truth[i][m]);
        }
      }
    }
  }
  summary.fmsThreshold = fmsThreshold(data.front().truth);

  struct Task {
    std::size_t arm;
    int dataset;
    int init;
  };
  std::vector<Task> tasks;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    for (int d = 0; d < opts.datasets; ++d) {
      for (int j = 0; j < inits; ++j) tasks.push_back({a, d, j});
    }
  }
  std::vector<RunRecord> records(tasks.size());
  std::vector<ProblemSpec> controls;
  if (arms.size() > 1) {
    for (const auto& sp : data) controls.push_back(frobeniusControl(sp.problem));
  }

  std::atomic<std::size_t> next{0};
  std::mutex errorMutex;
  std::exception_ptr firstError;
  const auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      try {
        const Task& t = tasks[k];
        const SyntheticProblem& sp = data[static_cast<std::size_t>(t.dataset)];
        const ProblemSpec& problem =
            arms[t.arm].frobeniusControl ? controls[static_cast<std::size_t>(t.dataset)] : sp.problem;
        SolverOptions o = base;
        o.seed = streamSeed(opts.seed, {kInitStream, static_cast<std::uint64_t>(t.dataset),
                                        static_cast<std::uint64_t>(t.init)});
        o.init = t.init == 0 && unconstrainedFrobenius(problem) ? InitMode::Svd
                                                                : InitMode::RandomNormal;
        const FitResult r = fit(problem, o, &sp.truth);

        RunRecord rec{.dataset = t.dataset, .init = t.init, .iterations = r.iterations,
                      .reason = r.reason};
        if (!r.trace.empty()) {
          const TraceRecord& last = r.trace.back();
          rec.fTensors = last.fTensors;
          rec.fCouplings = last.fCouplings;
          rec.fConstraints = last.fConstraints;
          rec.fms = last.fms.value_or(0.0);
        } else {
          rec.fms = factorMatchScore(r.state.factors, sp.truth).fms;
        }
        rec.failed = r.reason == TerminationReason::IterationCap || rec.fms < summary.fmsThreshold;
        records[k] = rec;

        std::ostringstream csv;
        writeTraceCsv(csv, r.trace, totalModes(problem));
        writeText(out / "traces" / arms[t.arm].name /
                      ("dataset_" + padded(t.dataset + 1) + "_init_" + padded(t.init + 1) + ".csv"),
                  csv.str());
        spdlog::info("{} {} dataset {} init {}: {} iterations, fms {:.6f}", opts.name,
                     arms[t.arm].name, t.dataset + 1, t.init + 1, r.iterations, rec.fms);
      } catch (...) {
        std::lock_guard lock(errorMutex);
        if (!firstError) firstError = std::current_exception();
        next = tasks.size();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(tasks.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (firstError) std::rethrow_exception(firstError);

  for (std::size_t a = 0; a < arms.size(); ++a) {
    ArmSummary arm;
    arm.name = arms[a].name;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      if (tasks[k].arm == a) arm.runs.push_back(records[k]);
    }
    finalizeArm(arm, opts.datasets);
    summary.arms.push_back(std::move(arm));
  }
  writeText(out / "summary.json", summaryJson(summary));
  return summary;
}

FitResult fitFromConfig(const fs::path& configPath, const fs::path& out) {
  const FitConfig cfg = loadConfig(configPath);
  fs::create_directories(out / "factors");
  fs::copy_file(configPath, out / "config.json", fs::copy_options::overwrite_existing);

  const FitResult r = fit(cfg.problem, cfg.options);
  std::ostringstream csv;
  writeTraceCsv(csv, r.trace, totalModes(cfg.problem));
  writeText(out / "trace.csv", csv.str());
  for (std::size_t i = 0; i < cfg.problem.tensors.size(); ++i) {
    for (std::size_t d = 0; d < r.state.factors[i].order(); ++d) {
      writeMatrixText(out / "factors" /
                          (cfg.problem.tensors[i].name + "_mode" + std::to_string(d + 1) + ".txt"),
                      r.state.factors[i][d]);
    }
  }
  for (std::size_t c = 0; c < cfg.problem.couplings.size(); ++c) {
    writeMatrixText(out / ("delta_mode" + std::to_string(cfg.problem.couplings[c].mode + 1) + ".txt"),
                    r.state.consensus[c].delta);
  }
  json result = {{"termination", std::string(toString(r.reason))}, {"iterations", r.iterations}};
  if (!r.trace.empty()) {
    result["f_tensors"] = r.trace.back().fTensors;
    result["f_couplings"] = r.trace.back().fCouplings;
    result["f_constraints"] = r.trace.back().fConstraints;
  }
  result["solver"] = solverJson(cfg.options);
  writeText(out / "result.json", result.dump(2) + "\n");
  return r;
}

}  // namespace cmtf
