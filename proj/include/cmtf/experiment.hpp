#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cmtf/solver.hpp"
#include "cmtf/synth.hpp"

namespace cmtf {

struct ExperimentOptions {
  std::string name;
  std::uint64_t seed = 0;
  int datasets = 10;
  /// 0 selects the experiment default (10 for exp4, 5 otherwise).
  int inits = 0;
  /// key=value pairs: shapes, ranks, congruence, noise, factors, or any
  /// solver option accepted by setSolverOption.
  std::vector<std::pair<std::string, std::string>> overrides;
  int jobs = 1;
  /// Record real elapsed time in traces (breaks byte-identical reruns).
  bool wallClock = false;
  bool exportTruth = false;
};

struct RunRecord {
  // 0-based here; summary.json and file names count from 1.
  int dataset = 0;
  int init = 0;
  int iterations = 0;
  TerminationReason reason = TerminationReason::IterationCap;
  double fTensors = 0.0;
  double fCouplings = 0.0;
  double fConstraints = 0.0;
  double fms = 0.0;
  bool failed = false;
};

/// All runs of one solver configuration ("arm") over the datasets.
struct ArmSummary {
  std::string name;
  std::vector<RunRecord> runs;
  std::vector<RunRecord> best;  // one per dataset, lowest final f_tensors
  int failedAll = 0;
  int failedBest = 0;
  double medianBestFms = 0.0;
};

struct RunSummary {
  std::string experiment;
  std::uint64_t seed = 0;
  int datasets = 0;
  int inits = 0;
  double fmsThreshold = 0.0;
  std::vector<ArmSummary> arms;
};

/// Parses "8x6x5,8x10" into shapes.
std::vector<Shape> parseShapes(const std::string& text);

/// Applies synthetic-data overrides and returns the remaining (solver) ones.
std::vector<std::pair<std::string, std::string>> applySynthOverrides(
    SynthSpec& spec, const std::vector<std::pair<std::string, std::string>>& overrides);

/// Solver settings used for the experiment suite.
SolverOptions experimentSolverOptions(const std::string& name);

/// Runs the dataset x initialization grid, writing config.json, one trace
/// CSV per run under traces/<arm>/, and summary.json into `out`.
RunSummary runExperiment(const ExperimentOptions& opts, const std::filesystem::path& out);

/// failed = iteration cap reached or FMS below the threshold.
void finalizeArm(ArmSummary& arm, int datasets);

std::string summaryJson(const RunSummary& s);

/// Fits a configuration file and writes config.json (copy), trace.csv,
/// result.json, factors/<tensor>_mode<d>.txt and delta_mode<d>.txt.
FitResult fitFromConfig(const std::filesystem::path& configPath, const std::filesystem::path& out);

}  // namespace cmtf
