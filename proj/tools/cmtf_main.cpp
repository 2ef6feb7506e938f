#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cmtf/config.hpp"
#include "cmtf/experiment.hpp"
#include "cmtf/synth.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::vector<std::pair<std::string, std::string>> parseOverrides(const std::vector<std::string>& items) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument("override '" + item + "' is not key=value");
    }
    out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return out;
}

void printDiagnostics(const std::vector<cmtf::Diagnostic>& diags) {
  for (const auto& d : diags) std::cerr << "error: " << d.str() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled matrix and tensor factorization with AO-ADMM"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  cmtf::ExperimentOptions exp;
  std::string expOut = "runs";
  std::vector<std::string> expOverrides;
  auto* experiment = app.add_subcommand("experiment", "Run a synthetic experiment grid");
  experiment->add_option("name", exp.name, "Experiment name")
      ->required()
      ->check(CLI::IsMember(cmtf::experimentNames()));
  experiment->add_option("--seed", exp.seed, "Master seed");
  experiment->add_option("--out", expOut, "Output directory");
  experiment->add_option("--datasets", exp.datasets, "Number of datasets")->check(CLI::PositiveNumber);
  experiment->add_option("--inits", exp.inits, "Initializations per dataset (0: default)")
      ->check(CLI::NonNegativeNumber);
  experiment->add_option("--override", expOverrides, "key=value override (repeatable)");
  experiment->add_option("--jobs", exp.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  experiment->add_flag("--wall-clock", exp.wallClock, "Record elapsed seconds in traces");
  experiment->add_flag("--export-truth", exp.exportTruth, "Write ground-truth factors");

  std::string fitConfig;
  std::string fitOut = "fit";
  auto* fit = app.add_subcommand("fit", "Fit tensors described by a configuration file");
  fit->add_option("config", fitConfig, "Configuration file")->required();
  fit->add_option("--out", fitOut, "Output directory");

  std::string validateConfig;
  auto* validate = app.add_subcommand("validate", "Check a configuration file");
  validate->add_option("config", validateConfig, "Configuration file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*validate) {
      const auto diags = cmtf::validateConfig(validateConfig);
      if (!diags.empty()) {
        printDiagnostics(diags);
        return kExitValidation;
      }
      std::cout << validateConfig << ": ok\n";
      return 0;
    }
    if (*fit) {
      const auto r = cmtf::fitFromConfig(fitConfig, fitOut);
      std::cout << "termination: " << cmtf::toString(r.reason) << " after " << r.iterations
                << " iterations\n";
      return 0;
    }
    try {
      exp.overrides = parseOverrides(expOverrides);
      cmtf::SynthSpec probe = cmtf::experimentDefaults(exp.name);
      cmtf::SolverOptions probeOpts;
      for (const auto& [k, v] : cmtf::applySynthOverrides(probe, exp.overrides)) {
        cmtf::setSolverOption(probeOpts, k, v);
      }
      probeOpts.validate();
    } catch (const std::invalid_argument& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitValidation;
    }
    const auto summary = cmtf::runExperiment(exp, expOut);
    for (const auto& arm : summary.arms) {
      std::printf("%s: failed runs %d/%d (all), %d/%d (best), median best FMS %.4f\n",
                  arm.name.c_str(), arm.failedAll, static_cast<int>(arm.runs.size()), arm.failedBest,
                  static_cast<int>(arm.best.size()), arm.medianBestFms);
    }
    return 0;
  } catch (const cmtf::ConfigError& e) {
    printDiagnostics(e.diagnostics());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
