#include "cmtf/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cmtf/tensor_io.hpp"

namespace cmtf {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string joinDiagnostics(const std::vector<Diagnostic>& d) {
  std::string msg = "configuration has " + std::to_string(d.size()) + " error(s)";
  for (const auto& x : d) msg += "\n  " + x.str();
  return msg;
}

struct Context {
  fs::path base;
  std::vector<Diagnostic> diagnostics;

  void error(std::string field, std::string message) {
    diagnostics.push_back({std::move(field), std::move(message)});
  }
  fs::path resolve(const std::string& file) const {
    const fs::path p(file);
    return p.is_absolute() ? p : base / p;
  }
};

enum class TransformSource { None, File, Inline, Selection };

struct ParsedParticipant {
  std::size_t tensor = 0;
  TransformSource source = TransformSource::None;
  fs::path file;
  Matrix inlineMatrix;
  std::vector<Eigen::Index> selection;  // 1-based Delta columns
  std::string field;
};

struct ParsedCoupling {
  std::size_t mode = 0;
  CouplingCase kind = CouplingCase::Exact;
  std::vector<ParsedParticipant> participants;
  std::optional<std::pair<Eigen::Index, Eigen::Index>> deltaShape;
  std::string field;
};

struct ParsedTensor {
  std::string name;
  fs::path file;
  Shape shape;
  Eigen::Index rank = 1;
  std::optional<double> weight;
  LossSpec loss;
  std::vector<RegularizerSpec> regularizers;
};

struct ParsedConfig {
  std::vector<ParsedTensor> tensors;
  std::vector<ParsedCoupling> couplings;
  SolverOptions options;
  bool normalize = false;
};

std::string at(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}
std::string at(const std::string& path, std::size_t index) {
  return path + "[" + std::to_string(index) + "]";
}

template <typename T>
std::optional<T> read(Context& ctx, const json& obj, const std::string& key, const std::string& path,
                      bool required) {
  if (!obj.contains(key)) {
    if (required) ctx.error(at(path, key), "missing required field");
    return std::nullopt;
  }
  const json& v = obj.at(key);
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw std::invalid_argument("expected a string");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw std::invalid_argument("expected true or false");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
    } else {
      if (!v.is_number()) throw std::invalid_argument("expected a number");
    }
    return v.get<T>();
  } catch (const std::exception& e) {
    ctx.error(at(path, key), e.what());
    return std::nullopt;
  }
}

void checkKeys(Context& ctx, const json& obj, const std::string& path,
               std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      ctx.error(at(path, key), "unknown field");
    }
  }
}

LossSpec parseLoss(Context& ctx, const json& v, const std::string& path) {
  LossSpec loss;
  try {
    if (v.is_string()) {
      loss.kind = lossKindFromString(v.get<std::string>());
    } else if (v.is_object()) {
      checkKeys(ctx, v, path, {"kind", "beta", "alpha", "delta"});
      if (auto kind = read<std::string>(ctx, v, "kind", path, true)) {
        loss.kind = lossKindFromString(*kind);
      }
      if (auto b = read<double>(ctx, v, "beta", path, false)) loss.beta = *b;
      if (auto a = read<double>(ctx, v, "alpha", path, false)) loss.alpha = *a;
      if (auto d = read<double>(ctx, v, "delta", path, false)) loss.delta = *d;
    } else {
      ctx.error(path, "expected a loss name or object");
      return loss;
    }
    loss.validate();
  } catch (const std::exception& e) {
    ctx.error(path, e.what());
  }
  return loss;
}

RegularizerSpec parseRegularizer(Context& ctx, const json& v, const std::string& path) {
  RegularizerSpec r;
  checkKeys(ctx, v, path,
            {"mode", "kind", "lower", "upper", "radius", "gamma", "order", "sparsity"});
  if (auto kind = read<std::string>(ctx, v, "kind", path, true)) {
    try {
      r.kind = regularizerKindFromString(*kind);
    } catch (const std::exception& e) {
      ctx.error(at(path, "kind"), e.what());
    }
  }
  if (auto x = read<double>(ctx, v, "lower", path, false)) r.lower = *x;
  if (auto x = read<double>(ctx, v, "upper", path, false)) r.upper = *x;
  if (auto x = read<double>(ctx, v, "radius", path, false)) r.radius = *x;
  if (auto x = read<double>(ctx, v, "gamma", path, false)) r.gamma = *x;
  if (auto x = read<int>(ctx, v, "order", path, false)) r.differenceOrder = *x;
  if (auto x = read<int>(ctx, v, "sparsity", path, false)) r.sparsity = *x;
  return r;
}

std::optional<Matrix> parseInlineMatrix(Context& ctx, const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) {
    ctx.error(path, "expected a non-empty array of rows");
    return std::nullopt;
  }
  const std::size_t cols = v.front().is_array() ? v.front().size() : 0;
  Matrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (!v[r].is_array() || v[r].size() != cols || cols == 0) {
      ctx.error(at(path, r), "rows must be non-empty arrays of equal length");
      return std::nullopt;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!v[r][c].is_number()) {
        ctx.error(at(at(path, r), c), "expected a number");
        return std::nullopt;
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c].get<double>();
    }
  }
  return m;
}

std::optional<std::size_t> resolveTensor(Context& ctx, const json& v, const std::string& path,
                                         const std::vector<ParsedTensor>& tensors) {
  if (v.is_number_integer()) {
    const auto idx = v.get<long long>();
    if (idx >= 1 && static_cast<std::size_t>(idx) <= tensors.size()) {
      return static_cast<std::size_t>(idx - 1);
    }
    ctx.error(path, "tensor index " + std::to_string(idx) + " out of range");
    return std::nullopt;
  }
  if (v.is_string()) {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (tensors[i].name == v.get<std::string>()) return i;
    }
    ctx.error(path, "no tensor named '" + v.get<std::string>() + "'");
    return std::nullopt;
  }
  ctx.error(path, "expected a tensor name or 1-based index");
  return std::nullopt;
}

ParsedConfig parse(Context& ctx, const json& doc) {
  ParsedConfig cfg;
  if (!doc.is_object()) {
    ctx.error("", "top level must be an object");
    return cfg;
  }
  checkKeys(ctx, doc, "", {"tensors", "couplings", "solver", "normalize"});
  if (auto n = read<bool>(ctx, doc, "normalize", "", false)) cfg.normalize = *n;

  if (!doc.contains("tensors") || !doc["tensors"].is_array() || doc["tensors"].empty()) {
    ctx.error("tensors", "expected a non-empty array");
    return cfg;
  }
  const json& tensors = doc["tensors"];
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string path = at("tensors", i);
    const json& t = tensors[i];
    if (!t.is_object()) {
      ctx.error(path, "expected an object");
      continue;
    }
    checkKeys(ctx, t, path, {"name", "file", "rank", "weight", "loss", "regularizers"});
    ParsedTensor pt;
    pt.name = read<std::string>(ctx, t, "name", path, false).value_or("T" + std::to_string(i + 1));
    if (auto file = read<std::string>(ctx, t, "file", path, true)) {
      pt.file = ctx.resolve(*file);
      try {
        pt.shape = readTensorHeader(pt.file);
      } catch (const std::exception& e) {
        ctx.error(at(path, "file"), e.what());
      }
    }
    if (auto rank = read<long long>(ctx, t, "rank", path, true)) {
      if (*rank < 1) ctx.error(at(path, "rank"), "must be at least 1");
      pt.rank = static_cast<Eigen::Index>(*rank);
    }
    pt.weight = read<double>(ctx, t, "weight", path, false);
    if (t.contains("loss")) pt.loss = parseLoss(ctx, t["loss"], at(path, "loss"));
    pt.regularizers.assign(pt.shape.size(), RegularizerSpec::none());
    if (t.contains("regularizers")) {
      const json& regs = t["regularizers"];
      if (!regs.is_array()) ctx.error(at(path, "regularizers"), "expected an array");
      for (std::size_t j = 0; regs.is_array() && j < regs.size(); ++j) {
        const std::string rpath = at(at(path, "regularizers"), j);
        if (!regs[j].is_object()) {
          ctx.error(rpath, "expected an object");
          continue;
        }
        const RegularizerSpec spec = parseRegularizer(ctx, regs[j], rpath);
        const json& mode = regs[j].contains("mode") ? regs[j]["mode"] : json("all");
        if (mode.is_string() && mode.get<std::string>() == "all") {
          std::fill(pt.regularizers.begin(), pt.regularizers.end(), spec);
        } else if (mode.is_number_integer()) {
          const auto d = mode.get<long long>();
          if (d < 1 || static_cast<std::size_t>(d) > pt.regularizers.size()) {
            ctx.error(at(rpath, "mode"), "mode " + std::to_string(d) + " out of range");
          } else {
            pt.regularizers[static_cast<std::size_t>(d - 1)] = spec;
          }
        } else {
          ctx.error(at(rpath, "mode"), "expected a 1-based mode or \"all\"");
        }
      }
    }
    cfg.tensors.push_back(std::move(pt));
  }

  if (doc.contains("couplings")) {
    const json& cs = doc["couplings"];
    if (!cs.is_array()) ctx.error("couplings", "expected an array");
    for (std::size_t c = 0; cs.is_array() && c < cs.size(); ++c) {
      const std::string path = at("couplings", c);
      const json& v = cs[c];
      if (!v.is_object()) {
        ctx.error(path, "expected an object");
        continue;
      }
      checkKeys(ctx, v, path, {"mode", "case", "participants", "delta_shape"});
      ParsedCoupling pc;
      pc.field = path;
      if (auto mode = read<long long>(ctx, v, "mode", path, true)) {
        if (*mode < 1) ctx.error(at(path, "mode"), "modes are 1-based");
        else pc.mode = static_cast<std::size_t>(*mode - 1);
      }
      if (v.contains("case")) {
        const json& k = v["case"];
        try {
          pc.kind = couplingCaseFromString(k.is_string() ? k.get<std::string>() : k.dump());
        } catch (const std::exception& e) {
          ctx.error(at(path, "case"), e.what());
        }
      }
      if (v.contains("delta_shape")) {
        const json& s = v["delta_shape"];
        if (s.is_array() && s.size() == 2 && s[0].is_number_integer() && s[1].is_number_integer()) {
          pc.deltaShape = {s[0].get<Eigen::Index>(), s[1].get<Eigen::Index>()};
        } else {
          ctx.error(at(path, "delta_shape"), "expected [rows, columns]");
        }
      }
      const json& ps = v.contains("participants") ? v["participants"] : json();
      if (!ps.is_array() || ps.empty()) {
        ctx.error(at(path, "participants"), "expected a non-empty array");
      }
      for (std::size_t j = 0; ps.is_array() && j < ps.size(); ++j) {
        const std::string ppath = at(at(path, "participants"), j);
        ParsedParticipant pp;
        pp.field = ppath;
        const json& pj = ps[j];
        const json* tensorRef = &pj;
        if (pj.is_object()) {
          checkKeys(ctx, pj, ppath, {"tensor", "transform", "selection"});
          if (!pj.contains("tensor")) {
            ctx.error(at(ppath, "tensor"), "missing required field");
            continue;
          }
          tensorRef = &pj["tensor"];
        }
        const auto idx = resolveTensor(ctx, *tensorRef, ppath, cfg.tensors);
        if (!idx) continue;
        pp.tensor = *idx;
        if (pj.is_object() && pj.contains("selection")) {
          const json& sel = pj["selection"];
          if (!sel.is_array() || sel.empty()) {
            ctx.error(at(ppath, "selection"), "expected a non-empty array of 1-based columns");
            continue;
          }
          for (const auto& e : sel) {
            if (!e.is_number_integer() || e.get<long long>() < 1) {
              ctx.error(at(ppath, "selection"), "entries must be 1-based integers");
              break;
            }
            pp.selection.push_back(e.get<Eigen::Index>());
          }
          pp.source = TransformSource::Selection;
        } else if (pj.is_object() && pj.contains("transform")) {
          const json& tr = pj["transform"];
          if (tr.is_string()) {
            pp.source = TransformSource::File;
            pp.file = ctx.resolve(tr.get<std::string>());
          } else if (auto m = parseInlineMatrix(ctx, tr, at(ppath, "transform"))) {
            pp.source = TransformSource::Inline;
            pp.inlineMatrix = std::move(*m);
          }
        }
        pc.participants.push_back(std::move(pp));
      }
      cfg.couplings.push_back(std::move(pc));
    }
  }

  if (doc.contains("solver")) {
    const json& s = doc["solver"];
    if (!s.is_object()) ctx.error("solver", "expected an object");
    for (auto it = s.begin(); s.is_object() && it != s.end(); ++it) {
      try {
        const std::string text = it->is_string() ? it->get<std::string>() : it->dump();
        setSolverOption(cfg.options, it.key(), text);
      } catch (const std::exception& e) {
        ctx.error(at("solver", it.key()), e.what());
      }
    }
  }
  return cfg;
}

// Builds the problem; tensor payloads are read only when `loadData` is set.
ProblemSpec assemble(Context& ctx, const ParsedConfig& cfg, bool loadData) {
  ProblemSpec p;
  const double defaultWeight = 1.0 / static_cast<double>(cfg.tensors.size());
  for (const ParsedTensor& t : cfg.tensors) {
    DenseTensor data;
    if (loadData) {
      data = readTensor(t.file);
      if (cfg.normalize && data.frobeniusNorm() > 0.0) data.asVector() /= data.frobeniusNorm();
    } else {
      data = DenseTensor(t.shape);
    }
    TensorBlock b = makeBlock(t.name, std::move(data), t.rank, t.weight.value_or(defaultWeight),
                              t.loss);
    if (t.regularizers.size() == b.data.order()) b.regularizers = t.regularizers;
    p.tensors.push_back(std::move(b));
  }

  for (const ParsedCoupling& pc : cfg.couplings) {
    CouplingSpec c;
    c.mode = pc.mode;
    c.kind = pc.kind;
    Eigen::Index selectionWidth = pc.deltaShape ? pc.deltaShape->second : 0;
    for (const auto& pp : pc.participants) {
      for (auto s : pp.selection) selectionWidth = std::max(selectionWidth, s);
    }
    bool ok = true;
    for (const ParsedParticipant& pp : pc.participants) {
      CouplingParticipant part{.tensor = pp.tensor};
      const bool needsTransform = pc.kind != CouplingCase::Exact;
      switch (pp.source) {
        case TransformSource::None:
          if (needsTransform) {
            ctx.error(pp.field, "case " + std::string(toString(pc.kind)) + " needs a transform");
            ok = false;
          }
          break;
        case TransformSource::File:
          try {
            part.transform = readMatrix(pp.file);
          } catch (const std::exception& e) {
            ctx.error(at(pp.field, "transform"), e.what());
            ok = false;
          }
          break;
        case TransformSource::Inline: part.transform = pp.inlineMatrix; break;
        case TransformSource::Selection: {
          if (pc.kind != CouplingCase::DeltaToComponent) {
            ctx.error(at(pp.field, "selection"), "selections apply to case 3b only");
            ok = false;
            break;
          }
          const auto cols = static_cast<Eigen::Index>(pp.selection.size());
          if (*std::max_element(pp.selection.begin(), pp.selection.end()) > selectionWidth) {
            ctx.error(at(pp.field, "selection"), "column exceeds delta_shape");
            ok = false;
            break;
          }
          part.transform = Matrix::Zero(selectionWidth, cols);
          for (Eigen::Index r = 0; r < cols; ++r) {
            part.transform(pp.selection[static_cast<std::size_t>(r)] - 1, r) = 1.0;
          }
          break;
        }
      }
      if (!needsTransform && pp.source != TransformSource::None) {
        ctx.error(pp.field, "case 1 couplings take no transform");
        ok = false;
      }
      c.participants.push_back(std::move(part));
    }
    if (!ok || c.participants.empty()) continue;

    if (pc.deltaShape) {
      c.deltaRows = pc.deltaShape->first;
      c.deltaCols = pc.deltaShape->second;
    } else {
      const auto& first = c.participants.front();
      const TensorBlock& t = p.tensors[first.tensor];
      if (c.mode < t.data.order()) {
        const FactorShape s = impliedDeltaShape(
            c.kind, first.transform, {static_cast<Eigen::Index>(t.data.dim(c.mode)), t.rank});
        c.deltaRows = s.rows;
        c.deltaCols = s.cols;
      }
    }
    p.couplings.push_back(std::move(c));
  }

  for (auto& msg : p.diagnostics(loadData)) ctx.error("", std::move(msg));
  return p;
}

std::optional<json> readDocument(Context& ctx, const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    ctx.error("", "cannot open " + path.string());
    return std::nullopt;
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    ctx.error("", std::string("parse error: ") + e.what());
    return std::nullopt;
  }
}

template <typename T>
T parseNumber(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("invalid value '" + text + "' for " + key);
  }
  return value;
}

}  // namespace

ConfigError::ConfigError(std::vector<Diagnostic> diagnostics)
    : std::runtime_error(joinDiagnostics(diagnostics)), diagnostics_(std::move(diagnostics)) {}

void setSolverOption(SolverOptions& opts, const std::string& key, const std::string& value) {
  if (key == "inner_max_iters") opts.innerMaxIters = parseNumber<int>(key, value);
  else if (key == "inner_tol") opts.innerTol = parseNumber<double>(key, value);
  else if (key == "outer_tol_abs") opts.outerTolAbs = parseNumber<double>(key, value);
  else if (key == "outer_tol_rel") opts.outerTolRel = parseNumber<double>(key, value);
  else if (key == "outer_max_iters") opts.outerMaxIters = parseNumber<int>(key, value);
  else if (key == "seed") opts.seed = parseNumber<std::uint64_t>(key, value);
  else if (key == "init") opts.init = initModeFromString(value);
  else if (key == "deterministic_timing") {
    if (value != "true" && value != "false") {
      throw std::invalid_argument("deterministic_timing must be true or false");
    }
    opts.deterministicTiming = value == "true";
  } else if (key == "lbfgs_memory") opts.subsolver.memory = parseNumber<int>(key, value);
  else if (key == "lbfgs_max_iters") opts.subsolver.maxIterations = parseNumber<int>(key, value);
  else if (key == "lbfgs_pgtol") opts.subsolver.projectedGradientTol = parseNumber<double>(key, value);
  else if (key == "lbfgs_ftol") opts.subsolver.relativeFunctionTol = parseNumber<double>(key, value);
  else throw std::invalid_argument("unknown solver option '" + key + "'");
}

std::vector<Diagnostic> validateConfig(const fs::path& configPath) {
  Context ctx{configPath.parent_path(), {}};
  const auto doc = readDocument(ctx, configPath);
  if (!doc) return ctx.diagnostics;
  const ParsedConfig cfg = parse(ctx, *doc);
  try {
    cfg.options.validate();
  } catch (const std::exception& e) {
    ctx.error("solver", e.what());
  }
  if (ctx.diagnostics.empty()) assemble(ctx, cfg, false);
  return ctx.diagnostics;
}

FitConfig loadConfig(const fs::path& configPath) {
  Context ctx{configPath.parent_path(), {}};
  const auto doc = readDocument(ctx, configPath);
  if (!doc) throw ConfigError(ctx.diagnostics);
  const ParsedConfig cfg = parse(ctx, *doc);
  try {
    cfg.options.validate();
  } catch (const std::exception& e) {
    ctx.error("solver", e.what());
  }
  if (!ctx.diagnostics.empty()) throw ConfigError(ctx.diagnostics);
  FitConfig out{assemble(ctx, cfg, true), cfg.options};
  if (!ctx.diagnostics.empty()) throw ConfigError(ctx.diagnostics);
  return out;
}

}  // namespace cmtf
