#include "arft/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace arft {
namespace {

using nlohmann::json;

// Offsets the oversampling stream away from the training stream so the two
// uses of one seed never consume identical raw draws.
constexpr std::uint64_t kRosStreamSalt = 0x9e3779b97f4a7c15ULL;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string fmt_axis_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// Runs a pipeline stage, rethrowing failures with the stage named so an
// aborted run always says where it died.
template <typename F>
auto run_stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("run stage '") + name + "' failed: " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open file for writing: " + path);
  out << content;
  out.flush();
  if (!out) throw ParseError("write failed: " + path);
}

std::string sanitize_component(const std::string& name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '.' || c == '_';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? std::string("_") : out;
}

// rows[0] is the header; columns are left-aligned and padded to the widest
// cell, separated by two spaces.
std::string format_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return "";
  const std::size_t cols = rows[0].size();
  std::vector<std::size_t> width(cols, 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < cols && c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::string& cell = c < row.size() ? row[c] : std::string();
      out += cell;
      if (c + 1 < cols) out.append(width[c] - cell.size() + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

std::string sigma_policy_name(SigmaPolicy p) {
  return p == SigmaPolicy::kMedian ? "median" : "fixed";
}

SigmaPolicy sigma_policy_from(const std::string& s) {
  if (s == "median") return SigmaPolicy::kMedian;
  if (s == "fixed") return SigmaPolicy::kFixed;
  throw ConfigError("unknown sigma_policy '" + s + "' (expected median|fixed)");
}

std::string mmd_repr_name(MmdRepr r) {
  switch (r) {
    case MmdRepr::kCls: return "cls";
    case MmdRepr::kMeanTokens: return "mean-tokens";
    default: return "all-tokens";
  }
}

MmdRepr mmd_repr_from(const std::string& s) {
  if (s == "cls") return MmdRepr::kCls;
  if (s == "mean-tokens") return MmdRepr::kMeanTokens;
  if (s == "all-tokens") return MmdRepr::kAllTokens;
  throw ConfigError("unknown mmd repr '" + s + "' (expected cls|mean-tokens|all-tokens)");
}

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown config key '" + it.key() + "' in " + where);
}

std::string config_fingerprint(const ExperimentSpec& eff) {
  std::ostringstream os;
  os << "variant=" << eff.variant << " p=" << eff.model.p << " d_token=" << eff.model.d_token
     << " n_heads=" << eff.model.n_heads << " n_layers=" << eff.model.n_layers
     << " gamma=" << fmt_axis_value(eff.focal.gamma)
     << " lambda_max=" << fmt_axis_value(eff.sched.lambda_max) << " epochs=" << eff.train.epochs;
  return os.str();
}

std::string metrics_csv_text(const RunManifest& m) {
  std::string out = "experiment_id,variant,seed,tp,fn,fp,tn,pd,pf,bal\n";
  if (!m.has_metrics) return out;
  for (const auto& sr : m.per_seed) {
    const auto& cm = sr.report.cm;
    const auto& mt = sr.report.metrics;
    out += m.experiment_id + "," + m.variant + "," + std::to_string(sr.seed) + "," +
           std::to_string(cm.tp) + "," + std::to_string(cm.fn) + "," + std::to_string(cm.fp) +
           "," + std::to_string(cm.tn) + "," + fmt_double(mt.pd) + "," + fmt_double(mt.pf) +
           "," + fmt_double(mt.bal) + "\n";
  }
  out += m.experiment_id + "," + m.variant + ",mean,,,,," + fmt_double(m.mean.pd) + "," +
         fmt_double(m.mean.pf) + "," + fmt_double(m.mean.bal) + "\n";
  out += m.experiment_id + "," + m.variant + ",std,,,,," + fmt_double(m.stddev.pd) + "," +
         fmt_double(m.stddev.pf) + "," + fmt_double(m.stddev.bal) + "\n";
  return out;
}

std::string manifest_json_text(const RunManifest& m) {
  json j;
  j["experiment_id"] = m.experiment_id;
  j["variant"] = m.variant;
  j["tool_version"] = m.tool_version;
  j["config"] = json::parse(m.config_snapshot);
  json seeds = json::array();
  for (const auto& sr : m.per_seed) {
    json s;
    s["seed"] = sr.seed;
    s["n_predictions"] = sr.predictions.size();
    if (sr.has_metrics) {
      s["tp"] = sr.report.cm.tp;
      s["fn"] = sr.report.cm.fn;
      s["fp"] = sr.report.cm.fp;
      s["tn"] = sr.report.cm.tn;
      s["pd"] = sr.report.metrics.pd;
      s["pf"] = sr.report.metrics.pf;
      s["bal"] = sr.report.metrics.bal;
    }
    seeds.push_back(s);
  }
  j["per_seed"] = seeds;
  if (m.has_metrics) {
    j["aggregate"] = {{"pd_mean", m.mean.pd},   {"pf_mean", m.mean.pf},
                      {"bal_mean", m.mean.bal}, {"pd_std", m.stddev.pd},
                      {"pf_std", m.stddev.pf},  {"bal_std", m.stddev.bal}};
  }
  return j.dump(2) + "\n";
}

void write_run_outputs(const RunManifest& m, const std::string& out_dir,
                       const std::vector<TrainingLog>& logs,
                       const std::vector<ModelParams>& fitted) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < m.per_seed.size(); ++i) {
    const auto& sr = m.per_seed[i];
    const std::string seed_dir = out_dir + "/seed_" + std::to_string(sr.seed);
    fs::create_directories(seed_dir);
    write_predictions_csv(sr.predictions, seed_dir + "/predictions.csv");
    logs[i].write_csv(seed_dir + "/training_log.csv");
    save_checkpoint(fitted[i], seed_dir + "/checkpoint.txt");
  }
  write_text_file(out_dir + "/metrics.csv", metrics_csv_text(m));
  write_text_file(out_dir + "/manifest.json", manifest_json_text(m));
}

}  // namespace

void ExperimentSpec::validate() const {
  if (sources.empty()) throw ConfigError("experiment: at least one source dataset is required");
  if (target.empty()) throw ConfigError("experiment: target dataset is required");
  for (const auto& s : sources)
    if (s == target)
      throw ConfigError("experiment: target '" + target + "' also appears in sources");
  if (seeds.empty()) throw ConfigError("experiment: seed list must not be empty");
  if (variant != "arft" && variant != "baseline" && variant != "baseline+attent" &&
      variant != "baseline+focal")
    throw ConfigError("experiment: unknown variant '" + variant +
                      "' (expected arft|baseline|baseline+attent|baseline+focal)");
  if (label_column.empty()) throw ConfigError("experiment: label_column must not be empty");
  focal.validate();
  mmd.validate();
  sched.validate();
  train.validate();
}

ExperimentSpec apply_variant(const ExperimentSpec& spec) {
  ExperimentSpec eff = spec;
  if (spec.variant == "arft") {
    eff.model.with_attention = true;
  } else if (spec.variant == "baseline") {
    eff.model.with_attention = false;
    eff.focal.gamma = 0.0;
    eff.sched.lambda_max = 0.0;
  } else if (spec.variant == "baseline+attent") {
    eff.model.with_attention = true;
    eff.focal.gamma = 0.0;
    eff.sched.lambda_max = 0.0;
  } else if (spec.variant == "baseline+focal") {
    eff.model.with_attention = false;
    eff.sched.lambda_max = 0.0;
  } else {
    throw ConfigError("experiment: unknown variant '" + spec.variant + "'");
  }
  return eff;
}

LoadedPair load_pair(const ExperimentSpec& spec) {
  spec.validate();
  LoadedPair out;
  std::vector<Dataset> parts;
  parts.reserve(spec.sources.size());
  for (const auto& path : spec.sources)
    parts.push_back(run_stage("load_sources", [&] { return load_csv(path, spec.label_column); }));
  out.source = run_stage("concat_projects", [&] { return concat_projects(parts); });
  Dataset tgt = run_stage("load_target", [&] {
    return load_csv(spec.target, spec.target_label_column);
  });
  if (tgt.has_labels()) {
    out.truth = *tgt.labels;
    tgt = strip_labels(tgt);
  }
  out.target = std::move(tgt);
  return out;
}

RunManifest run_on_data(const ExperimentSpec& spec, const LoadedPair& data) {
  spec.validate();
  if (!data.source.has_labels())
    throw ContractError("run: source dataset must be labeled");
  if (data.target.has_labels())
    throw ContractError("run: target dataset must arrive unlabeled (truth is joined separately)");
  if (data.truth && data.truth->size() != data.target.n_rows())
    throw ContractError("run: target truth size " + std::to_string(data.truth->size()) +
                        " does not match target rows " + std::to_string(data.target.n_rows()));

  ExperimentSpec eff = apply_variant(spec);
  eff.model.p = data.source.n_features();
  eff.model.validate();

  RunManifest m;
  m.experiment_id = data.source.project_id + "=>" + data.target.project_id;
  m.variant = spec.variant;
  m.tool_version = kToolVersion;
  {
    ExperimentSpec snapshot = spec;
    snapshot.model.p = eff.model.p;
    m.config_snapshot = spec_to_json(snapshot);
  }

  const GlobalNormalizeResult norm = run_stage(
      "global_normalize", [&] { return global_normalize(data.source, data.target, 1e-8); });

  std::vector<std::size_t> all_target_rows(norm.target.n_rows());
  for (std::size_t i = 0; i < all_target_rows.size(); ++i) all_target_rows[i] = i;
  const Tensor target_x = make_matrix(norm.target, all_target_rows);

  const std::string fingerprint = config_fingerprint(eff);
  std::vector<TrainingLog> logs;
  std::vector<ModelParams> fitted;
  for (const std::uint64_t seed : spec.seeds) {
    Rng ros_rng(seed ^ kRosStreamSalt);
    const Dataset balanced = run_stage(
        "random_oversample", [&] { return random_oversample(norm.source, ros_rng); });

    TrainConfig tc = eff.train;
    tc.seed = seed;
    FitResult fr = run_stage("fit", [&] {
      return fit(balanced, norm.target, eff.model, eff.focal, eff.mmd, eff.sched, tc);
    });

    SeedRun sr;
    sr.seed = seed;
    sr.predictions = run_stage("predict", [&] {
      return predict(infer_logits(fr.params, target_x));
    });
    if (data.truth) {
      sr.has_metrics = true;
      sr.report.cm = run_stage("confusion", [&] { return confusion(sr.predictions, *data.truth); });
      sr.report.metrics = run_stage("pd_pf_bal", [&] { return pd_pf_bal(sr.report.cm); });
      sr.report.experiment_id = m.experiment_id;
      sr.report.config_fingerprint = fingerprint;
      sr.report.seed = seed;
    }
    m.per_seed.push_back(std::move(sr));
    logs.push_back(std::move(fr.log));
    fitted.push_back(std::move(fr.params));
  }

  m.has_metrics = data.truth.has_value();
  if (m.has_metrics) {
    const double n = static_cast<double>(m.per_seed.size());
    for (const auto& sr : m.per_seed) {
      m.mean.pd += sr.report.metrics.pd / n;
      m.mean.pf += sr.report.metrics.pf / n;
      m.mean.bal += sr.report.metrics.bal / n;
    }
    Metrics var;
    for (const auto& sr : m.per_seed) {
      const auto& mt = sr.report.metrics;
      var.pd += (mt.pd - m.mean.pd) * (mt.pd - m.mean.pd) / n;
      var.pf += (mt.pf - m.mean.pf) * (mt.pf - m.mean.pf) / n;
      var.bal += (mt.bal - m.mean.bal) * (mt.bal - m.mean.bal) / n;
    }
    m.stddev = {std::sqrt(var.pd), std::sqrt(var.pf), std::sqrt(var.bal)};
  }

  if (!spec.out_dir.empty()) write_run_outputs(m, spec.out_dir, logs, fitted);
  return m;
}

RunManifest run(const ExperimentSpec& spec) {
  const LoadedPair data = load_pair(spec);
  return run_on_data(spec, data);
}

AblateResult ablate(const ExperimentSpec& spec) {
  spec.validate();
  const LoadedPair data = load_pair(spec);
  if (!data.truth)
    throw ContractError("ablate: target truth labels are required to compare variants");

  const std::vector<std::string> order = {"baseline", "baseline+focal", "baseline+attent",
                                          "arft"};
  AblateResult out;
  for (const auto& v : order) {
    ExperimentSpec s = spec;
    s.variant = v;
    if (!spec.out_dir.empty()) s.out_dir = spec.out_dir + "/" + sanitize_component(v);
    out.variants.push_back(run_on_data(s, data));
  }

  const double base_bal = out.variants[0].mean.bal;
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Variant", "PD", "PF", "Bal", "Impv."});
  for (const auto& m : out.variants) {
    std::string impv = "n/a";
    if (std::abs(base_bal) >= 1e-12) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%+.3f%%", 100.0 * (m.mean.bal - base_bal) / base_bal);
      impv = buf;
    }
    rows.push_back({m.variant, fmt_fixed3(m.mean.pd), fmt_fixed3(m.mean.pf),
                    fmt_fixed3(m.mean.bal), impv});
  }
  out.table = "Ablation on " + out.variants[0].experiment_id +
              "  (Impv. = (variant_bal - baseline_bal) / baseline_bal)\n" + format_table(rows);
  if (!spec.out_dir.empty()) {
    std::filesystem::create_directories(spec.out_dir);
    write_text_file(spec.out_dir + "/ablation.txt", out.table);
  }
  return out;
}

std::vector<double> default_axis_values(const std::string& axis) {
  if (axis == "heads") return {1, 2, 4, 8, 16, 32};
  if (axis == "gamma") return {1, 2, 3, 4, 5};
  throw ConfigError("sweep: unknown axis '" + axis + "' (expected heads|gamma)");
}

SweepResult sweep(const ExperimentSpec& base, const std::vector<SweepGroup>& groups,
                  const std::string& axis, const std::vector<double>& values) {
  if (axis != "heads" && axis != "gamma")
    throw ConfigError("sweep: unknown axis '" + axis + "' (expected heads|gamma)");
  if (groups.empty()) throw ConfigError("sweep: at least one source=>target group is required");
  if (values.empty()) throw ConfigError("sweep: value list must not be empty");

  // Validate the whole grid up front: a bad cell must be rejected before any
  // training starts.
  for (const double v : values) {
    if (axis == "heads") {
      if (v < 1.0 || v != std::floor(v))
        throw ConfigError("sweep: head count " + fmt_axis_value(v) + " is not a positive integer");
      const auto h = static_cast<std::size_t>(v);
      if (base.model.d_token % h != 0)
        throw ConfigError("sweep: head count " + std::to_string(h) + " does not divide d_token " +
                          std::to_string(base.model.d_token));
    } else if (v < 0.0) {
      throw ConfigError("sweep: gamma " + fmt_axis_value(v) + " must be >= 0");
    }
  }

  SweepResult out;
  out.axis = axis;
  out.values = values;
  for (const auto& g : groups) {
    if (g.sources.empty() || g.target.empty())
      throw ConfigError("sweep: group '" + g.name + "' needs sources and a target");
    out.group_names.push_back(g.name);
  }

  for (const auto& g : groups) {
    ExperimentSpec group_spec = base;
    group_spec.sources = g.sources;
    group_spec.target = g.target;
    group_spec.out_dir.clear();
    group_spec.validate();
    const LoadedPair data = load_pair(group_spec);
    if (!data.truth)
      throw ContractError("sweep: group '" + g.name + "' target has no truth labels");
    std::vector<RunManifest> row;
    for (const double v : values) {
      ExperimentSpec cell = group_spec;
      if (axis == "heads")
        cell.model.n_heads = static_cast<std::size_t>(v);
      else
        cell.focal.gamma = v;
      if (!base.out_dir.empty())
        cell.out_dir = base.out_dir + "/" + sanitize_component(g.name) + "/" + axis + "_" +
                       sanitize_component(fmt_axis_value(v));
      row.push_back(run_on_data(cell, data));
    }
    out.cells.push_back(std::move(row));
  }

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {axis};
  header.insert(header.end(), out.group_names.begin(), out.group_names.end());
  header.push_back("Avg.");
  rows.push_back(header);
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    std::vector<std::string> row = {fmt_axis_value(values[vi])};
    double sum = 0.0;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const double bal = out.cells[gi][vi].mean.bal;
      sum += bal;
      row.push_back(fmt_fixed3(bal));
    }
    row.push_back(fmt_fixed3(sum / static_cast<double>(groups.size())));
    rows.push_back(row);
  }
  out.table = "Bal by " + axis + "\n" + format_table(rows);
  if (!base.out_dir.empty()) {
    std::filesystem::create_directories(base.out_dir);
    write_text_file(base.out_dir + "/sweep_" + axis + ".txt", out.table);
  }
  return out;
}

CorrelationReport analyze(const std::string& csv_path,
                          const std::optional<std::string>& label_column, double rho_abs_min,
                          double alpha, const std::string& out_csv) {
  const Dataset d = load_csv(csv_path, label_column);
  const CorrelationReport rep = correlation_report(d, rho_abs_min, alpha);
  if (!out_csv.empty()) {
    std::string text = "metric_i,metric_j,rho,p_value,significant,defined\n";
    for (const auto& pr : rep.pairs) {
      text += pr.metric_i + "," + pr.metric_j + "," + fmt_double(pr.rho) + "," +
              fmt_double(pr.p_value) + "," + (pr.significant ? "1" : "0") + "," +
              (pr.defined ? "1" : "0") + "\n";
    }
    write_text_file(out_csv, text);
  }
  return rep;
}

void gen_synth(const SynthConfig& cfg, const std::string& out_dir) {
  const auto [source, target] = synth_generate(cfg);
  std::filesystem::create_directories(out_dir);
  write_csv(source, out_dir + "/source.csv", /*with_labels=*/true);
  write_csv(strip_labels(target), out_dir + "/target.csv", /*with_labels=*/false);
  std::string truth = "row,label\n";
  for (std::size_t i = 0; i < target.labels->size(); ++i)
    truth += std::to_string(i) + "," + std::to_string((*target.labels)[i]) + "\n";
  write_text_file(out_dir + "/target_truth.csv", truth);
}

namespace {

// Reads a two-column (row, value) CSV used for predictions and truth files.
std::vector<int> read_indexed_labels(const std::string& path, const std::string& value_column) {
  const Dataset d = load_csv(path, std::optional<std::string>());
  std::size_t row_col = d.n_features(), val_col = d.n_features();
  for (std::size_t c = 0; c < d.n_features(); ++c) {
    if (d.metric_names[c] == "row") row_col = c;
    if (d.metric_names[c] == value_column) val_col = c;
  }
  if (row_col == d.n_features())
    throw SchemaError(path + ": missing 'row' column");
  if (val_col == d.n_features())
    throw SchemaError(path + ": missing '" + value_column + "' column");
  std::vector<int> out(d.n_rows(), -1);
  std::vector<char> seen(d.n_rows(), 0);
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    const double row_val = d.features[r][row_col];
    if (row_val != std::floor(row_val) || row_val < 0.0 ||
        row_val >= static_cast<double>(d.n_rows()))
      throw ParseError(path + ": row index " + fmt_double(row_val) + " out of range");
    const auto idx = static_cast<std::size_t>(row_val);
    if (seen[idx]) throw ParseError(path + ": duplicate row index " + std::to_string(idx));
    seen[idx] = 1;
    const double v = d.features[r][val_col];
    if (v != 0.0 && v != 1.0)
      throw ParseError(path + ": value " + fmt_double(v) + " at row " + std::to_string(idx) +
                       " is not 0 or 1");
    out[idx] = static_cast<int>(v);
  }
  return out;
}

}  // namespace

EvalReport evaluate(const std::string& predictions_csv, const std::string& truth_csv) {
  const std::vector<int> pred = read_indexed_labels(predictions_csv, "prediction");
  const std::vector<int> truth = read_indexed_labels(truth_csv, "label");
  if (pred.size() != truth.size())
    throw ContractError("evaluate: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(truth.size()) + " truth rows");
  EvalReport rep;
  rep.cm = confusion(pred, truth);
  rep.metrics = pd_pf_bal(rep.cm);
  rep.experiment_id = predictions_csv + " vs " + truth_csv;
  return rep;
}

void write_predictions_csv(const std::vector<int>& predictions, const std::string& path) {
  std::string text = "row,prediction\n";
  for (std::size_t i = 0; i < predictions.size(); ++i)
    text += std::to_string(i) + "," + std::to_string(predictions[i]) + "\n";
  write_text_file(path, text);
}

std::string spec_to_json(const ExperimentSpec& spec) {
  json j;
  j["sources"] = spec.sources;
  j["target"] = spec.target;
  j["label_column"] = spec.label_column;
  if (spec.target_label_column) j["target_label_column"] = *spec.target_label_column;
  j["variant"] = spec.variant;
  j["out_dir"] = spec.out_dir;
  j["seeds"] = spec.seeds;
  j["model"] = {{"p", spec.model.p},
                {"d_token", spec.model.d_token},
                {"n_heads", spec.model.n_heads},
                {"n_layers", spec.model.n_layers},
                {"ffn_hidden_factor", spec.model.ffn_hidden_factor},
                {"dropout_rate", spec.model.dropout_rate}};
  j["focal"] = {{"gamma", spec.focal.gamma}, {"alpha", spec.focal.alpha}};
  j["mmd"] = {{"sigma_policy", sigma_policy_name(spec.mmd.sigma_policy)},
              {"fixed_sigma", spec.mmd.fixed_sigma},
              {"repr", mmd_repr_name(spec.mmd.repr)}};
  j["schedule"] = {{"lambda_max", spec.sched.lambda_max}};
  j["train"] = {{"epochs", spec.train.epochs},
                {"batch_source", spec.train.batch_source},
                {"batch_target", spec.train.batch_target},
                {"lr0", spec.train.lr0},
                {"lr_decay_per_epoch", spec.train.lr_decay_per_epoch},
                {"momentum", spec.train.momentum},
                {"weight_decay", spec.train.weight_decay},
                {"dropout_enabled", spec.train.dropout_enabled}};
  return j.dump(2) + "\n";
}

ExperimentSpec spec_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top-level JSON value must be an object");

  ExperimentSpec spec;  // defaults; every key below is optional
  try {
    reject_unknown_keys(j, {"sources", "target", "label_column", "target_label_column", "variant",
                            "out_dir", "seeds", "model", "focal", "mmd", "schedule", "train"},
                        "top level");
    spec.sources = j.value("sources", spec.sources);
    spec.target = j.value("target", spec.target);
    spec.label_column = j.value("label_column", spec.label_column);
    if (j.contains("target_label_column") && !j["target_label_column"].is_null())
      spec.target_label_column = j["target_label_column"].get<std::string>();
    spec.variant = j.value("variant", spec.variant);
    spec.out_dir = j.value("out_dir", spec.out_dir);
    spec.seeds = j.value("seeds", spec.seeds);
    if (j.contains("model")) {
      const json& m = j["model"];
      reject_unknown_keys(
          m, {"p", "d_token", "n_heads", "n_layers", "ffn_hidden_factor", "dropout_rate"},
          "model");
      spec.model.p = m.value("p", spec.model.p);
      spec.model.d_token = m.value("d_token", spec.model.d_token);
      spec.model.n_heads = m.value("n_heads", spec.model.n_heads);
      spec.model.n_layers = m.value("n_layers", spec.model.n_layers);
      spec.model.ffn_hidden_factor = m.value("ffn_hidden_factor", spec.model.ffn_hidden_factor);
      spec.model.dropout_rate = m.value("dropout_rate", spec.model.dropout_rate);
    }
    if (j.contains("focal")) {
      const json& f = j["focal"];
      reject_unknown_keys(f, {"gamma", "alpha"}, "focal");
      spec.focal.gamma = f.value("gamma", spec.focal.gamma);
      spec.focal.alpha = f.value("alpha", spec.focal.alpha);
    }
    if (j.contains("mmd")) {
      const json& m = j["mmd"];
      reject_unknown_keys(m, {"sigma_policy", "fixed_sigma", "repr"}, "mmd");
      if (m.contains("sigma_policy"))
        spec.mmd.sigma_policy = sigma_policy_from(m["sigma_policy"].get<std::string>());
      spec.mmd.fixed_sigma = m.value("fixed_sigma", spec.mmd.fixed_sigma);
      if (m.contains("repr")) spec.mmd.repr = mmd_repr_from(m["repr"].get<std::string>());
    }
    if (j.contains("schedule")) {
      const json& s = j["schedule"];
      reject_unknown_keys(s, {"lambda_max"}, "schedule");
      spec.sched.lambda_max = s.value("lambda_max", spec.sched.lambda_max);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      reject_unknown_keys(t,
                          {"epochs", "batch_source", "batch_target", "lr0", "lr_decay_per_epoch",
                           "momentum", "weight_decay", "dropout_enabled"},
                          "train");
      spec.train.epochs = t.value("epochs", spec.train.epochs);
      spec.train.batch_source = t.value("batch_source", spec.train.batch_source);
      spec.train.batch_target = t.value("batch_target", spec.train.batch_target);
      spec.train.lr0 = t.value("lr0", spec.train.lr0);
      spec.train.lr_decay_per_epoch = t.value("lr_decay_per_epoch", spec.train.lr_decay_per_epoch);
      spec.train.momentum = t.value("momentum", spec.train.momentum);
      spec.train.weight_decay = t.value("weight_decay", spec.train.weight_decay);
      spec.train.dropout_enabled = t.value("dropout_enabled", spec.train.dropout_enabled);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return spec;
}

}  // namespace arft
