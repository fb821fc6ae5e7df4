// Command-line driver for the ARFT cross-project experiment pipeline.
//
// Subcommands: run, ablate, sweep, analyze, gen-synth, evaluate. Every run
// subcommand accepts a JSON config file plus flags; flags win over file keys.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "arft/experiment.hpp"

namespace {

using namespace arft;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Flag values mirrored onto an ExperimentSpec after parsing. Only flags the
// user actually passed override the config file.
struct SpecFlags {
  std::string config_path;
  std::vector<std::string> sources;
  std::string target;
  std::string label_column;
  std::string target_label_column;
  std::string variant;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  std::size_t d_token = 0, n_heads = 0, n_layers = 0;
  double ffn_hidden_factor = 0, dropout_rate = 0;
  double gamma = 0, alpha = 0;
  std::string sigma_policy, mmd_repr;
  double fixed_sigma = 0, lambda_max = 0;
  std::size_t epochs = 0, batch_source = 0, batch_target = 0;
  double lr0 = 0, lr_decay = 0, momentum = 0, weight_decay = 0;
  bool no_dropout = false;
};

void add_spec_flags(CLI::App* cmd, SpecFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file; flags below override its keys");
  cmd->add_option("--source", f.sources, "labeled source CSV (repeat for multiple projects)");
  cmd->add_option("--target", f.target, "target CSV");
  cmd->add_option("--label-column", f.label_column, "label column name in source CSVs");
  cmd->add_option("--target-label-column", f.target_label_column,
                  "truth column in the target CSV; stripped before training, used only to score");
  cmd->add_option("--variant", f.variant, "arft|baseline|baseline+attent|baseline+focal");
  cmd->add_option("--out", f.out_dir, "output directory (manifest, metrics, per-seed artifacts)");
  cmd->add_option("--seeds", f.seeds, "seed list (default 0 1 2 3 4)");
  cmd->add_option("--d-token", f.d_token, "token width");
  cmd->add_option("--heads", f.n_heads, "attention head count");
  cmd->add_option("--layers", f.n_layers, "transformer layer count");
  cmd->add_option("--ffn-factor", f.ffn_hidden_factor, "FFN hidden width factor");
  cmd->add_option("--dropout-rate", f.dropout_rate, "dropout rate");
  cmd->add_option("--gamma", f.gamma, "focal loss gamma");
  cmd->add_option("--alpha", f.alpha, "focal loss alpha");
  cmd->add_option("--sigma-policy", f.sigma_policy, "median|fixed");
  cmd->add_option("--fixed-sigma", f.fixed_sigma, "kernel sigma when --sigma-policy fixed");
  cmd->add_option("--mmd-repr", f.mmd_repr, "cls|mean-tokens|all-tokens");
  cmd->add_option("--lambda-max", f.lambda_max, "MMD weight ceiling");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--batch-source", f.batch_source, "source batch size");
  cmd->add_option("--batch-target", f.batch_target, "target batch size");
  cmd->add_option("--lr0", f.lr0, "initial learning rate");
  cmd->add_option("--lr-decay", f.lr_decay, "per-epoch learning-rate decay");
  cmd->add_option("--momentum", f.momentum, "SGD momentum");
  cmd->add_option("--weight-decay", f.weight_decay, "L2 weight decay");
  cmd->add_flag("--no-dropout", f.no_dropout, "disable dropout during training");
}

ExperimentSpec build_spec(const CLI::App* cmd, const SpecFlags& f) {
  ExperimentSpec spec;
  if (cmd->count("--config")) spec = spec_from_json(read_file(f.config_path));
  if (cmd->count("--source")) spec.sources = f.sources;
  if (cmd->count("--target")) spec.target = f.target;
  if (cmd->count("--label-column")) spec.label_column = f.label_column;
  if (cmd->count("--target-label-column")) spec.target_label_column = f.target_label_column;
  if (cmd->count("--variant")) spec.variant = f.variant;
  if (cmd->count("--out")) spec.out_dir = f.out_dir;
  if (cmd->count("--seeds")) spec.seeds = f.seeds;
  if (cmd->count("--d-token")) spec.model.d_token = f.d_token;
  if (cmd->count("--heads")) spec.model.n_heads = f.n_heads;
  if (cmd->count("--layers")) spec.model.n_layers = f.n_layers;
  if (cmd->count("--ffn-factor")) spec.model.ffn_hidden_factor = f.ffn_hidden_factor;
  if (cmd->count("--dropout-rate")) spec.model.dropout_rate = f.dropout_rate;
  if (cmd->count("--gamma")) spec.focal.gamma = f.gamma;
  if (cmd->count("--alpha")) spec.focal.alpha = f.alpha;
  if (cmd->count("--sigma-policy"))
    spec.mmd.sigma_policy = f.sigma_policy == "fixed" ? SigmaPolicy::kFixed : SigmaPolicy::kMedian;
  if (cmd->count("--fixed-sigma")) spec.mmd.fixed_sigma = f.fixed_sigma;
  if (cmd->count("--mmd-repr")) {
    if (f.mmd_repr == "cls")
      spec.mmd.repr = MmdRepr::kCls;
    else if (f.mmd_repr == "mean-tokens")
      spec.mmd.repr = MmdRepr::kMeanTokens;
    else if (f.mmd_repr == "all-tokens")
      spec.mmd.repr = MmdRepr::kAllTokens;
    else
      throw ConfigError("unknown --mmd-repr '" + f.mmd_repr + "'");
  }
  if (cmd->count("--lambda-max")) spec.sched.lambda_max = f.lambda_max;
  if (cmd->count("--epochs")) spec.train.epochs = f.epochs;
  if (cmd->count("--batch-source")) spec.train.batch_source = f.batch_source;
  if (cmd->count("--batch-target")) spec.train.batch_target = f.batch_target;
  if (cmd->count("--lr0")) spec.train.lr0 = f.lr0;
  if (cmd->count("--lr-decay")) spec.train.lr_decay_per_epoch = f.lr_decay;
  if (cmd->count("--momentum")) spec.train.momentum = f.momentum;
  if (cmd->count("--weight-decay")) spec.train.weight_decay = f.weight_decay;
  if (f.no_dropout) spec.train.dropout_enabled = false;
  return spec;
}

// "NAME=SRC1[+SRC2...]=>TGT"
SweepGroup parse_pair(const std::string& text) {
  const auto arrow = text.find("=>");
  if (arrow == std::string::npos)
    throw ConfigError("--pair '" + text + "': expected NAME=SRC1[+SRC2]=>TGT");
  const std::string left = text.substr(0, arrow);
  SweepGroup g;
  g.target = text.substr(arrow + 2);
  const auto eq = left.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--pair '" + text + "': missing NAME= prefix");
  g.name = left.substr(0, eq);
  std::string srcs = left.substr(eq + 1);
  std::size_t pos = 0;
  while (pos <= srcs.size()) {
    const auto plus = srcs.find('+', pos);
    const std::string one =
        plus == std::string::npos ? srcs.substr(pos) : srcs.substr(pos, plus - pos);
    if (!one.empty()) g.sources.push_back(one);
    if (plus == std::string::npos) break;
    pos = plus + 1;
  }
  if (g.name.empty() || g.sources.empty() || g.target.empty())
    throw ConfigError("--pair '" + text + "': name, sources and target must all be non-empty");
  return g;
}

void print_manifest(const RunManifest& m) {
  std::printf("%s  variant=%s  seeds=%zu\n", m.experiment_id.c_str(), m.variant.c_str(),
              m.per_seed.size());
  if (!m.has_metrics) {
    std::printf(
        "predictions computed (no truth column given; score them with the evaluate command)\n");
    return;
  }
  for (const auto& sr : m.per_seed) {
    const auto& cm = sr.report.cm;
    const auto& mt = sr.report.metrics;
    std::printf("seed %llu: tp=%zu fn=%zu fp=%zu tn=%zu pd=%.3f pf=%.3f bal=%.3f\n",
                static_cast<unsigned long long>(sr.seed), cm.tp, cm.fn, cm.fp, cm.tn, mt.pd,
                mt.pf, mt.bal);
  }
  std::printf("mean: pd=%.3f pf=%.3f bal=%.3f   std: pd=%.3f pf=%.3f bal=%.3f\n", m.mean.pd,
              m.mean.pf, m.mean.bal, m.stddev.pd, m.stddev.pf, m.stddev.bal);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ARFT cross-project aging-related-bug prediction experiments"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  // run
  auto* run_cmd = app.add_subcommand("run", "train on sources, predict on the target");
  SpecFlags run_flags;
  add_spec_flags(run_cmd, run_flags);

  // ablate
  auto* ablate_cmd =
      app.add_subcommand("ablate", "run the four ablation variants under identical seeds");
  SpecFlags ablate_flags;
  add_spec_flags(ablate_cmd, ablate_flags);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "grid over heads or gamma per target group");
  SpecFlags sweep_flags;
  add_spec_flags(sweep_cmd, sweep_flags);
  std::string sweep_axis;
  std::vector<double> sweep_values;
  std::vector<std::string> sweep_pairs;
  sweep_cmd->add_option("--axis", sweep_axis, "heads|gamma")->required();
  sweep_cmd->add_option("--values", sweep_values, "axis values (default: full grid)");
  sweep_cmd->add_option("--pair", sweep_pairs,
                        "group as NAME=SRC1[+SRC2]=>TGT (repeatable; default: --source/--target)");

  // analyze
  auto* analyze_cmd =
      app.add_subcommand("analyze", "pairwise Spearman correlation over a metric CSV");
  std::string analyze_input, analyze_label, analyze_out;
  double analyze_rho_min = 0.3, analyze_alpha = 0.05;
  analyze_cmd->add_option("--input", analyze_input, "metric CSV")->required();
  analyze_cmd->add_option("--label-column", analyze_label, "label column to exclude");
  analyze_cmd->add_option("--rho-min", analyze_rho_min, "absolute rho threshold");
  analyze_cmd->add_option("--alpha", analyze_alpha, "significance level");
  analyze_cmd->add_option("--out", analyze_out, "pair report CSV path");

  // gen-synth
  auto* synth_cmd =
      app.add_subcommand("gen-synth", "generate a synthetic source/target pair with shift");
  SynthConfig synth_cfg;
  std::string synth_out;
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--n-source", synth_cfg.n_source, "source rows");
  synth_cmd->add_option("--n-target", synth_cfg.n_target, "target rows");
  synth_cmd->add_option("--p", synth_cfg.p, "metric count");
  synth_cmd->add_option("--positive-rate", synth_cfg.positive_rate, "ARB-prone rate");
  synth_cmd->add_option("--shift-strength", synth_cfg.shift_strength, "covariate shift strength");
  synth_cmd->add_option("--seed", synth_cfg.seed, "generator seed");

  // evaluate
  auto* eval_cmd =
      app.add_subcommand("evaluate", "join a predictions CSV with a truth CSV and score");
  std::string eval_pred, eval_truth;
  eval_cmd->add_option("--predictions", eval_pred, "predictions CSV (row,prediction)")->required();
  eval_cmd->add_option("--truth", eval_truth, "truth CSV (row,label)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      print_manifest(run(build_spec(run_cmd, run_flags)));
    } else if (ablate_cmd->parsed()) {
      const AblateResult res = ablate(build_spec(ablate_cmd, ablate_flags));
      std::fputs(res.table.c_str(), stdout);
    } else if (sweep_cmd->parsed()) {
      const ExperimentSpec base = build_spec(sweep_cmd, sweep_flags);
      std::vector<SweepGroup> groups;
      for (const auto& p : sweep_pairs) groups.push_back(parse_pair(p));
      if (groups.empty() && !base.sources.empty() && !base.target.empty())
        groups.push_back({"group1", base.sources, base.target});
      const std::vector<double> values =
          sweep_cmd->count("--values") ? sweep_values : default_axis_values(sweep_axis);
      const SweepResult res = sweep(base, groups, sweep_axis, values);
      std::fputs(res.table.c_str(), stdout);
    } else if (analyze_cmd->parsed()) {
      std::optional<std::string> label;
      if (analyze_cmd->count("--label-column")) label = analyze_label;
      const Dataset d = load_csv(analyze_input, label);
      const CorrelationReport rep =
          analyze(analyze_input, label, analyze_rho_min, analyze_alpha, analyze_out);
      std::printf("p=%zu, pairs=%zu, significant=%zu\n", d.n_features(), rep.total_pairs,
                  rep.correlated_pairs);
    } else if (synth_cmd->parsed()) {
      gen_synth(synth_cfg, synth_out);
      std::printf("wrote %s/source.csv, %s/target.csv, %s/target_truth.csv\n", synth_out.c_str(),
                  synth_out.c_str(), synth_out.c_str());
    } else if (eval_cmd->parsed()) {
      const EvalReport rep = evaluate(eval_pred, eval_truth);
      std::printf("tp=%zu fn=%zu fp=%zu tn=%zu\n", rep.cm.tp, rep.cm.fn, rep.cm.fp, rep.cm.tn);
      std::printf("pd=%.6f pf=%.6f bal=%.6f\n", rep.metrics.pd, rep.metrics.pf, rep.metrics.bal);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
