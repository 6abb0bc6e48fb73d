// swinc: experiment entry point (gen-data, train, eval, gradcheck, params, probe-rf).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "swinc/checkpoint.hpp"
#include "swinc/config.hpp"
#include "swinc/errors.hpp"
#include "swinc/fragments.hpp"
#include "swinc/param_count.hpp"

namespace fs = std::filesystem;
using namespace swinc;

namespace {

const char* kUsage =
    "usage: swinc <command> [options]\n"
    "\n"
    "commands:\n"
    "  gen-data   write the synthetic train/val splits\n"
    "  train      train a model, write metrics.csv, model.swnc, effective.cfg\n"
    "  eval       evaluate a checkpoint on the validation split\n"
    "  gradcheck  finite-difference gradient checks over every fragment\n"
    "  params     analytic parameter breakdown (--compare for the ablation grid)\n"
    "  probe-rf   influence radius of a fragment\n"
    "\n"
    "run 'swinc <command> --help' for options\n";

// Options shared by every command that builds a RunConfig.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string ff_kind, merge_kind, decoder_kind, out_dir, data_dir;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "configuration file");
    app.add_option("--seed", seed, "seed for every random stream");
    app.add_option("--set", sets, "override, as section.key=value (repeatable)");
    app.add_option("--ff-kind", ff_kind, "inception | mlp | depthwise");
    app.add_option("--merge-kind", merge_kind, "linear | conv");
    app.add_option("--decoder-kind", decoder_kind, "swinception | swinunetr");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--data-dir", data_dir, "dataset directory for gen-data and --data");
  }

  // Precedence: defaults < file < --set < dedicated flags.
  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : parse_config_file(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      auto trim = [](std::string v) {
        v.erase(0, v.find_first_not_of(" \t"));
        v.erase(v.find_last_not_of(" \t") + 1);
        return v;
      };
      apply_setting(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    if (!ff_kind.empty()) apply_setting(cfg, "model.ff_kind", ff_kind);
    if (!merge_kind.empty()) apply_setting(cfg, "model.merge_kind", merge_kind);
    if (!decoder_kind.empty()) apply_setting(cfg, "model.decoder_kind", decoder_kind);
    if (seed) apply_setting(cfg, "run.seed", std::to_string(*seed));
    if (!out_dir.empty()) apply_setting(cfg, "run.out_dir", "\"" + out_dir + "\"");
    if (!data_dir.empty()) apply_setting(cfg, "run.data_dir", "\"" + data_dir + "\"");
    cfg.validate();
    return cfg;
  }
};

void echo_config(const RunConfig& cfg) {
  std::cout << "# effective configuration\n" << cfg.dump() << std::flush;
}

std::vector<SegSample> split(const RunConfig& cfg, bool from_files, bool validation) {
  if (from_files) {
    return load_dataset((fs::path(cfg.data_dir) / (validation ? "val.swnc" : "train.swnc")).string());
  }
  return gen_dataset(cfg.data_spec(validation ? 1 : 0), validation ? cfg.val_size : cfg.train_size);
}

std::string csv_header(Index num_classes) {
  std::string h = "step,loss,dice_mean";
  for (Index c = 1; c < num_classes; ++c) h += ",dice_c" + std::to_string(c);
  return h;
}

std::string csv_row(Index step, double loss, const Metrics& m) {
  std::ostringstream os;
  os << std::setprecision(10) << step << ',' << loss << ',' << m.mean_foreground;
  for (size_t c = 1; c < m.dice.size(); ++c) os << ',' << m.dice[c];
  return os.str();
}

std::string metrics_line(const Metrics& m) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << "dice_mean=" << m.mean_foreground;
  for (size_t c = 1; c < m.dice.size(); ++c) os << " dice_c" << c << '=' << m.dice[c];
  return os.str();
}

int cmd_gen_data(const ConfigFlags& flags) {
  const RunConfig cfg = flags.resolve();
  echo_config(cfg);
  fs::create_directories(cfg.data_dir);
  for (bool val : {false, true}) {
    const auto path = (fs::path(cfg.data_dir) / (val ? "val.swnc" : "train.swnc")).string();
    const auto samples = split(cfg, false, val);
    save_dataset(samples, path);
    std::cout << "wrote " << samples.size() << " samples to " << path << "\n";
  }
  return 0;
}

struct TrainFlags {
  bool use_data = false;
  std::string init;
  bool non_strict = false;
};

int cmd_train(const ConfigFlags& flags, const TrainFlags& tf) {
  const RunConfig cfg = flags.resolve();
  echo_config(cfg);
  const auto train_set = split(cfg, tf.use_data, false);
  const auto val_set = split(cfg, tf.use_data, true);

  SegmentationModel model = SegmentationModel::make(cfg.model, cfg.seed);
  if (!tf.init.empty()) {
    const LoadReport r = load_checkpoint(tf.init, model.parameters(), !tf.non_strict);
    std::cout << "init: " << r.describe() << "\n";
  }

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  {
    std::ofstream ec(out / "effective.cfg");
    ec << cfg.dump();
  }
  std::ofstream csv(out / "metrics.csv");
  if (!csv) throw StateError("cannot write " + (out / "metrics.csv").string());
  csv << csv_header(cfg.model.num_classes) << "\n";

  TrainOptions opts = cfg.train;
  opts.seed = cfg.seed;
  train(model, train_set, val_set, opts, [&](const TrainRecord& r) {
    csv << csv_row(r.step, r.loss, r.val) << "\n" << std::flush;
    std::cout << "step " << r.step << " loss " << std::fixed << std::setprecision(4) << r.loss << ' '
              << metrics_line(r.val) << std::defaultfloat << "\n"
              << std::flush;
  });
  save_checkpoint(model.parameters(), (out / "model.swnc").string());
  std::cout << "wrote " << (out / "model.swnc").string() << "\n";
  return 0;
}

int cmd_eval(const ConfigFlags& flags, bool use_data, std::string checkpoint, bool non_strict) {
  const RunConfig cfg = flags.resolve();
  echo_config(cfg);
  if (checkpoint.empty()) checkpoint = (fs::path(cfg.out_dir) / "model.swnc").string();
  SegmentationModel model = SegmentationModel::make(cfg.model, cfg.seed);
  const LoadReport r = load_checkpoint(checkpoint, model.parameters(), !non_strict);
  if (!r.clean()) std::cout << "load: " << r.describe() << "\n";
  const Metrics m = evaluate(model, split(cfg, use_data, true), cfg.train.batch);
  std::cout << metrics_line(m) << "\n";
  return 0;
}

int cmd_gradcheck(std::vector<std::string> names, std::uint64_t seed, bool skip_full) {
  if (names.empty()) names = grad_fragment_names();
  int failures = 0;
  for (const auto& n : names) {
    if (skip_full && n == "full_model") continue;
    const GradFragment f = make_grad_fragment(n, seed);
    const GradCheckReport r = grad_check(f.loss, f.wrt, f.options);
    Index refined = 0;
    for (const auto& e : r.entries) refined += e.refined;
    std::cout << (r.passed() ? "PASS " : "FAIL ") << std::left << std::setw(24) << n << " max_rel_err="
              << std::scientific << std::setprecision(3) << r.max_rel_error() << std::defaultfloat
              << " tensors=" << r.entries.size() << " refined=" << refined << "\n"
              << std::flush;
    if (!r.passed()) {
      ++failures;
      std::cout << r.summary();
    }
  }
  if (failures > 0) throw NumericError(std::to_string(failures) + " gradient fragment(s) failed");
  return 0;
}

void print_breakdown(const ParamBreakdown& b) {
  for (const auto& [k, v] : b) std::cout << std::left << std::setw(12) << k << std::right << std::setw(14) << v << "\n";
  std::cout << std::left << std::setw(12) << "total" << std::right << std::setw(14) << total(b) << "  ("
            << std::fixed << std::setprecision(2) << static_cast<double>(total(b)) / 1e6 << "M)\n"
            << std::defaultfloat;
}

int cmd_params(const ConfigFlags& flags, bool compare) {
  const RunConfig cfg = flags.resolve();
  echo_config(cfg);
  print_breakdown(count_params(cfg.model));
  if (compare) {
    std::cout << "\n" << std::left << std::setw(12) << "encoder" << std::setw(13) << "decoder" << std::setw(8)
              << "merge" << std::setw(7) << "ratio" << std::right << std::setw(14) << "params" << "\n";
    for (const auto& row : ablation_table(cfg.model)) {
      std::cout << std::left << std::setw(12) << row.encoder << std::setw(13) << to_string(row.decoder)
                << std::setw(8) << to_string(row.merge) << std::setw(7) << std::setprecision(3) << row.mlp_ratio
                << std::right << std::setw(14) << row.params << std::fixed << std::setprecision(2) << "  ("
                << static_cast<double>(row.params) / 1e6 << "M)" << std::defaultfloat << "\n";
    }
  }
  return 0;
}

int cmd_probe(std::vector<std::string> names, std::uint64_t seed) {
  if (names.empty()) names = probe_fragment_names();
  for (const auto& n : names) {
    const ProbeFragment f = make_probe_fragment(n, seed);
    const InfluenceMap m = receptive_field_probe(f.apply, f.input_shape, f.source, seed);
    std::cout << std::left << std::setw(20) << n << " radius=" << m.radius << " voxels=" << m.count() << "\n";
  }
  return 0;
}

bool is_command(const std::string& s) {
  for (const char* c : {"gen-data", "train", "eval", "gradcheck", "params", "probe-rf"}) {
    if (s == c) return true;
  }
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2 || (argv[1][0] != '-' && !is_command(argv[1]))) {
    if (argc >= 2) std::cerr << "unknown command '" << argv[1] << "'\n";
    std::cerr << kUsage;
    return 2;
  }
  if (std::string(argv[1]) == "-h" || std::string(argv[1]) == "--help") {
    std::cout << kUsage;
    return 0;
  }

  CLI::App app{"swinc"};
  app.require_subcommand(1);

  ConfigFlags gen_flags, train_flags, eval_flags, params_flags;
  TrainFlags tf;
  bool eval_data = false, eval_non_strict = false, compare = false, skip_full = false;
  std::string eval_ckpt;
  std::vector<std::string> grad_names, probe_names;
  std::uint64_t grad_seed = 0, probe_seed = 0;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic train/val splits");
  gen_flags.attach(*gen);

  auto* tr = app.add_subcommand("train", "train a model");
  train_flags.attach(*tr);
  tr->add_flag("--data", tf.use_data, "read splits from --data-dir instead of generating them");
  tr->add_option("--init", tf.init, "checkpoint to initialize from");
  tr->add_flag("--non-strict", tf.non_strict, "skip missing or mismatched tensors when loading --init");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_flags.attach(*ev);
  ev->add_flag("--data", eval_data, "read the validation split from --data-dir");
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint path (default <out>/model.swnc)");
  ev->add_flag("--non-strict", eval_non_strict, "skip missing or mismatched tensors");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gc->add_option("--fragment", grad_names, "fragment name (repeatable; default all)");
  gc->add_option("--seed", grad_seed, "seed");
  gc->add_flag("--skip-full", skip_full, "skip the full-model fragment");

  auto* pc = app.add_subcommand("params", "analytic parameter breakdown");
  params_flags.attach(*pc);
  pc->add_flag("--compare", compare, "print the ablation grid");

  auto* pr = app.add_subcommand("probe-rf", "influence radius of a fragment");
  pr->add_option("--fragment", probe_names, "fragment name (repeatable; default all)");
  pr->add_option("--seed", probe_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_flags);
    if (tr->parsed()) return cmd_train(train_flags, tf);
    if (ev->parsed()) return cmd_eval(eval_flags, eval_data, eval_ckpt, eval_non_strict);
    if (gc->parsed()) return cmd_gradcheck(grad_names, grad_seed, skip_full);
    if (pc->parsed()) return cmd_params(params_flags, compare);
    if (pr->parsed()) return cmd_probe(probe_names, probe_seed);
  } catch (const Error& e) {
    std::cout << std::flush;
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cout << std::flush;
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  std::cerr << kUsage;
  return 2;
}
