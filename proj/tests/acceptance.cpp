// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 iff all
// selected criteria pass. `--only 2,5` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "claims.hpp"
#include "properties.hpp"
#include "swinc/checkpoint.hpp"
#include "swinc/config.hpp"
#include "swinc/errors.hpp"
#include "swinc/fragments.hpp"
#include "swinc/param_count.hpp"
#include "swinc/train.hpp"

using namespace swinc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1: every gradient fragment, the 32^3 model included, under the time budget.
Verdict gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& name : grad_fragment_names()) {
    GradFragment f = make_grad_fragment(name, 1);
    const GradCheckReport r = grad_check(f.loss, f.wrt, f.options);
    std::cerr << "  gradcheck " << r.summary() << "\n";
    if (r.max_rel_error() > worst) {
      worst = r.max_rel_error();
      worst_name = name;
    }
    if (!r.passed() || f.options.tolerance > 1e-3) failed += " " + name;
  }
  const double t = seconds_since(t0);
  const bool ok = failed.empty() && worst < 1e-3 && t < 600.0;
  return {ok, std::to_string(grad_fragment_names().size()) + " fragments, max rel err " + fmt("%.3g", worst) + " (" +
                  worst_name + "), " + fmt("%.0f", t) + " s" + (failed.empty() ? "" : ", failed:" + failed)};
}

// 2: inception widths (4C,0,0,0) with identity batch norm equal the ratio-4 MLP.
Verdict swin_reduction() {
  double worst = 0.0;
  for (Index c : {4, 8, 16, 48}) worst = std::max(worst, claims::swin_reduction_diff(c, {4, 4, 4}, 100 + c));
  return {worst < 1e-6, "max abs diff " + fmt("%.3g", worst) + " over C in {4, 8, 16, 48}"};
}

// 3: receptive-field probes (a) to (e).
Verdict receptive_fields() {
  const auto mlp = claims::probe("mlp_ff");
  const auto inc = claims::probe("inception_ff");
  const auto att = claims::probe("w_mhsa");
  const auto blk = claims::probe("swinception_block");
  const auto two = claims::probe("two_blocks");
  const bool a = mlp.radius == 0, b = inc.radius == 2, c = att.count > 0 && att.outside_source_window == 0,
             d = blk.outside_source_window > 0, e = two.windows_touched > 1;
  std::ostringstream s;
  s << "(a) mlp radius " << mlp.radius << (a ? "" : " FAIL") << "; (b) inception radius " << inc.radius << (b ? "" : " FAIL")
    << "; (c) w_mhsa voxels outside window " << att.outside_source_window << (c ? "" : " FAIL")
    << "; (d) attention+inception outside window " << blk.outside_source_window << (d ? "" : " FAIL")
    << "; (e) alternating blocks touch " << two.windows_touched << " windows" << (e ? "" : " FAIL");
  return {a && b && c && d && e, s.str()};
}

const AblationRow* find_row(const std::vector<AblationRow>& rows, const std::string& enc, DecoderKind dec, MergeKind merge,
                            double ratio) {
  for (const auto& r : rows)
    if (r.encoder == enc && r.decoder == dec && r.merge == merge && r.mlp_ratio == ratio) return &r;
  return nullptr;
}

// Table orderings: pre-merge decoder smaller, conv merging larger, Swin at
// ratio 7 within 5% of the inception encoder at ratio 4.
std::string ordering_failures(const ModelConfig& base) {
  const auto rows = ablation_table(base);
  std::string bad;
  const std::pair<std::string, double> encoders[] = {{"swin", 4.0}, {"swin", 7.0}, {"swinception", 4.0}};
  for (const auto& [enc, ratio] : encoders)
    for (auto merge : {MergeKind::linear, MergeKind::conv}) {
      const auto* a = find_row(rows, enc, DecoderKind::swinception, merge, ratio);
      const auto* b = find_row(rows, enc, DecoderKind::swinunetr, merge, ratio);
      if (a && b && !(a->params < b->params)) bad += " decoder(" + enc + ")";
    }
  for (auto dec : {DecoderKind::swinception, DecoderKind::swinunetr}) {
    for (const auto& [enc, ratio] : {std::pair<std::string, double>{"swin", 7.0}, {"swinception", 4.0}}) {
      const auto* lin = find_row(rows, enc, dec, MergeKind::linear, ratio);
      const auto* conv = find_row(rows, enc, dec, MergeKind::conv, ratio);
      if (!lin || !conv || !(conv->params > lin->params)) bad += " merge(" + enc + ")";
    }
    for (auto merge : {MergeKind::linear, MergeKind::conv}) {
      const auto* s7 = find_row(rows, "swin", dec, merge, 7.0);
      const auto* i4 = find_row(rows, "swinception", dec, merge, 4.0);
      if (!s7 || !i4 || std::abs(static_cast<double>(s7->params - i4->params)) > 0.05 * static_cast<double>(i4->params))
        bad += " ratio-pair(" + to_string(dec) + "," + to_string(merge) + ")";
    }
  }
  for (Index c0 : {8, 16, 48}) {
    ModelConfig a = base, b = base;
    a.base_dim = b.base_dim = c0;
    a.heads = b.heads = {1, 2, 4, 8};
    b.decoder_kind = DecoderKind::swinunetr;
    a.decoder_kind = DecoderKind::swinception;
    if (!(count::decoder(a) < count::decoder(b))) bad += " decoder-C0=" + std::to_string(c0);
  }
  return bad;
}

// 4: analytic count vs allocation, the 63M total, and the table orderings.
Verdict parameter_accounting() {
  Rng rng(2024);
  int matched = 0;
  const int configs = 12;
  for (int trial = 0; trial < configs; ++trial) {
    ModelConfig c;
    c.base_dim = 4 * rng.uniform_int(1, 4);
    c.heads = {1, 2, 2 * rng.uniform_int(1, 2), 4};
    for (auto& d : c.depths) d = rng.uniform_int(1, 3);
    c.window = rng.uniform_int(2, 5);
    c.ff_kind = static_cast<FeedForwardKind>(rng.uniform_int(0, 2));
    c.merge_kind = static_cast<MergeKind>(rng.uniform_int(0, 1));
    c.decoder_kind = static_cast<DecoderKind>(rng.uniform_int(0, 1));
    c.mlp_ratio = rng.uniform(2.0, 7.0);
    c.widths = {static_cast<double>(rng.uniform_int(0, 2)), rng.uniform(0.5, 1.5), 1.0, static_cast<double>(rng.uniform_int(0, 1))};
    c.num_classes = rng.uniform_int(2, 14);
    c.in_channels = rng.uniform_int(1, 4);
    c.use_rel_bias = rng.uniform_int(0, 1) == 1;
    const auto m = SegmentationModel::make(c, static_cast<std::uint64_t>(trial));
    const auto params = m.parameters();
    matched += count_trainable(params) == total(count_params(c)) && allocated_breakdown(params) == count_params(c);
  }
  const ModelConfig full;
  const Index full_total = total(count_params(full));
  const double rel = std::abs(static_cast<double>(full_total) - 63e6) / 63e6;
  const std::string toy_bad = ordering_failures(ModelConfig::toy()), full_bad = ordering_failures(full);
  const bool ok = matched == configs && rel < 0.05 && toy_bad.empty() && full_bad.empty();
  std::ostringstream s;
  s << "(a) " << matched << "/" << configs << " random configs exact; (b) full default " << fmt("%.2f", full_total / 1e6)
    << "M, " << fmt("%.1f", 100.0 * rel) << "% from 63M; (c) orderings at toy and full widths "
    << (toy_bad.empty() && full_bad.empty() ? "hold" : "violated:" + toy_bad + full_bad);
  return {ok, s.str()};
}

// 5: randomized brute-force oracles, at least 100 cases each.
Verdict kernel_oracles() {
  const std::pair<const char*, props::Outcome> runs[] = {
      {"conv3d", props::conv3d_cases(150, 501)},
      {"conv_transpose3d", props::conv_transpose3d_cases(150, 502)},
      {"avg_pool3d", props::avg_pool3d_cases(150, 503)},
      {"one-window attention", props::one_window_attention_cases(150, 504)},
      {"shifted attention", props::shifted_attention_cases(100, 505)},
      {"shift mask", props::mask_region_cases(100, 506)},
      {"serial vs parallel", props::serial_parallel_cases(200, 507)},
  };
  bool ok = true;
  std::ostringstream s;
  for (const auto& [name, o] : runs) {
    const bool pass = o.cases >= 100 && o.max_err < 1e-6;
    ok = ok && pass;
    s << (s.tellp() > 0 ? "; " : "") << name << " " << o.cases << " cases max " << fmt("%.2g", o.max_err)
      << (pass ? "" : " FAIL (" + o.worst + ")");
  }
  return {ok, s.str()};
}

// 6: toy training on the synthetic 3-class set, plus the MLP baseline.
constexpr double kTargetDice = 0.85;
constexpr double kBudgetSeconds = 1800.0;
constexpr Index kReplaySteps = 10;

struct RunResult {
  double dice = 0.0;
  double seconds = 0.0;
  std::vector<double> losses;
};

RunResult train_toy(FeedForwardKind kind, Index steps) {
  RunConfig cfg;
  cfg.model.ff_kind = kind;
  cfg.train.steps = steps;
  if (steps < cfg.train.log_every) cfg.train.log_every = steps;
  const auto train_set = gen_dataset(cfg.data_spec(0), cfg.train_size);
  const auto val_set = gen_dataset(cfg.data_spec(1), cfg.val_size);
  SegmentationModel model = SegmentationModel::make(cfg.model, cfg.seed);
  TrainOptions opts = cfg.train;
  opts.seed = cfg.seed;
  RunResult r;
  const auto t0 = Clock::now();
  const auto records = train(
      model, train_set, val_set, opts,
      [&](const TrainRecord& rec) {
        std::cerr << "  " << to_string(kind) << " step " << rec.step << " loss " << fmt("%.4f", rec.loss) << " dice "
                  << fmt("%.4f", rec.val.mean_foreground) << " t=" << fmt("%.0f", seconds_since(t0)) << "s\n";
      },
      [&](Index, double loss) { r.losses.push_back(loss); });
  r.seconds = seconds_since(t0);
  r.dice = records.empty() ? 0.0 : records.back().val.mean_foreground;
  return r;
}

Verdict toy_training() {
  const Index steps = RunConfig{}.train.steps;
  const RunResult inc = train_toy(FeedForwardKind::inception, steps);
  // Determinism: an independent replay reproduces the first losses bitwise.
  const RunResult replay = train_toy(FeedForwardKind::inception, kReplaySteps);
  const bool deterministic =
      replay.losses.size() == static_cast<size_t>(kReplaySteps) &&
      std::equal(replay.losses.begin(), replay.losses.end(), inc.losses.begin());
  const RunResult mlp = train_toy(FeedForwardKind::mlp, steps);
  const bool ok = inc.dice >= kTargetDice && inc.seconds < kBudgetSeconds && deterministic && mlp.dice >= kTargetDice;
  std::ostringstream s;
  s << "inception dice " << fmt("%.4f", inc.dice) << " after " << steps << " steps in " << fmt("%.0f", inc.seconds)
    << " s; replay of " << kReplaySteps << " steps " << (deterministic ? "bitwise identical" : "DIFFERS") << "; mlp baseline dice "
    << fmt("%.4f", mlp.dice) << " in " << fmt("%.0f", mlp.seconds) << " s";
  return {ok, s.str()};
}

// 7: window and shift inverses bitwise, checkpoint value-exact, non-strict report.
Verdict round_trips() {
  Rng rng(7);
  bool windows = true;
  for (int trial = 0; trial < 50; ++trial) {
    const Dims3 win{rng.uniform_int(1, 4), rng.uniform_int(1, 4), rng.uniform_int(1, 4)};
    const Dims3 dims{win[0] * rng.uniform_int(1, 3), win[1] * rng.uniform_int(1, 3), win[2] * rng.uniform_int(1, 3)};
    const Tensor x = oracle::random({2, 3, dims[0], dims[1], dims[2]}, rng);
    windows = windows && oracle::bitwise_equal(window_reverse(window_partition(x, win), 2, dims, win), x);
    const Dims3 s{rng.uniform_int(0, dims[0] - 1), rng.uniform_int(0, dims[1] - 1), rng.uniform_int(0, dims[2] - 1)};
    windows = windows && oracle::bitwise_equal(
                             cyclic_shift(cyclic_shift(x, s, ShiftDirection::forward), s, ShiftDirection::reverse), x);
  }

  const auto dir = std::filesystem::temp_directory_path() / "swinc_acceptance";
  std::filesystem::create_directories(dir);
  const std::string a = (dir / "a.swnc").string(), b = (dir / "b.swnc").string();
  ModelConfig cfg = ModelConfig::toy();
  SegmentationModel m1 = SegmentationModel::make(cfg, 1), m2 = SegmentationModel::make(cfg, 2);
  save_checkpoint(m1.parameters(), a);
  load_checkpoint(a, m2.parameters(), true);
  save_checkpoint(m2.parameters(), b);
  auto bytes = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  bool exact = bytes(a) == bytes(b);
  const auto p1 = m1.parameters(), p2 = m2.parameters();
  for (size_t i = 0; i < p1.size() && exact; ++i)
    for (size_t j = 0; j < p1[i].tensor.data().size(); ++j)
      exact = exact && p2[i].tensor.data()[j] == static_cast<double>(static_cast<float>(p1[i].tensor.data()[j]));

  ModelConfig mlp_cfg = cfg;
  mlp_cfg.ff_kind = FeedForwardKind::mlp;
  SegmentationModel mlp = SegmentationModel::make(mlp_cfg, 3);
  bool strict_refused = false;
  try {
    load_checkpoint(a, mlp.parameters(), true);
  } catch (const StateError&) {
    strict_refused = true;
  }
  const LoadReport r = load_checkpoint(a, mlp.parameters(), false);
  const bool reported = !r.missing.empty() && !r.unexpected.empty() && !r.loaded.empty();
  std::filesystem::remove_all(dir);

  std::ostringstream s;
  s << "partition/shift inverses " << (windows ? "bitwise" : "DIFFER") << " on 50 random cases; checkpoint save-load-save "
    << (exact ? "byte-identical" : "DIFFERS") << "; strict load " << (strict_refused ? "refused" : "NOT refused")
    << "; non-strict loaded " << r.loaded.size() << ", skipped " << r.unexpected.size() << " unexpected and "
    << r.missing.size() << " missing";
  return {windows && exact && strict_refused && reported, s.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria runner"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 7));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"swin reduction equivalence", swin_reduction},
      {"receptive-field claims", receptive_fields},
      {"parameter accounting", parameter_accounting},
      {"brute-force kernel oracles", kernel_oracles},
      {"toy training", toy_training},
      {"round trips and checkpoint", round_trips},
  };
  const std::set<int> selected(only.begin(), only.end());
  bool all = true;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    all = all && v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << v.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
