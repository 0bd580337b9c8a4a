// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion.
#include <boost/math/distributions/students_t.hpp>
#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "gazessl/experiment.hpp"
#include "gazessl/nn/checkpoint.hpp"
#include "gazessl/nn/ops.hpp"
#include "../support/grad_cases.hpp"
#include "../support/planted_saccades.hpp"

using namespace gazessl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradRelTol = 1e-3;
constexpr int kGradInstances = 20;
constexpr double kGradBudgetS = 120.0;
constexpr double kLossOracleTol = 1e-6;
constexpr double kClosedFormTol = 1e-4;
constexpr int kSaccadeTraces = 100;
constexpr int kStatsInputs = 1000;
constexpr double kStatsOracleTol = 1e-10;
constexpr double kStatsExampleTol = 1e-4;
constexpr double kToddlerOverRandomPts = 5.0;
constexpr double kOrderingAlpha = 0.05;
constexpr double kCropBoostPts = 3.0;
constexpr double kDeltaTDropPts = 3.0;
constexpr double kHoldRecoveryR = 0.9;
constexpr double kHoldAccuracyAlpha = 0.1;
constexpr double kMatrixBudgetS = 30 * 60.0;

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

void criterion_gradients() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_case;
  int checked = 0;
  for (const auto& c : testing::grad_cases()) {
    for (int i = 0; i < kGradInstances; ++i) {
      const auto r = c.run(i);
      ++checked;
      if (r.max_rel > worst) {
        worst = r.max_rel;
        worst_case = c.name;
      }
    }
  }
  const double dt = seconds_since(t0);
  report(1, worst < kGradRelTol && dt < kGradBudgetS,
         fmt("%zu ops x %d instances, max rel err %.2e (%s), %.1f s", testing::grad_cases().size(), kGradInstances,
             worst, worst_case.c_str(), dt));
}

double simclr_brute(const nn::Tensor& z, double tau) {
  const std::size_t B = z.dim(0), D = z.dim(1), N = B / 2;
  double total = 0;
  for (std::size_t i = 0; i < B; ++i) {
    double den = 0, pos = 0;
    for (std::size_t k = 0; k < B; ++k) {
      if (k == i) continue;
      double s = 0;
      for (std::size_t c = 0; c < D; ++c) s += double(z[i * D + c]) * z[k * D + c];
      den += std::exp(s / tau);
      if (k == (i + N) % B) pos = s / tau;
    }
    total += std::log(den) - pos;
  }
  return total / B;
}

double byol_brute(const nn::Tensor& q, const nn::Tensor& t) {
  const std::size_t N = q.dim(0), D = q.dim(1);
  double total = 0;
  for (std::size_t n = 0; n < N; ++n) {
    double qt = 0, qq = 0, tt = 0;
    for (std::size_t c = 0; c < D; ++c) {
      qt += double(q[n * D + c]) * t[n * D + c];
      qq += double(q[n * D + c]) * q[n * D + c];
      tt += double(t[n * D + c]) * t[n * D + c];
    }
    total += 2 - 2 * qt / std::sqrt(qq * tt);
  }
  return total / N;
}

void criterion_loss_oracles() {
  Rng rng(2024);
  double worst = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t B = 2 * (2 + rng.below(31)), D = 1 + rng.below(64);
    nn::Tensor z({B, D});
    for (auto& v : z.data()) v = static_cast<float>(rng.normal());
    z = nn::l2_normalize(nn::Var::leaf(z)).value();
    const double tau = rng.uniform(0.05, 1.0);
    worst = std::max(worst, std::abs(simclr_tt_loss(nn::Var::leaf(z), tau).value()[0] - simclr_brute(z, tau)));
    const std::size_t N = 1 + rng.below(64);
    nn::Tensor q({N, D}), t({N, D});
    for (auto& v : q.data()) v = static_cast<float>(rng.normal());
    for (auto& v : t.data()) v = static_cast<float>(rng.normal());
    worst = std::max(worst, std::abs(byol_tt_loss(nn::Var::leaf(q), nn::Var::leaf(t)).value()[0] - byol_brute(q, t)));
  }
  const double ex1 = simclr_tt_loss(nn::Var::leaf(nn::Tensor({4, 2}, {1, 0, 0, 1, 1, 0, 0, 1})), 1.0).value()[0];
  nn::Tensor same({8, 3});
  for (std::size_t i = 0; i < 8; ++i) same[i * 3] = 1;
  const double ex2 = simclr_tt_loss(nn::Var::leaf(same), 0.08).value()[0];
  const nn::Tensor tgt({1, 2}, {1, 0});
  const double b0 = byol_tt_loss(nn::Var::leaf(nn::Tensor({1, 2}, {3, 0})), nn::Var::leaf(tgt)).value()[0];
  const double b2 = byol_tt_loss(nn::Var::leaf(nn::Tensor({1, 2}, {0, 1})), nn::Var::leaf(tgt)).value()[0];
  const double b4 = byol_tt_loss(nn::Var::leaf(nn::Tensor({1, 2}, {-2, 0})), nn::Var::leaf(tgt)).value()[0];
  const bool examples = std::abs(ex1 - 0.5514) < kClosedFormTol && std::abs(ex2 - std::log(7.0)) < kClosedFormTol &&
                        std::abs(b0) < kClosedFormTol && std::abs(b2 - 2) < kClosedFormTol &&
                        std::abs(b4 - 4) < kClosedFormTol;
  report(2, worst < kLossOracleTol && examples,
         fmt("max oracle gap %.2e over 200 batches (B<=64); 0.5514 case %.5f, log(7) case %.5f, byol %.4f/%.4f/%.4f",
             worst, ex1, ex2, b0, b2, b4));
}

void criterion_saccades() {
  double min_p = 1, min_r = 1;
  bool partition = true;
  for (int s = 0; s < kSaccadeTraces; ++s) {
    const auto t = testing::planted_trace(static_cast<std::uint64_t>(s));
    const auto seg = detect_saccades(t.trace, SaccadeThresholds{25, 10, 45, true});
    const auto score = testing::score_detection(t, seg);
    min_p = std::min(min_p, score.precision);
    min_r = std::min(min_r, score.recall);
    std::size_t next = 0;
    for (const auto& e : seg.events) {
      partition = partition && e.start == next && e.end >= e.start;
      for (std::size_t i = e.start; i <= e.end; ++i) partition = partition && seg.labels[i] == e.kind;
      next = e.end + 1;
    }
    partition = partition && next == t.trace.samples.size() && seg.labels.size() == next;
  }
  report(3, min_p == 1.0 && min_r == 1.0 && partition,
         fmt("%d planted traces: min precision %.3f, min recall %.3f, partition %s", kSaccadeTraces, min_p, min_r,
             partition ? "exact" : "broken"));
}

long double t_p(long double t, long double df) {
  boost::math::students_t_distribution<long double> d(df);
  return 2 * boost::math::cdf(boost::math::complement(d, std::fabs(t)));
}

void criterion_stats() {
  Rng rng(77);
  double worst = 0;
  for (int rep = 0; rep < kStatsInputs; ++rep) {
    const std::size_t n = 3 + rng.below(50);
    std::vector<double> x(n), y(n);
    const double w = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y[i] = w * x[i] + rng.normal();
    }
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
    mx /= n, my /= n;
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    const long double r = sxy / std::sqrt(sxx * syy);
    const auto pr = pearson(x, y);
    worst = std::max({worst, double(std::fabs(*pr.statistic - r)),
                      double(std::fabs(*pr.p_value - t_p(r * std::sqrt((n - 2) / (1 - r * r)), n - 2.0L)))});

    const std::size_t na = 2 + rng.below(30), nb = 2 + rng.below(30);
    std::vector<double> a(na), b(nb);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.uniform(-1, 1) + rng.normal() * rng.uniform(0.5, 2);
    long double ma = 0, mb = 0, sa = 0, sb = 0;
    for (double v : a) ma += v;
    for (double v : b) mb += v;
    ma /= na, mb /= nb;
    for (double v : a) sa += (v - ma) * (v - ma);
    for (double v : b) sb += (v - mb) * (v - mb);
    const long double df = na + nb - 2.0L;
    const long double t = (ma - mb) / std::sqrt((sa + sb) / df * (1.0L / na + 1.0L / nb));
    const auto tt = ttest_ind(a, b);
    worst = std::max({worst, double(std::fabs(*tt.statistic - t)), double(std::fabs(*tt.p_value - t_p(t, df)))});
  }
  const double r08 = *pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}).statistic;
  const double t14 = *ttest_ind(std::vector<double>{0, 1}, std::vector<double>{1, 2}).statistic;
  report(4, worst < kStatsOracleTol && std::abs(r08 - 0.8) < kStatsExampleTol &&
                std::abs(t14 + 1.4142) < kStatsExampleTol,
         fmt("%d random inputs each: max oracle gap %.2e; r=%.4f, t=%.4f", kStatsInputs, worst, r08, t14));
}

// Mean accuracy (in points) per cell key over seeds.
struct Group {
  std::vector<double> acc;
  double mean_pts() const { return acc.empty() ? NAN : 100 * mean(acc); }
};

void criteria_matrix(const fs::path& config_path, const fs::path& out_root) {
  auto cfg = load_experiment_config(config_path);
  cfg.output_root = out_root;
  RunOptions opts;
  opts.log = [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); };
  ExperimentRunner runner(cfg, opts);
  const auto t0 = Clock::now();
  const auto res = runner.run_matrix();
  const double elapsed = seconds_since(t0);
  const int cached = static_cast<int>(
      std::count_if(res.cells.begin(), res.cells.end(), [](const CellResult& c) { return c.from_cache; }));

  std::map<std::string, Group> grid;  // strategy at crop 32, dt 1/30, default sessions
  Group noeye64, random_slow;
  int failed = 0;
  for (const auto& c : res.cells) {
    if (!c.ok()) {
      ++failed;
      std::printf("  cell %s failed: %s\n", c.cell.id().c_str(), c.error.c_str());
      continue;
    }
    if (!c.cell.sessions.empty()) continue;
    const bool base_dt = std::abs(c.cell.delta_t_s - 1.0 / 30) < 1e-9;
    if (c.cell.crop_size_px == 32 && base_dt) grid[to_string(c.cell.strategy)].acc.push_back(*c.accuracy);
    if (c.cell.strategy == MatrixStrategy::NoEyeMovement && c.cell.crop_size_px == 64 && base_dt)
      noeye64.acc.push_back(*c.accuracy);
    if (c.cell.strategy == MatrixStrategy::Random && c.cell.crop_size_px == 32 && !base_dt)
      random_slow.acc.push_back(*c.accuracy);
  }
  std::printf("  matrix: %zu cells (%d cached, %d failed) in %.1f s, config %s\n", res.cells.size(), cached, failed,
              elapsed, res.config_hash.c_str());
  for (const auto& [name, g] : grid) std::printf("  %-16s c32 dt1/30: %.2f%% (n=%zu)\n", name.c_str(), g.mean_pts(), g.acc.size());
  std::printf("  %-16s c64 dt1/30: %.2f%% (n=%zu)\n", "NoEyeMovement", noeye64.mean_pts(), noeye64.acc.size());
  std::printf("  %-16s c32 dt1.5 : %.2f%% (n=%zu)\n", "Random", random_slow.mean_pts(), random_slow.acc.size());
  const bool budget = cached > 0 || elapsed <= kMatrixBudgetS;

  const auto& tod = grid["ToddlerLike"];
  const auto& rnd = grid["Random"];
  {
    const double gap = tod.mean_pts() - rnd.mean_pts();
    std::optional<double> p;
    if (tod.acc.size() >= 2 && rnd.acc.size() >= 2) p = ttest_ind(tod.acc, rnd.acc).p_value;
    const bool pass = tod.acc.size() == 3 && rnd.acc.size() == 3 && gap >= kToddlerOverRandomPts && p &&
                      *p < kOrderingAlpha && budget;
    report(5, pass,
           fmt("ToddlerLike %.2f%% vs Random %.2f%%: gap %+.2f pts (need >= %.0f), t-test p=%s (need < %.2f); "
               "matrix %.0f s%s",
               tod.mean_pts(), rnd.mean_pts(), gap, kToddlerOverRandomPts, p ? fmt("%.4f", *p).c_str() : "n/a",
               kOrderingAlpha, elapsed, cached ? " (cached)" : ""));
  }
  {
    const double blank = grid["BlankBackground"].mean_pts();
    double best = -1;
    std::string best_name;
    for (const auto& [name, g] : grid) {
      if (name != "BlankBackground" && g.mean_pts() > best) {
        best = g.mean_pts();
        best_name = name;
      }
    }
    if (noeye64.mean_pts() > best) {
      best = noeye64.mean_pts();
      best_name = "NoEyeMovement c64";
    }
    if (random_slow.mean_pts() > best) {
      best = random_slow.mean_pts();
      best_name = "Random dt1.5";
    }
    report(6, !grid["BlankBackground"].acc.empty() && blank >= best,
           fmt("BlankBackground %.2f%% vs best non-oracle %s %.2f%%", blank, best_name.c_str(), best));
  }
  {
    const double gap = tod.mean_pts() - noeye64.mean_pts();
    report(7, noeye64.acc.size() == 3 && gap >= kCropBoostPts,
           fmt("ToddlerLike c32 %.2f%% vs NoEyeMovement c64 %.2f%%: gap %+.2f pts (need >= %.0f)", tod.mean_pts(),
               noeye64.mean_pts(), gap, kCropBoostPts));
  }
  {
    const double drop = rnd.mean_pts() - random_slow.mean_pts();
    report(8, random_slow.acc.size() == 3 && drop >= kDeltaTDropPts,
           fmt("Random dt1/30 %.2f%% vs dt1.5 %.2f%%: drop %+.2f pts (need >= %.0f)", rnd.mean_pts(),
               random_slow.mean_pts(), drop, kDeltaTDropPts));
  }

  // criterion 9: recovery across 10 configs, then accuracy vs hold-look in the single-session matrix
  std::vector<double> configured, recovered;
  for (int i = 0; i < 10; ++i) {
    SessionConfig c;
    c.duration_s = 300;
    c.render_images = false;
    c.render_seed = 500 + i;
    c.policy = GazePolicy::toddler_like(500 + i);
    c.policy.mean_hold_look_s = 0.5 + i * (3.5 / 9);
    const auto frames = simulate_session(c);
    configured.push_back(c.policy.mean_hold_look_s);
    recovered.push_back(session_metrics(frames, c.intr, cfg.saccades).mean_hold_look_s.value_or(0));
  }
  const double r_rec = *pearson(configured, recovered).statistic;
  const auto samples = runner.behavior_samples(res.cells);
  std::vector<BehaviorSample> hold;
  for (const auto& s : samples) {
    if (s.group == "hold") hold.push_back(s);
  }
  std::optional<double> r_acc, p_acc;
  for (const auto& row : behavior_correlations(hold)) {
    if (row.grouping == "pooled" && row.metric == "mean_hold_look_s") {
      r_acc = row.r;
      p_acc = row.p_value;
    }
  }
  for (const auto& s : hold) {
    std::printf("  %s configured hold %.2f s, recovered %.2f s, accuracy %.2f%%\n", s.session_id.c_str(),
                cfg.session(s.session_id).config.policy.mean_hold_look_s, s.metrics.mean_hold_look_s.value_or(NAN),
                100 * s.accuracy);
  }
  const bool acc_ok = r_acc && p_acc && *r_acc > 0 && *p_acc < kHoldAccuracyAlpha;
  report(9, r_rec > kHoldRecoveryR && acc_ok,
         fmt("hold-look recovery r=%.4f over 10 configs (need > %.1f); accuracy vs hold-look over %zu sessions r=%s "
             "p=%s (need r > 0, p < %.1f)",
             r_rec, kHoldRecoveryR, hold.size(), r_acc ? fmt("%.3f", *r_acc).c_str() : "n/a",
             p_acc ? fmt("%.3f", *p_acc).c_str() : "n/a", kHoldAccuracyAlpha));
}

void criterion_determinism(const fs::path& scratch) {
  const char* tiny = R"({
    "session_defaults": {"duration_s": 8, "frame_px": 64},
    "sessions": [{"id": "t0", "group": "toddler", "policy": "ToddlerLike"},
                 {"id": "a0", "group": "adult", "policy": "AdultLike", "policy_seed": 2, "render_seed": 2}],
    "probe_session": {"duration_s": 20},
    "strategies": ["ToddlerLike", "AdultLike"],
    "crop_sizes": [16],
    "methods": ["SimCLR-TT", "BYOL-TT"],
    "seeds": [0, 1],
    "ssl": {"epochs": 1, "lr": 0.001, "batch_size": 32, "encoder_widths": [8, 16],
            "projector_hidden": 16, "projection_dim": 8, "predictor_hidden": 8},
    "probe_split": {"block_s": 2},
    "probe": {"max_epochs": 50}
  })";
  std::vector<std::string> problems;
  std::vector<fs::path> roots{scratch / "run_a", scratch / "run_b"};
  std::vector<MatrixResult> results;
  for (const auto& r : roots) {
    fs::remove_all(r);
    auto cfg = experiment_from_json_text(tiny);
    cfg.output_root = r;
    ExperimentRunner runner(cfg);
    results.push_back(runner.run_matrix());
  }
  std::size_t compared = 0;
  for (const char* f : {"results/accuracy.csv", "results/stats.csv"}) {
    ++compared;
    if (slurp(roots[0] / f) != slurp(roots[1] / f) || slurp(roots[0] / f).empty()) problems.push_back(f);
  }
  for (const auto& c : results[0].cells) {
    for (const char* f : {"model.ckpt", "loss.csv", "result.json"}) {
      ++compared;
      const auto a = slurp(roots[0] / "cells" / c.cell.id() / f);
      if (a.empty() || a != slurp(roots[1] / "cells" / c.cell.id() / f)) problems.push_back(c.cell.id() + "/" + f);
    }
  }

  // checkpoint round trip
  nn::SslModel model(nn::ModelSpec{}, true, 5);
  const auto ck = scratch / "rt.ckpt";
  nn::save_checkpoint(model.all_params(), ck);
  nn::SslModel other(nn::ModelSpec{}, true, 6);
  auto params = other.all_params();
  nn::load_checkpoint(params, ck);
  if (nn::param_hash(params) != nn::param_hash(model.all_params())) problems.push_back("checkpoint round trip");

  // manifest round trip
  SessionConfig sc;
  sc.duration_s = 2;
  const auto m = build_stream(simulate_session(sc), "rt", sc.intr, Strategy::HumanGaze, 32);
  write_manifest(m, scratch / "manifest");
  const auto back = read_manifest(scratch / "manifest");
  if (back.records != m.records || back.crops != m.crops) problems.push_back("manifest round trip");

  // resampling worked examples
  std::vector<int> labels;
  labels.insert(labels.end(), 100, 0);
  labels.insert(labels.end(), 10, 1);
  labels.insert(labels.end(), 14, 2);
  auto counts = [&](const std::vector<std::size_t>& idx) {
    std::map<int, int> c;
    for (auto i : idx) ++c[labels[i]];
    return c;
  };
  const auto under = counts(resample(labels, ResampleMode::Undersample, 1, 0));
  const auto over = counts(resample(labels, ResampleMode::Oversample, 1, 0));
  if (under != std::map<int, int>{{0, 12}, {1, 10}, {2, 14}}) problems.push_back("undersample example");
  if (over != std::map<int, int>{{0, 100}, {1, 100}, {2, 100}}) problems.push_back("oversample example");

  std::string detail = fmt("%zu files compared across two fresh runs; checkpoint, manifest, resample checks", compared);
  for (const auto& p : problems) detail += "; mismatch " + p;
  report(10, problems.empty(), detail);
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path config = argc > 1 ? fs::path(argv[1]) : fs::path("configs/desk_default.json");
  const fs::path out = argc > 2 ? fs::path(argv[2]) : fs::path("acceptance_out");
  fs::create_directories(out);
  criterion_gradients();
  criterion_loss_oracles();
  criterion_saccades();
  criterion_stats();
  criteria_matrix(config, out / "desk");
  criterion_determinism(out / "determinism");
  std::printf("%d of 10 criteria failed\n", failures);
  return failures ? 1 : 0;
}
