// SPDX-License-Identifier: Apache-2.0
// gaze_ssl command-line entry point.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include "CLI11.hpp"
#include "gazessl/experiment.hpp"
#include "gazessl/nn/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace gazessl;

namespace {

struct Args {
  std::string config;
  bool force = false;
  int jobs = 1;
  std::optional<std::uint64_t> seed_override;
  std::string cell;
};

ExperimentRunner make_runner(const Args& a) {
  auto cfg = load_experiment_config(a.config);
  if (const char* env = std::getenv("GAZE_SSL_OUT"); env && *env) cfg.output_root = env;
  RunOptions opts;
  opts.force = a.force;
  opts.jobs = a.jobs;
  opts.seed_override = a.seed_override;
  opts.cell_filter = a.cell;
  static std::mutex mu;
  opts.log = [](const std::string& m) {
    std::lock_guard lock(mu);
    std::cerr << m << '\n';
  };
  return ExperimentRunner(std::move(cfg), std::move(opts));
}

std::string opt_str(const std::optional<int>& v) { return v ? std::to_string(*v) : ""; }

void write_session(const fs::path& dir, const std::vector<FrameRecord>& frames, double fps, const std::string& hash) {
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "frames");
  std::ofstream log(tmp / "gaze.csv");
  log << "config_hash,frame_idx,time_s,gaze_x,gaze_y,target_object,holding,held_object\n";
  char name[32];
  for (const auto& f : frames) {
    std::snprintf(name, sizeof name, "%06d.png", f.frame_idx);
    write_png(tmp / "frames" / name, f.image);
    char line[256];
    std::snprintf(line, sizeof line, "%s,%d,%.6f,%.17g,%.17g,%s,%d,%s\n", hash.c_str(), f.frame_idx,
                  manifest_time(f.frame_idx, fps), f.gaze.x, f.gaze.y, opt_str(f.target_object).c_str(),
                  f.holding ? 1 : 0, opt_str(f.held_object).c_str());
    log << line;
  }
  log.close();
  if (!log) throw std::runtime_error("failed writing " + (tmp / "gaze.csv").string());
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

void refuse_existing(const std::vector<fs::path>& dirs, bool force) {
  if (force) return;
  for (const auto& d : dirs) {
    if (fs::exists(d)) throw std::runtime_error(d.string() + " exists; pass --force to overwrite");
  }
}

int cmd_simulate(ExperimentRunner& r, bool force) {
  const auto& cfg = r.config();
  std::vector<fs::path> dirs;
  for (const auto& s : cfg.sessions) dirs.push_back(cfg.output_root / "sessions" / s.id);
  dirs.push_back(cfg.output_root / "sessions" / cfg.probe_session.id);
  refuse_existing(dirs, force);
  for (const auto& s : cfg.sessions) write_session(dirs[&s - cfg.sessions.data()], r.frames(s.id), s.config.intr.fps, r.hash());
  write_session(dirs.back(), r.probe_frames(), cfg.probe_session.config.intr.fps, r.hash());
  std::cout << "wrote " << dirs.size() << " sessions under " << (cfg.output_root / "sessions") << '\n';
  return 0;
}

int cmd_build_streams(ExperimentRunner& r, bool force) {
  const auto& cfg = r.config();
  const fs::path root = cfg.output_root / "streams";
  const Strategy kinds[] = {Strategy::HumanGaze, Strategy::RandomGaze, Strategy::NoEyeMovement,
                            Strategy::ObjectsFixation};
  struct Job {
    fs::path dir;
    const SessionSpec* session;
    Strategy strategy;
    int crop;
  };
  std::vector<Job> jobs;
  for (int crop : cfg.crop_sizes) {
    for (const auto& s : cfg.sessions) {
      for (auto k : kinds) jobs.push_back({root / s.id / (to_string(k) + "_c" + std::to_string(crop)), &s, k, crop});
    }
    jobs.push_back({root / "oracle" / ("BlankBackground_c" + std::to_string(crop)), nullptr,
                    Strategy::BlankBackground, crop});
  }
  std::vector<fs::path> dirs;
  for (const auto& j : jobs) dirs.push_back(j.dir);
  refuse_existing(dirs, force);
  for (const auto& j : jobs) {
    StreamManifest m;
    if (j.session) {
      m = build_stream(r.frames(j.session->id), j.session->id, j.session->config.intr, j.strategy, j.crop);
    } else {
      CellSpec c;
      c.strategy = MatrixStrategy::BlankBackground;
      c.crop_size_px = j.crop;
      m = r.training_streams(c).front();
    }
    fs::remove_all(j.dir);
    write_manifest(m, j.dir);
  }
  std::cout << "wrote " << jobs.size() << " streams under " << root << '\n';
  return 0;
}

int cmd_detect_events(ExperimentRunner& r) {
  const auto& cfg = r.config();
  std::vector<SessionMetricsRow> rows;
  fs::create_directories(r.results_dir());
  for (const auto& s : cfg.sessions) {
    const auto& frames = r.frames(s.id);
    rows.push_back({s.id, session_metrics(frames, s.config.intr, cfg.saccades), frames.size()});
    const auto hist = gaze_histogram(trace_from_frames(frames, s.config.intr), 16, 16);
    std::ostringstream out;
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) out << (x ? "," : "") << hist[y * 16 + x];
      out << '\n';
    }
    write_text_atomic(r.results_dir() / ("gaze_hist_" + s.id + ".csv"), out.str());
  }
  write_metrics_csv(r.results_dir() / "behavior_metrics.csv", rows);
  std::cout << "wrote metrics for " << rows.size() << " sessions to " << (r.results_dir() / "behavior_metrics.csv")
            << '\n';
  return 0;
}

int cmd_train(ExperimentRunner& r) {
  int failed = 0;
  for (const auto& c : r.selected_cells()) {
    try {
      const auto res = r.train_cell(c);
      std::cout << c.id() << " final_loss " << res.epoch_loss.back() << '\n';
    } catch (const std::exception& e) {
      std::cerr << c.id() << " FAILED: " << e.what() << '\n';
      ++failed;
    }
  }
  return failed ? 1 : 0;
}

int cmd_probe(ExperimentRunner& r) {
  int failed = 0;
  for (const auto& c : r.selected_cells()) {
    try {
      const auto p = r.probe_cell(c);
      std::cout << c.id() << " accuracy " << p.accuracy << " (train " << p.n_train << ", test " << p.n_test << ")\n";
    } catch (const std::exception& e) {
      std::cerr << c.id() << " FAILED: " << e.what() << '\n';
      ++failed;
    }
  }
  return failed ? 1 : 0;
}

int cmd_run_matrix(ExperimentRunner& r) {
  const auto res = r.run_matrix();
  for (const auto& c : res.cells) {
    if (c.ok()) {
      std::printf("%-48s %.4f%s\n", c.cell.id().c_str(), *c.accuracy, c.from_cache ? " (cached)" : "");
    } else {
      std::printf("%-48s FAILED %s\n", c.cell.id().c_str(), c.error.c_str());
    }
  }
  std::cout << "results in " << r.results_dir() << " (config " << res.config_hash << ")\n";
  return res.all_ok() ? 0 : 1;
}

int cmd_behavior_stats(ExperimentRunner& r) {
  const auto res = r.run_matrix();
  const auto samples = r.behavior_samples(res.cells);
  std::vector<SessionMetricsRow> rows;
  for (const auto& s : samples) rows.push_back({s.session_id, s.metrics, r.frames(s.session_id).size()});
  write_metrics_csv(r.results_dir() / "behavior_metrics.csv", rows);
  const auto corr = behavior_correlations(samples);
  write_correlations_csv(corr, r.hash(), r.results_dir() / "correlations.csv");
  for (const auto& c : corr) {
    std::printf("%-10s %-18s r=%s p=%s n=%zu\n", c.grouping.c_str(), c.metric.c_str(),
                c.r ? std::to_string(*c.r).c_str() : "-", c.p_value ? std::to_string(*c.p_value).c_str() : "-", c.n);
  }
  return res.all_ok() ? 0 : 1;
}

int cmd_export_embeddings(ExperimentRunner& r) {
  int failed = 0;
  for (const auto& c : r.selected_cells()) {
    try {
      nn::SslModel model(r.config().ssl.model, c.method == SslMethod::ByolTT, c.seed);
      auto params = model.all_params();
      nn::load_checkpoint(params, r.cell_dir(c) / "model.ckpt");
      const auto& test = r.probe_split(c.crop_size_px).second;
      std::vector<int> labels;
      for (const auto& rec : test.records) labels.push_back(*rec.target_object);
      const auto path = r.cell_dir(c) / "embeddings.csv";
      export_embeddings(extract_features(model.encoder, test.crops), labels, path);
      std::cout << "wrote " << path << '\n';
    } catch (const std::exception& e) {
      std::cerr << c.id() << " FAILED: " << e.what() << '\n';
      ++failed;
    }
  }
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaze-driven self-supervised visual learning toolkit"};
  app.require_subcommand(1);
  Args a;
  std::uint64_t seed_override = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_flag("--force", a.force, "overwrite outputs and ignore the cache");
    sub->add_option("--jobs", a.jobs, "parallel matrix cells")->check(CLI::PositiveNumber);
    sub->add_option("--seed-override", seed_override, "replace every seed with this one");
    sub->add_option("--cell", a.cell, "only cells whose id contains this string");
  };
  const std::pair<const char*, const char*> cmds[] = {
      {"simulate", "simulate every configured session to disk"},
      {"build-streams", "write crop-stream manifests for every session and strategy"},
      {"detect-events", "saccade/fixation detection and behaviour metrics per session"},
      {"train", "train SSL encoders for the selected cells"},
      {"probe", "linear probe on trained cells"},
      {"run-matrix", "train and probe every cell, then write accuracy and stats CSVs"},
      {"behavior-stats", "correlate per-session behaviour metrics with probe accuracy"},
      {"export-embeddings", "write probe-set embeddings of trained cells"},
  };
  for (const auto& [name, help] : cmds) add_common(app.add_subcommand(name, help));
  CLI11_PARSE(app, argc, argv);
  const auto* sub = app.get_subcommands().front();
  if (sub->count("--seed-override")) a.seed_override = seed_override;
  try {
    auto r = make_runner(a);
    const std::string name = sub->get_name();
    if (name == "simulate") return cmd_simulate(r, a.force);
    if (name == "build-streams") return cmd_build_streams(r, a.force);
    if (name == "detect-events") return cmd_detect_events(r);
    if (name == "train") return cmd_train(r);
    if (name == "probe") return cmd_probe(r);
    if (name == "run-matrix") return cmd_run_matrix(r);
    if (name == "behavior-stats") return cmd_behavior_stats(r);
    if (name == "export-embeddings") return cmd_export_embeddings(r);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
