// SPDX-License-Identifier: Apache-2.0
#include "gazessl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "gazessl/nn/checkpoint.hpp"

namespace gazessl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; })) {
      throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
    }
  }
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string split_unit_name(SplitUnit u) { return u == SplitUnit::Session ? "session" : "frame-block"; }

SplitUnit split_unit_from(const std::string& s) {
  if (s == "session") return SplitUnit::Session;
  if (s == "frame-block") return SplitUnit::FrameBlock;
  throw std::invalid_argument("unknown split unit: " + s);
}

// Session keys accepted in "session_defaults", "sessions" and "probe_session".
constexpr std::initializer_list<const char*> kSessionKeys{
    "id", "group", "policy", "policy_seed", "mean_fixation_s", "mean_look_bout_s", "mean_hold_look_s",
    "saccade_amplitude_deg", "duration_s", "n_objects", "frame_px", "hfov_deg", "fps", "background",
    "render_seed", "object_seed", "object_size_deg", "table_spacing", "held_scale", "head_amplitude_deg",
    "head_period_s"};

SessionSpec session_from_json(const json& defaults, const json& j, const std::string& where) {
  check_keys(j, kSessionKeys, where);
  json m = defaults;
  m.update(j);
  SessionSpec s;
  get_if(m, "id", s.id);
  get_if(m, "group", s.group);
  auto& c = s.config;
  const auto kind = policy_kind_from_string(m.value("policy", std::string("ToddlerLike")));
  const std::uint64_t pseed = m.value("policy_seed", std::uint64_t{1});
  c.policy = kind == PolicyKind::AdultLike ? GazePolicy::adult_like(pseed) : GazePolicy::toddler_like(pseed);
  c.policy.kind = kind;
  get_if(m, "mean_fixation_s", c.policy.mean_fixation_s);
  get_if(m, "mean_look_bout_s", c.policy.mean_look_bout_s);
  get_if(m, "mean_hold_look_s", c.policy.mean_hold_look_s);
  get_if(m, "saccade_amplitude_deg", c.policy.saccade_amplitude_deg);
  get_if(m, "duration_s", c.duration_s);
  get_if(m, "n_objects", c.n_objects);
  if (m.contains("frame_px")) c.intr.width_px = c.intr.height_px = m.at("frame_px").get<int>();
  get_if(m, "hfov_deg", c.intr.hfov_deg);
  get_if(m, "fps", c.intr.fps);
  if (m.contains("background")) c.background = background_from_string(m.at("background").get<std::string>());
  get_if(m, "render_seed", c.render_seed);
  get_if(m, "object_seed", c.object_seed);
  get_if(m, "object_size_deg", c.object_size_deg);
  get_if(m, "table_spacing", c.table_spacing);
  get_if(m, "held_scale", c.held_scale);
  get_if(m, "head_amplitude_deg", c.head_motion.amplitude_deg);
  get_if(m, "head_period_s", c.head_motion.period_s);
  return s;
}

json session_to_json(const SessionSpec& s) {
  const auto& c = s.config;
  if (c.intr.width_px != c.intr.height_px) throw std::invalid_argument("session frames must be square");
  return json{{"id", s.id},
              {"group", s.group},
              {"policy", to_string(c.policy.kind)},
              {"policy_seed", c.policy.policy_seed},
              {"mean_fixation_s", c.policy.mean_fixation_s},
              {"mean_look_bout_s", c.policy.mean_look_bout_s},
              {"mean_hold_look_s", c.policy.mean_hold_look_s},
              {"saccade_amplitude_deg", c.policy.saccade_amplitude_deg},
              {"duration_s", c.duration_s},
              {"n_objects", c.n_objects},
              {"frame_px", c.intr.width_px},
              {"hfov_deg", c.intr.hfov_deg},
              {"fps", c.intr.fps},
              {"background", to_string(c.background)},
              {"render_seed", c.render_seed},
              {"object_seed", c.object_seed},
              {"object_size_deg", c.object_size_deg},
              {"table_spacing", c.table_spacing},
              {"held_scale", c.held_scale},
              {"head_amplitude_deg", c.head_motion.amplitude_deg},
              {"head_period_s", c.head_motion.period_s}};
}

json ssl_to_json(const SslConfig& s) {
  return json{{"temperature", s.temperature},
              {"batch_size", s.batch_size},
              {"epochs", s.epochs},
              {"lr", s.lr},
              {"weight_decay", s.weight_decay},
              {"ema_momentum", s.ema_momentum},
              {"fixed_offset", s.fixed_offset},
              {"symmetric_byol", s.symmetric_byol},
              {"encoder_widths", s.model.encoder_widths},
              {"projector_hidden", s.model.projector_hidden},
              {"projection_dim", s.model.projection_dim},
              {"predictor_hidden", s.model.predictor_hidden}};
}

SslConfig ssl_from_json(const json& j) {
  check_keys(j,
             {"temperature", "batch_size", "epochs", "lr", "weight_decay", "ema_momentum", "fixed_offset",
              "symmetric_byol", "encoder_widths", "projector_hidden", "projection_dim", "predictor_hidden"},
             "ssl");
  SslConfig s;
  get_if(j, "temperature", s.temperature);
  get_if(j, "batch_size", s.batch_size);
  get_if(j, "epochs", s.epochs);
  get_if(j, "lr", s.lr);
  get_if(j, "weight_decay", s.weight_decay);
  get_if(j, "ema_momentum", s.ema_momentum);
  get_if(j, "fixed_offset", s.fixed_offset);
  get_if(j, "symmetric_byol", s.symmetric_byol);
  get_if(j, "encoder_widths", s.model.encoder_widths);
  get_if(j, "projector_hidden", s.model.projector_hidden);
  get_if(j, "projection_dim", s.model.projection_dim);
  get_if(j, "predictor_hidden", s.model.predictor_hidden);
  return s;
}

json split_to_json(const SplitSpec& s) {
  return json{{"train_fraction", s.train_fraction},
              {"split_seed", s.split_seed},
              {"unit", split_unit_name(s.unit)},
              {"block_s", s.block_s},
              {"guard_s", s.guard_s}};
}

json probe_to_json(const ProbeConfig& p) {
  return json{{"lr", p.lr},
              {"weight_decay", p.weight_decay},
              {"max_epochs", p.max_epochs},
              {"grad_tol", p.grad_tol},
              {"seed", p.seed}};
}

json cell_to_json(const CellSpec& c) {
  return json{{"strategy", to_string(c.strategy)},
              {"crop_size_px", c.crop_size_px},
              {"delta_t_s", c.delta_t_s},
              {"seed", c.seed},
              {"method", to_string(c.method)},
              {"sessions", c.sessions}};
}

CellSpec cell_from_json(const json& j) {
  check_keys(j, {"strategy", "crop_size_px", "delta_t_s", "seed", "method", "sessions"}, "cell");
  CellSpec c;
  c.strategy = matrix_strategy_from_string(j.at("strategy").get<std::string>());
  get_if(j, "crop_size_px", c.crop_size_px);
  get_if(j, "delta_t_s", c.delta_t_s);
  get_if(j, "seed", c.seed);
  if (j.contains("method")) c.method = ssl_method_from_string(j.at("method").get<std::string>());
  get_if(j, "sessions", c.sessions);
  return c;
}

std::string fmt_g(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string fmt_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string default_group(MatrixStrategy s) { return s == MatrixStrategy::AdultLike ? "adult" : "toddler"; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void copy_over(const fs::path& from, const fs::path& to) {
  fs::create_directories(to.parent_path());
  const fs::path tmp = to.string() + ".tmp";
  fs::copy_file(from, tmp, fs::copy_options::overwrite_existing);
  fs::rename(tmp, to);
}

}  // namespace

std::string to_string(MatrixStrategy s) {
  switch (s) {
    case MatrixStrategy::ToddlerLike: return "ToddlerLike";
    case MatrixStrategy::AdultLike: return "AdultLike";
    case MatrixStrategy::Random: return "Random";
    case MatrixStrategy::NoEyeMovement: return "NoEyeMovement";
    case MatrixStrategy::ObjectsFixation: return "ObjectsFixation";
    case MatrixStrategy::BlankBackground: return "BlankBackground";
  }
  return "?";
}

MatrixStrategy matrix_strategy_from_string(const std::string& s) {
  for (auto k : {MatrixStrategy::ToddlerLike, MatrixStrategy::AdultLike, MatrixStrategy::Random,
                 MatrixStrategy::NoEyeMovement, MatrixStrategy::ObjectsFixation, MatrixStrategy::BlankBackground}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown strategy: " + s);
}

std::string CellSpec::id() const {
  std::string out = to_string(strategy) + "_c" + std::to_string(crop_size_px) + "_dt" + fmt_g(delta_t_s) + "_s" +
                    std::to_string(seed) + (method == SslMethod::SimClrTT ? "_simclr" : "_byol");
  if (!sessions.empty()) {
    out += "_on";
    for (const auto& s : sessions) out += "_" + s;
  }
  return out;
}

const SessionSpec& ExperimentConfig::session(const std::string& id) const {
  for (const auto& s : sessions) {
    if (s.id == id) return s;
  }
  throw std::invalid_argument("unknown session: " + id);
}

void ExperimentConfig::validate() const {
  std::set<std::string> ids;
  for (const auto& s : sessions) {
    if (s.id.empty()) throw std::invalid_argument("config: session without id");
    if (!ids.insert(s.id).second) throw std::invalid_argument("config: duplicate session id " + s.id);
    s.config.validate();
  }
  probe_session.config.validate();
  if (seeds.empty() && cells.empty()) throw std::invalid_argument("config: no seeds");
  probe_split.validate();
  if (oracle_views < 1) throw std::invalid_argument("config: oracle_views must be >= 1");
  saccades.validate();
  const int multiple = 1 << ssl.model.encoder_widths.size();
  const int frame = std::min(probe_session.config.intr.width_px, probe_session.config.intr.height_px);
  for (const auto& c : expand_cells()) {
    if (c.crop_size_px < multiple || c.crop_size_px % multiple != 0 || c.crop_size_px > frame) {
      throw std::invalid_argument("config: crop size " + std::to_string(c.crop_size_px) +
                                  " must be a multiple of " + std::to_string(multiple) + " within the frame");
    }
    SslConfig s = ssl;
    s.delta_t_s = c.delta_t_s;
    s.validate(probe_session.config.intr.fps);
    if (c.sessions.empty()) {
      const auto g = default_group(c.strategy);
      if (c.strategy != MatrixStrategy::BlankBackground &&
          std::none_of(sessions.begin(), sessions.end(), [&](const SessionSpec& s) { return s.group == g; })) {
        throw std::invalid_argument("config: strategy " + to_string(c.strategy) + " needs sessions in group " + g);
      }
    }
    for (const auto& id : c.sessions) {
      const auto& s = session(id);
      if (s.config.intr.width_px < c.crop_size_px) throw std::invalid_argument("config: crop larger than " + id);
    }
  }
}

std::vector<CellSpec> ExperimentConfig::expand_cells() const {
  std::vector<CellSpec> out;
  std::set<std::string> seen;
  auto push = [&](const CellSpec& c) {
    if (seen.insert(c.id()).second) out.push_back(c);
  };
  for (auto m : methods) {
    for (auto st : strategies) {
      for (int crop : crop_sizes) {
        for (double dt : delta_ts) {
          for (auto seed : seeds) {
            CellSpec c;
            c.strategy = st;
            c.crop_size_px = crop;
            c.delta_t_s = dt;
            c.seed = seed;
            c.method = m;
            push(c);
          }
        }
      }
    }
  }
  for (const auto& c : cells) push(c);
  return out;
}

ExperimentConfig experiment_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  check_keys(j,
             {"output_root", "session_defaults", "sessions", "probe_session", "strategies", "crop_sizes", "delta_t",
              "methods", "seeds", "cells", "ssl", "probe_split", "probe", "oracle_views", "saccades"},
             "config");
  ExperimentConfig cfg;
  if (j.contains("output_root")) cfg.output_root = j.at("output_root").get<std::string>();
  const json defaults = j.value("session_defaults", json::object());
  check_keys(defaults, kSessionKeys, "session_defaults");
  for (const auto& s : j.value("sessions", json::array())) cfg.sessions.push_back(session_from_json(defaults, s, "sessions"));
  json probe_defaults = defaults;
  probe_defaults["id"] = "probe";
  probe_defaults["group"] = "probe";
  probe_defaults["render_seed"] = 99;
  probe_defaults["policy_seed"] = 99;
  cfg.probe_session = session_from_json(probe_defaults, j.value("probe_session", json::object()), "probe_session");
  for (const auto& s : j.value("strategies", std::vector<std::string>{}))
    cfg.strategies.push_back(matrix_strategy_from_string(s));
  cfg.crop_sizes = j.value("crop_sizes", std::vector<int>{32});
  cfg.delta_ts = j.value("delta_t", std::vector<double>{1.0 / 30.0});
  for (const auto& s : j.value("methods", std::vector<std::string>{"SimCLR-TT"}))
    cfg.methods.push_back(ssl_method_from_string(s));
  cfg.seeds = j.value("seeds", std::vector<std::uint64_t>{0, 1, 2});
  for (const auto& c : j.value("cells", json::array())) cfg.cells.push_back(cell_from_json(c));
  if (j.contains("ssl")) cfg.ssl = ssl_from_json(j.at("ssl"));
  if (j.contains("probe_split")) {
    const auto& s = j.at("probe_split");
    check_keys(s, {"train_fraction", "split_seed", "unit", "block_s", "guard_s"}, "probe_split");
    get_if(s, "train_fraction", cfg.probe_split.train_fraction);
    get_if(s, "split_seed", cfg.probe_split.split_seed);
    if (s.contains("unit")) cfg.probe_split.unit = split_unit_from(s.at("unit").get<std::string>());
    get_if(s, "block_s", cfg.probe_split.block_s);
    get_if(s, "guard_s", cfg.probe_split.guard_s);
  }
  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    check_keys(p, {"lr", "weight_decay", "max_epochs", "grad_tol", "seed"}, "probe");
    get_if(p, "lr", cfg.probe.lr);
    get_if(p, "weight_decay", cfg.probe.weight_decay);
    get_if(p, "max_epochs", cfg.probe.max_epochs);
    get_if(p, "grad_tol", cfg.probe.grad_tol);
    get_if(p, "seed", cfg.probe.seed);
  }
  get_if(j, "oracle_views", cfg.oracle_views);
  if (j.contains("saccades")) {
    const auto& s = j.at("saccades");
    check_keys(s, {"t1_deg_s", "t2_deg_s", "theta_deg", "extend_adjacent"}, "saccades");
    get_if(s, "t1_deg_s", cfg.saccades.t1_deg_s);
    get_if(s, "t2_deg_s", cfg.saccades.t2_deg_s);
    get_if(s, "theta_deg", cfg.saccades.theta_deg);
    get_if(s, "extend_adjacent", cfg.saccades.extend_adjacent);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) { return experiment_from_json_text(read_text(path)); }

std::string canonical_json(const ExperimentConfig& cfg) {
  json j;
  j["sessions"] = json::array();
  for (const auto& s : cfg.sessions) j["sessions"].push_back(session_to_json(s));
  j["probe_session"] = session_to_json(cfg.probe_session);
  j["strategies"] = json::array();
  for (auto s : cfg.strategies) j["strategies"].push_back(to_string(s));
  j["crop_sizes"] = cfg.crop_sizes;
  j["delta_t"] = cfg.delta_ts;
  j["methods"] = json::array();
  for (auto m : cfg.methods) j["methods"].push_back(to_string(m));
  j["seeds"] = cfg.seeds;
  j["cells"] = json::array();
  for (const auto& c : cfg.cells) j["cells"].push_back(cell_to_json(c));
  j["ssl"] = ssl_to_json(cfg.ssl);
  j["probe_split"] = split_to_json(cfg.probe_split);
  j["probe"] = probe_to_json(cfg.probe);
  j["oracle_views"] = cfg.oracle_views;
  j["saccades"] = json{{"t1_deg_s", cfg.saccades.t1_deg_s},
                       {"t2_deg_s", cfg.saccades.t2_deg_s},
                       {"theta_deg", cfg.saccades.theta_deg},
                       {"extend_adjacent", cfg.saccades.extend_adjacent}};
  return j.dump();
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const auto text = canonical_json(cfg);
  return hex64(fnv1a(text.data(), text.size()));
}

std::uint64_t stream_hash(const StreamManifest& m) {
  std::ostringstream meta;
  meta << m.session_id << '|' << to_string(m.strategy) << '|' << m.crop_size_px << '|' << m.intr.fps << '|';
  for (const auto& r : m.records) {
    meta << r.frame_idx << ',' << fmt_full(r.gaze_x) << ',' << fmt_full(r.gaze_y) << ','
         << (r.target_object ? *r.target_object : -1) << ',' << r.holding << ';';
  }
  const auto text = meta.str();
  std::uint64_t h = fnv1a(text.data(), text.size());
  for (const auto& img : m.crops) h = fnv1a(img.bytes().data(), img.bytes().size(), h);
  return h;
}

bool MatrixResult::all_ok() const {
  return std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.ok(); });
}

ExperimentRunner::ExperimentRunner(ExperimentConfig cfg, RunOptions opts) : cfg_(std::move(cfg)), opts_(std::move(opts)) {
  if (opts_.seed_override) {
    cfg_.seeds = {*opts_.seed_override};
    for (auto& c : cfg_.cells) c.seed = *opts_.seed_override;
  }
  if (opts_.jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  cfg_.validate();
  hash_ = config_hash(cfg_);
}

void ExperimentRunner::log(const std::string& msg) const {
  if (opts_.log) opts_.log(msg);
}

std::vector<CellSpec> ExperimentRunner::selected_cells() const {
  std::vector<CellSpec> out;
  for (const auto& c : cfg_.expand_cells()) {
    if (opts_.cell_filter.empty() || c.id().find(opts_.cell_filter) != std::string::npos) out.push_back(c);
  }
  return out;
}

fs::path ExperimentRunner::cell_dir(const CellSpec& cell) const { return cfg_.output_root / "cells" / cell.id(); }
fs::path ExperimentRunner::results_dir() const { return cfg_.output_root / "results"; }

const std::vector<FrameRecord>& ExperimentRunner::frames(const std::string& session_id) {
  std::lock_guard lock(mu_);
  auto it = frames_.find(session_id);
  if (it == frames_.end()) {
    const SessionConfig& sc = cfg_.session(session_id).config;
    log("simulating session " + session_id);
    it = frames_.emplace(session_id, std::make_shared<std::vector<FrameRecord>>(simulate_session(sc))).first;
  }
  return *it->second;
}

const std::vector<FrameRecord>& ExperimentRunner::probe_frames() {
  std::lock_guard lock(mu_);
  const std::string key = "\x01probe";
  auto it = frames_.find(key);
  if (it == frames_.end()) {
    log("simulating probe session");
    it = frames_.emplace(key, std::make_shared<std::vector<FrameRecord>>(simulate_session(cfg_.probe_session.config)))
             .first;
  }
  return *it->second;
}

const std::pair<StreamManifest, StreamManifest>& ExperimentRunner::probe_split(int crop) {
  const auto& pf = probe_frames();
  std::lock_guard lock(mu_);
  auto it = probe_splits_.find(crop);
  if (it == probe_splits_.end()) {
    const auto m = build_stream(pf, cfg_.probe_session.id, cfg_.probe_session.config.intr, Strategy::ObjectsFixation, crop);
    auto parts = std::make_shared<std::pair<StreamManifest, StreamManifest>>(split(m, cfg_.probe_split));
    std::uint64_t h = stream_hash(parts->first);
    h = fnv1a(&h, sizeof h, stream_hash(parts->second));
    probe_hashes_[crop] = h;
    it = probe_splits_.emplace(crop, parts).first;
  }
  return *it->second;
}

std::vector<StreamManifest> ExperimentRunner::training_streams(const CellSpec& cell) {
  std::vector<StreamManifest> out;
  if (cell.strategy == MatrixStrategy::BlankBackground) {
    const Playroom room(cfg_.probe_session.config);
    const auto views = generate_oracle_views(room.objects(), cfg_.oracle_views, Background::Blank, cell.crop_size_px,
                                             cfg_.probe_session.config.render_seed);
    out.push_back(build_oracle_stream(views, "oracle", cfg_.probe_session.config.intr, cell.crop_size_px));
    return out;
  }
  std::vector<std::string> ids = cell.sessions;
  if (ids.empty()) {
    const auto g = default_group(cell.strategy);
    for (const auto& s : cfg_.sessions) {
      if (s.group == g) ids.push_back(s.id);
    }
  }
  Strategy st = Strategy::HumanGaze;
  switch (cell.strategy) {
    case MatrixStrategy::Random: st = Strategy::RandomGaze; break;
    case MatrixStrategy::NoEyeMovement: st = Strategy::NoEyeMovement; break;
    case MatrixStrategy::ObjectsFixation: st = Strategy::ObjectsFixation; break;
    default: break;
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& spec = cfg_.session(ids[i]);
    out.push_back(build_stream(frames(ids[i]), ids[i], spec.config.intr, st, cell.crop_size_px,
                               mix_seed(cell.seed, i)));
  }
  return out;
}

SslConfig ExperimentRunner::ssl_for(const CellSpec& cell) const {
  SslConfig s = cfg_.ssl;
  s.method = cell.method;
  s.delta_t_s = cell.delta_t_s;
  s.seed = cell.seed;
  return s;
}

nn::SslModel ExperimentRunner::make_model(const CellSpec& cell) const {
  const auto s = ssl_for(cell);
  return nn::SslModel(s.model, s.method == SslMethod::ByolTT, s.seed);
}

std::string ExperimentRunner::cell_key(const CellSpec& cell, const std::vector<StreamManifest>& streams, int crop) {
  json k;
  k["ssl"] = ssl_to_json(ssl_for(cell));
  k["method"] = to_string(cell.method);
  k["delta_t_s"] = cell.delta_t_s;
  k["seed"] = cell.seed;
  k["crop"] = crop;
  k["streams"] = json::array();
  for (const auto& m : streams) k["streams"].push_back(hex64(stream_hash(m)));
  const auto text = k.dump();
  return hex64(fnv1a(text.data(), text.size()));
}

TrainResult ExperimentRunner::train_cell(const CellSpec& cell, std::string* cache_key, bool* from_cache) {
  const auto streams = training_streams(cell);
  const auto key = cell_key(cell, streams, cell.crop_size_px);
  if (cache_key) *cache_key = key;
  const fs::path cache = cfg_.output_root / "cache" / key;
  const fs::path dir = cell_dir(cell);
  TrainResult result{make_model(cell), {}};
  const bool hit = !opts_.force && fs::exists(cache / "model.ckpt") && fs::exists(cache / "loss.csv");
  if (hit) {
    auto params = result.model.all_params();
    nn::load_checkpoint(params, cache / "model.ckpt");
    result.epoch_loss = read_loss_curve(cache / "loss.csv");
    log(cell.id() + ": reusing cached encoder " + key);
  } else {
    const auto cfg = ssl_for(cell);
    log(cell.id() + ": training on " + std::to_string(streams.size()) + " stream(s)");
    result = train(streams, cfg, [&](int epoch, double loss) {
      log(cell.id() + ": epoch " + std::to_string(epoch + 1) + " loss " + fmt_g(loss, 6));
    });
    fs::create_directories(cache);
    nn::save_checkpoint(result.model.all_params(), cache / "model.ckpt");
    write_loss_curve(result.epoch_loss, cache / "loss.csv");
  }
  if (from_cache) *from_cache = hit;
  fs::create_directories(dir);
  copy_over(cache / "model.ckpt", dir / "model.ckpt");
  copy_over(cache / "loss.csv", dir / "loss.csv");
  return result;
}

ProbeResult ExperimentRunner::probe_cell(const CellSpec& cell) {
  auto model = make_model(cell);
  auto params = model.all_params();
  nn::load_checkpoint(params, cell_dir(cell) / "model.ckpt");
  const auto& [tr, te] = probe_split(cell.crop_size_px);
  std::vector<int> ytr, yte;
  for (const auto& r : tr.records) ytr.push_back(*r.target_object);
  for (const auto& r : te.records) yte.push_back(*r.target_object);
  const auto ftr = extract_features(model.encoder, tr.crops);
  const auto fte = extract_features(model.encoder, te.crops);
  return train_probe(ftr, ytr, fte, yte, cfg_.probe);
}

CellResult ExperimentRunner::run_cell(const CellSpec& cell) {
  CellResult out;
  out.cell = cell;
  try {
    const auto streams = training_streams(cell);
    const auto key = cell_key(cell, streams, cell.crop_size_px);
    probe_split(cell.crop_size_px);
    std::uint64_t ph;
    {
      std::lock_guard lock(mu_);
      ph = probe_hashes_.at(cell.crop_size_px);
    }
    const auto probe_text = probe_to_json(cfg_.probe).dump() + hex64(ph);
    const fs::path probe_file =
        cfg_.output_root / "cache" / key / ("probe_" + hex64(fnv1a(probe_text.data(), probe_text.size())) + ".json");
    const fs::path dir = cell_dir(cell);
    if (!opts_.force && fs::exists(probe_file) && fs::exists(dir / "model.ckpt")) {
      const auto j = json::parse(read_text(probe_file));
      out.accuracy = j.at("accuracy").get<double>();
      out.epoch_loss = read_loss_curve(cfg_.output_root / "cache" / key / "loss.csv");
      out.cache_key = key;
      out.from_cache = true;
      log(cell.id() + ": cached accuracy " + fmt_g(*out.accuracy, 6));
    } else {
      auto tr = train_cell(cell, &out.cache_key, &out.from_cache);
      out.epoch_loss = tr.epoch_loss;
      const auto pr = probe_cell(cell);
      out.accuracy = pr.accuracy;
      write_text_atomic(probe_file, json{{"accuracy", pr.accuracy}, {"n_train", pr.n_train}, {"n_test", pr.n_test}}.dump());
      log(cell.id() + ": accuracy " + fmt_g(pr.accuracy, 6));
    }
    json r{{"config_hash", hash_}, {"cell", cell_to_json(cell)}, {"cache_key", out.cache_key},
           {"accuracy", *out.accuracy}};
    fs::create_directories(dir);
    write_text_atomic(dir / "result.json", r.dump(2) + "\n");
  } catch (const std::exception& e) {
    out.accuracy.reset();
    out.error = e.what();
    log(cell.id() + ": FAILED " + out.error);
    try {
      fs::create_directories(cell_dir(cell));
      write_text_atomic(cell_dir(cell) / "result.json",
                        json{{"config_hash", hash_}, {"cell", cell_to_json(cell)}, {"error", out.error}}.dump(2) + "\n");
    } catch (const std::exception&) {
    }
  }
  return out;
}

MatrixResult ExperimentRunner::run_matrix() {
  const auto cells = selected_cells();
  MatrixResult res;
  res.config_hash = hash_;
  res.cells.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) res.cells[i] = run_cell(cells[i]);
  };
  const int n = std::max(1, std::min<int>(opts_.jobs, static_cast<int>(cells.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  res.stats = strategy_ttests(res.cells);
  std::vector<MetricsRow> rows;
  for (const auto& c : res.cells) {
    rows.push_back({to_string(c.cell.strategy), c.cell.seed, c.cell.delta_t_s, c.cell.crop_size_px, c.accuracy,
                    c.cell.id()});
  }
  fs::create_directories(results_dir());
  write_accuracy_csv(rows, hash_, results_dir() / "accuracy.csv");
  write_stats_csv(res.stats, hash_, results_dir() / "stats.csv");
  return res;
}

std::vector<BehaviorSample> ExperimentRunner::behavior_samples(const std::vector<CellResult>& cells) {
  std::vector<BehaviorSample> out;
  for (const auto& s : cfg_.sessions) {
    double sum = 0;
    int n = 0;
    for (const auto& c : cells) {
      const bool human = c.cell.strategy == MatrixStrategy::ToddlerLike || c.cell.strategy == MatrixStrategy::AdultLike;
      if (human && c.ok() && c.cell.sessions.size() == 1 && c.cell.sessions[0] == s.id) {
        sum += *c.accuracy;
        ++n;
      }
    }
    if (n == 0) continue;
    out.push_back({s.id, s.group, session_metrics(frames(s.id), s.config.intr, cfg_.saccades), sum / n});
  }
  return out;
}

std::vector<StatsRow> strategy_ttests(const std::vector<CellResult>& cells) {
  using Key = std::tuple<int, double, int>;
  std::map<Key, std::map<std::string, std::vector<double>>> groups;
  for (const auto& c : cells) {
    if (!c.ok() || !c.cell.sessions.empty()) continue;
    groups[{c.cell.crop_size_px, c.cell.delta_t_s, static_cast<int>(c.cell.method)}][to_string(c.cell.strategy)]
        .push_back(*c.accuracy);
  }
  std::vector<StatsRow> out;
  for (const auto& [key, by_strategy] : groups) {
    const auto& [crop, dt, method] = key;
    const std::string suffix = " @ c" + std::to_string(crop) + " dt" + fmt_g(dt) + " " +
                               to_string(static_cast<SslMethod>(method));
    for (auto a = by_strategy.begin(); a != by_strategy.end(); ++a) {
      for (auto b = std::next(a); b != by_strategy.end(); ++b) {
        if (a->second.size() < 2 || b->second.size() < 2) continue;
        const auto t = ttest_ind(a->second, b->second);
        out.push_back({a->first + " vs " + b->first + suffix, t.statistic, t.p_value, t.df, t.n});
      }
    }
  }
  return out;
}

BehaviorMetrics session_metrics(std::span<const FrameRecord> frames, const CameraIntrinsics& intr,
                                const SaccadeThresholds& thr) {
  const auto trace = trace_from_frames(frames, intr);
  const auto seg = detect_saccades(trace, thr);
  const auto labels = labels_from_frames(frames);
  return compute_metrics(seg, labels, intr.fps);
}

namespace {

std::optional<double> metric_value(const BehaviorMetrics& m, const std::string& name) {
  if (name == "mean_fixation_s") return m.mean_fixation_s;
  if (name == "mean_look_bout_s") return m.mean_look_bout_s;
  if (name == "mean_hold_look_s") return m.mean_hold_look_s;
  if (name == "cumulative_look_s") return m.cumulative_look_s;
  if (name == "mean_saccade_s") return m.mean_saccade_s;
  throw std::invalid_argument("unknown metric: " + name);
}

}  // namespace

std::vector<CorrelationRow> behavior_correlations(const std::vector<BehaviorSample>& samples) {
  std::vector<std::string> groupings{"pooled"};
  std::set<std::string> groups;
  for (const auto& s : samples) groups.insert(s.group);
  groupings.insert(groupings.end(), groups.begin(), groups.end());
  std::vector<CorrelationRow> out;
  for (const auto& g : groupings) {
    for (const auto& metric : behavior_metric_names()) {
      std::vector<double> x, y;
      for (const auto& s : samples) {
        if (g != "pooled" && s.group != g) continue;
        const auto v = metric_value(s.metrics, metric);
        if (!v) continue;
        x.push_back(*v);
        y.push_back(s.accuracy);
      }
      CorrelationRow row{g, metric, std::nullopt, std::nullopt, x.size()};
      if (x.size() >= 3) {
        try {
          const auto r = pearson(x, y);
          row.r = r.statistic;
          row.p_value = r.p_value;
        } catch (const std::invalid_argument&) {
        }
      }
      out.push_back(row);
    }
  }
  return out;
}

void write_correlations_csv(const std::vector<CorrelationRow>& rows, const std::string& config_hash,
                            const fs::path& path) {
  std::ostringstream out;
  out << "config_hash,grouping,metric,r,p_value,n\n";
  for (const auto& r : rows) {
    out << config_hash << ',' << r.grouping << ',' << r.metric << ',' << (r.r ? fmt_full(*r.r) : "") << ','
        << (r.p_value ? fmt_full(*r.p_value) : "") << ',' << r.n << '\n';
  }
  write_text_atomic(path, out.str());
}

}  // namespace gazessl
