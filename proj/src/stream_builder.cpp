// SPDX-License-Identifier: Apache-2.0
#include "gazessl/stream_builder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gazessl/rng.hpp"

namespace gazessl {

namespace fs = std::filesystem;

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::HumanGaze: return "HumanGaze";
    case Strategy::RandomGaze: return "RandomGaze";
    case Strategy::NoEyeMovement: return "NoEyeMovement";
    case Strategy::ObjectsFixation: return "ObjectsFixation";
    case Strategy::BlankBackground: return "BlankBackground";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  for (auto k : {Strategy::HumanGaze, Strategy::RandomGaze, Strategy::NoEyeMovement, Strategy::ObjectsFixation,
                 Strategy::BlankBackground}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown strategy: " + s);
}

double manifest_time(int frame_idx, double fps) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", frame_idx / fps);
  return std::strtod(buf, nullptr);
}

std::vector<std::pair<std::size_t, std::size_t>> contiguous_runs(const StreamManifest& m) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= m.records.size(); ++i) {
    if (i == m.records.size() || m.records[i].frame_idx != m.records[i - 1].frame_idx + 1) {
      if (i > begin) runs.emplace_back(begin, i);
      begin = i;
    }
  }
  return runs;
}

namespace {

std::string crop_name(int frame_idx) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "crops/%06d.png", frame_idx);
  return buf;
}

void push(StreamManifest& m, const FrameRecord& fr, const GazePoint& g, Image crop_img, bool keep_labels) {
  ManifestRecord r;
  r.frame_idx = fr.frame_idx;
  r.time_s = manifest_time(fr.frame_idx, m.intr.fps);
  r.crop_file = crop_name(fr.frame_idx);
  r.gaze_x = g.x;
  r.gaze_y = g.y;
  if (keep_labels) {
    r.target_object = fr.target_object;
    r.holding = fr.holding;
  }
  m.records.push_back(std::move(r));
  m.crops.push_back(std::move(crop_img));
}

}  // namespace

StreamManifest build_stream(std::span<const FrameRecord> session, const std::string& session_id,
                            const CameraIntrinsics& intr, Strategy strategy, int crop_size_px,
                            std::uint64_t random_seed) {
  if (session.empty()) throw std::invalid_argument("build_stream: empty session");
  intr.validate();
  if (crop_size_px < 1 || crop_size_px > std::min(intr.width_px, intr.height_px)) {
    throw std::domain_error("build_stream: crop size does not fit the frame");
  }
  if (strategy == Strategy::BlankBackground) {
    throw std::invalid_argument("build_stream: BlankBackground streams are built from oracle views");
  }
  StreamManifest m;
  m.session_id = session_id;
  m.intr = intr;
  m.strategy = strategy;
  m.crop_size_px = crop_size_px;

  for (std::size_t i = 1; i < session.size(); ++i) {
    if (session[i].frame_idx <= session[i - 1].frame_idx) {
      throw std::invalid_argument("build_stream: frames must be strictly increasing");
    }
  }

  switch (strategy) {
    case Strategy::HumanGaze:
      for (const auto& fr : session) push(m, fr, fr.gaze, crop(fr.image, compute_crop(fr.gaze, crop_size_px, intr)), true);
      break;
    case Strategy::RandomGaze: {
      Rng rng(mix_seed(random_seed, 0xDA7A));
      for (const auto& fr : session) {
        const GazePoint g{rng.uniform(0.0, intr.width_px), rng.uniform(0.0, intr.height_px)};
        push(m, fr, g, crop(fr.image, compute_crop(g, crop_size_px, intr)), false);
      }
      break;
    }
    case Strategy::NoEyeMovement: {
      double sx = 0.0, sy = 0.0;
      for (const auto& fr : session) {
        sx += fr.gaze.x;
        sy += fr.gaze.y;
      }
      const GazePoint c{sx / session.size(), sy / session.size()};
      const CropWindow w = compute_crop(c, crop_size_px, intr);
      for (const auto& fr : session) push(m, fr, c, crop(fr.image, w), false);
      break;
    }
    case Strategy::ObjectsFixation: {
      const int window = std::clamp(static_cast<int>(std::lround(deg_to_px(kObjectsFixationFovDeg, intr))), 1,
                                    std::min(intr.width_px, intr.height_px));
      for (const auto& fr : session) {
        if (!fr.target_object) continue;
        Image patch = crop(fr.image, compute_crop(fr.gaze, window, intr));
        push(m, fr, fr.gaze, resize_bilinear(patch, crop_size_px, crop_size_px), true);
      }
      if (m.records.empty()) throw std::invalid_argument("build_stream: no frames with a target object");
      break;
    }
    case Strategy::BlankBackground:
      break;
  }
  return m;
}

StreamManifest build_oracle_stream(std::span<const LabeledImage> views, const std::string& session_id,
                                   const CameraIntrinsics& intr, int crop_size_px) {
  if (views.empty()) throw std::invalid_argument("build_oracle_stream: no views");
  StreamManifest m;
  m.session_id = session_id;
  m.intr = intr;
  m.strategy = Strategy::BlankBackground;
  m.crop_size_px = crop_size_px;
  int frame = 0;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (i > 0 && views[i].label != views[i - 1].label) frame += 1;  // break the run between objects
    ManifestRecord r;
    r.frame_idx = frame;
    r.time_s = manifest_time(frame, intr.fps);
    r.crop_file = crop_name(frame);
    r.gaze_x = 0.5 * crop_size_px;
    r.gaze_y = 0.5 * crop_size_px;
    r.target_object = views[i].label;
    m.records.push_back(std::move(r));
    m.crops.push_back(resize_bilinear(views[i].image, crop_size_px, crop_size_px));
    ++frame;
  }
  return m;
}

fs::path stream_dir(const fs::path& root, const std::string& session_id, Strategy s) {
  return root / session_id / to_string(s);
}

void write_manifest(const StreamManifest& m, const fs::path& dir) {
  if (!m.crops.empty() && m.crops.size() != m.records.size()) {
    throw std::invalid_argument("write_manifest: crops and records differ in length");
  }
  fs::create_directories(dir / "crops");
  const fs::path tmp = dir / "manifest.txt.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("write_manifest: cannot write " + tmp.string());
    char buf[512];
    out << "# gaze-ssl stream manifest v1\n";
    out << "session_id " << m.session_id << "\n";
    out << "strategy " << to_string(m.strategy) << "\n";
    std::snprintf(buf, sizeof buf, "intr %d %d %.17g %.17g\n", m.intr.width_px, m.intr.height_px, m.intr.hfov_deg,
                  m.intr.fps);
    out << buf;
    out << "crop_size_px " << m.crop_size_px << "\n";
    out << "records " << m.records.size() << "\n";
    out << "frame_idx,time_s,crop_file,gaze_x,gaze_y,target_object,holding\n";
    for (const auto& r : m.records) {
      std::snprintf(buf, sizeof buf, "%d,%.6f,%s,%.17g,%.17g,%d,%d\n", r.frame_idx, r.time_s, r.crop_file.c_str(),
                    r.gaze_x, r.gaze_y, r.target_object.value_or(-1), r.holding ? 1 : 0);
      out << buf;
    }
    if (!out) throw std::runtime_error("write_manifest: I/O error on " + tmp.string());
  }
  for (std::size_t i = 0; i < m.crops.size(); ++i) write_png(dir / m.records[i].crop_file, m.crops[i]);
  fs::rename(tmp, dir / "manifest.txt");
}

StreamManifest read_manifest(const fs::path& dir, bool load_crops) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw std::runtime_error("read_manifest: cannot open " + (dir / "manifest.txt").string());
  StreamManifest m;
  std::string line;
  std::size_t expected = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("read_manifest: " + what + " in " + (dir / "manifest.txt").string());
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "session_id") {
      ls >> m.session_id;
    } else if (key == "strategy") {
      std::string s;
      ls >> s;
      m.strategy = strategy_from_string(s);
    } else if (key == "intr") {
      std::string hfov, fps;
      ls >> m.intr.width_px >> m.intr.height_px >> hfov >> fps;
      m.intr.hfov_deg = std::strtod(hfov.c_str(), nullptr);
      m.intr.fps = std::strtod(fps.c_str(), nullptr);
    } else if (key == "crop_size_px") {
      ls >> m.crop_size_px;
    } else if (key == "records") {
      ls >> expected;
    } else if (key.rfind("frame_idx,", 0) == 0) {
      break;
    } else {
      fail("unknown header key '" + key + "'");
    }
  }
  m.records.reserve(expected);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 7) fail("malformed record '" + line + "'");
    ManifestRecord r;
    r.frame_idx = std::stoi(f[0]);
    r.time_s = std::strtod(f[1].c_str(), nullptr);
    r.crop_file = f[2];
    r.gaze_x = std::strtod(f[3].c_str(), nullptr);
    r.gaze_y = std::strtod(f[4].c_str(), nullptr);
    const int target = std::stoi(f[5]);
    if (target >= 0) r.target_object = target;
    r.holding = f[6] == "1";
    if (!m.records.empty() && r.frame_idx <= m.records.back().frame_idx) fail("frame indices not increasing");
    m.records.push_back(std::move(r));
  }
  if (m.records.size() != expected) fail("record count mismatch");
  if (load_crops) {
    m.crops.reserve(m.records.size());
    for (const auto& r : m.records) {
      Image img = read_png(dir / r.crop_file);
      if (img.width() != m.crop_size_px || img.height() != m.crop_size_px) fail("crop size mismatch for " + r.crop_file);
      m.crops.push_back(std::move(img));
    }
  }
  return m;
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("split: train_fraction must be in (0,1)");
  if (!(block_s > 0.0) || guard_s < 0.0) throw std::invalid_argument("split: invalid block/guard length");
}

namespace {

StreamManifest subset(const StreamManifest& m, const std::vector<std::size_t>& idx) {
  StreamManifest out;
  out.session_id = m.session_id;
  out.intr = m.intr;
  out.strategy = m.strategy;
  out.crop_size_px = m.crop_size_px;
  for (auto i : idx) {
    out.records.push_back(m.records[i]);
    if (!m.crops.empty()) out.crops.push_back(m.crops[i]);
  }
  return out;
}

}  // namespace

std::pair<StreamManifest, StreamManifest> split(const StreamManifest& m, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = m.records.size();
  if (n < 2) throw std::invalid_argument("split: need at least 2 records");
  const double span_frames = m.records.back().frame_idx - m.records.front().frame_idx + 1;
  const auto n_blocks = static_cast<std::size_t>(
      std::clamp<double>(std::ceil(span_frames / (spec.block_s * m.intr.fps)), 2.0, static_cast<double>(n)));
  const auto n_test = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround((1.0 - spec.train_fraction) * n_blocks)), 1, n_blocks - 1);

  std::vector<std::size_t> order(n_blocks);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(spec.split_seed, 0x5B117));
  for (std::size_t i = n_blocks - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<bool> is_test(n_blocks, false);
  for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;

  std::vector<std::size_t> train_idx, test_idx;
  std::vector<int> train_frames;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::size_t lo = b * n / n_blocks;
    const std::size_t hi = (b + 1) * n / n_blocks;
    for (std::size_t i = lo; i < hi; ++i) {
      if (is_test[b]) {
        test_idx.push_back(i);
      } else {
        train_idx.push_back(i);
        train_frames.push_back(m.records[i].frame_idx);
      }
    }
  }
  const auto guard = static_cast<int>(std::lround(spec.guard_s * m.intr.fps));
  std::vector<std::size_t> kept;
  for (auto i : test_idx) {
    const int f = m.records[i].frame_idx;
    auto it = std::lower_bound(train_frames.begin(), train_frames.end(), f);
    int nearest = INT32_MAX;
    if (it != train_frames.end()) nearest = std::min(nearest, *it - f);
    if (it != train_frames.begin()) nearest = std::min(nearest, f - *std::prev(it));
    if (nearest > guard) kept.push_back(i);
  }
  return {subset(m, train_idx), subset(m, kept)};
}

std::pair<std::vector<StreamManifest>, std::vector<StreamManifest>> split(
    const std::vector<StreamManifest>& manifests, const SplitSpec& spec) {
  spec.validate();
  std::vector<StreamManifest> train, test;
  if (spec.unit == SplitUnit::FrameBlock) {
    for (const auto& m : manifests) {
      auto [a, b] = split(m, spec);
      train.push_back(std::move(a));
      test.push_back(std::move(b));
    }
    return {train, test};
  }
  const std::size_t n = manifests.size();
  if (n < 2) throw std::invalid_argument("split: session split needs at least 2 sessions");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(spec.split_seed, 0x5E55));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const auto n_train =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(spec.train_fraction * n)), 1, n - 1);
  std::vector<bool> is_train(n, false);
  for (std::size_t k = 0; k < n_train; ++k) is_train[order[k]] = true;
  for (std::size_t i = 0; i < n; ++i) (is_train[i] ? train : test).push_back(manifests[i]);
  return {train, test};
}

std::vector<std::size_t> resample(std::span<const int> labels, ResampleMode mode, int top_k, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  const int n_classes = static_cast<int>(by_class.size());
  if (top_k < 1 || top_k >= n_classes) throw std::invalid_argument("resample: top_k must be in [1, #classes)");

  std::vector<int> classes;
  for (const auto& [c, _] : by_class) classes.push_back(c);
  std::stable_sort(classes.begin(), classes.end(),
                   [&](int a, int b) { return by_class[a].size() > by_class[b].size(); });
  const std::vector<int> top(classes.begin(), classes.begin() + top_k);
  const std::vector<int> rest(classes.begin() + top_k, classes.end());
  auto mean_count = [&](const std::vector<int>& cs) {
    double s = 0;
    for (int c : cs) s += static_cast<double>(by_class[c].size());
    return static_cast<std::size_t>(std::llround(s / cs.size()));
  };

  Rng rng(mix_seed(seed, 0x4E5A));
  std::vector<bool> keep(labels.size(), true);
  std::vector<std::size_t> extra;
  if (mode == ResampleMode::Undersample) {
    const std::size_t target = mean_count(rest);
    for (int c : top) {
      auto idx = by_class[c];
      if (idx.size() <= target) continue;
      for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
      for (std::size_t k = target; k < idx.size(); ++k) keep[idx[k]] = false;
    }
  } else {
    const std::size_t target = mean_count(top);
    for (int c : rest) {
      const auto& idx = by_class[c];
      for (std::size_t k = idx.size(); k < target; ++k) extra.push_back(idx[rng.below(idx.size())]);
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (keep[i]) out.push_back(i);
  }
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

}  // namespace gazessl
