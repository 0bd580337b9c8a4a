// SPDX-License-Identifier: Apache-2.0
#include "gazessl/eval_stats.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "gazessl/nn/adamw.hpp"
#include "gazessl/nn/ops.hpp"

namespace gazessl {

using nn::Tensor;
using nn::Var;

Tensor images_to_tensor(std::span<const Image> images, int size) {
  const auto S = static_cast<std::size_t>(size);
  std::vector<float> data;
  data.reserve(images.size() * 3 * S * S);
  for (const auto& img : images) {
    if (img.width() != size || img.height() != size) {
      throw std::invalid_argument("images_to_tensor: expected " + std::to_string(size) + "px images, got " +
                                  std::to_string(img.width()) + "x" + std::to_string(img.height()));
    }
    append_chw(img, data);
  }
  return Tensor({images.size(), 3, S, S}, std::move(data));
}

Tensor extract_features(const nn::Encoder& encoder, std::span<const Image> images, int batch_size) {
  if (images.empty()) throw std::invalid_argument("extract_features: no images");
  if (batch_size < 1) throw std::invalid_argument("extract_features: batch_size must be >= 1");
  const int size = images.front().width();
  const auto D = static_cast<std::size_t>(encoder.out_dim());
  Tensor out({images.size(), D});
  const nn::Encoder frozen = encoder.frozen_copy();
  for (std::size_t b = 0; b < images.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(images.size(), b + static_cast<std::size_t>(batch_size));
    Var f = frozen.forward(Var::leaf(images_to_tensor(images.subspan(b, e - b), size)));
    std::copy_n(f.value().ptr(), (e - b) * D, out.ptr() + b * D);
  }
  return out;
}

ProbeResult train_probe(const Tensor& train_x, std::span<const int> train_y, const Tensor& test_x,
                        std::span<const int> test_y, const ProbeConfig& cfg) {
  if (train_x.rank() != 2 || train_x.dim(0) != train_y.size()) throw std::invalid_argument("train_probe: bad train set");
  if (test_x.rank() != 2 || test_x.dim(0) != test_y.size() || test_x.dim(1) != train_x.dim(1)) {
    throw std::invalid_argument("train_probe: bad test set");
  }
  int k = 0;
  for (int y : train_y) {
    if (y < 0) throw std::invalid_argument("train_probe: negative label");
    k = std::max(k, y + 1);
  }
  for (int y : test_y) {
    if (y < 0) throw std::invalid_argument("train_probe: negative label");
    k = std::max(k, y + 1);
  }
  {
    std::vector<int> present(train_y.begin(), train_y.end());
    std::sort(present.begin(), present.end());
    if (std::unique(present.begin(), present.end()) - present.begin() < 2) {
      throw std::invalid_argument("train_probe: training set has fewer than 2 classes");
    }
  }
  const std::size_t K = static_cast<std::size_t>(k), D = train_x.dim(1);
  Rng rng(mix_seed(cfg.seed, 0x9B0BE));
  Var W = Var::leaf(nn::kaiming_uniform({K, D}, D, rng), true);
  Var b = Var::leaf(Tensor({K}), true);
  nn::AdamW opt({{"probe.weight", W}, {"probe.bias", b}},
                {static_cast<float>(cfg.lr), static_cast<float>(cfg.weight_decay)});
  Var X = Var::leaf(train_x);
  ProbeResult res;
  res.n_train = train_y.size();
  res.n_test = test_y.size();
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    opt.zero_grad();
    nn::backward(nn::cross_entropy(nn::linear(X, W, b), train_y));
    double g2 = 0.0;
    for (float g : W.grad().data()) g2 += static_cast<double>(g) * g;
    for (float g : b.grad().data()) g2 += static_cast<double>(g) * g;
    res.final_grad_norm = std::sqrt(g2);
    if (res.final_grad_norm < cfg.grad_tol) break;
    opt.step();
    res.epochs_run = epoch + 1;
  }
  W.node().requires_grad = false;
  b.node().requires_grad = false;
  const Tensor logits = nn::linear(Var::leaf(test_x), W, b).value();
  res.confusion.assign(K, std::vector<long>(K, 0));
  long correct = 0;
  for (std::size_t n = 0; n < test_y.size(); ++n) {
    const float* row = logits.ptr() + n * K;
    const int pred = static_cast<int>(std::max_element(row, row + K) - row);
    res.predictions.push_back(pred);
    res.confusion[static_cast<std::size_t>(test_y[n])][static_cast<std::size_t>(pred)] += 1;
    if (pred == test_y[n]) ++correct;
  }
  res.accuracy = test_y.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test_y.size());
  for (std::size_t c = 0; c < K; ++c) {
    long tot = 0;
    for (long v : res.confusion[c]) tot += v;
    res.per_class_accuracy.push_back(tot > 0 ? std::optional<double>(static_cast<double>(res.confusion[c][c]) / tot)
                                             : std::nullopt);
  }
  return res;
}

double t_two_tailed_p(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("t_two_tailed_p: df must be > 0");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(boost::math::ibeta(df / 2.0, 0.5, x), 0.0, 1.0);
}

StatTestResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: size mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("pearson: need at least 3 points");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (constant(x) || constant(y)) throw std::invalid_argument("pearson: zero variance");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw std::invalid_argument("pearson: zero variance");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  StatTestResult res;
  res.statistic = r;
  res.df = static_cast<double>(n) - 2.0;
  res.n = n;
  if (std::abs(r) >= 1.0) {
    res.p_value = 0.0;
  } else {
    res.p_value = t_two_tailed_p(r * std::sqrt(res.df / (1.0 - r * r)), res.df);
  }
  return res;
}

StatTestResult ttest_ind(std::span<const double> a, std::span<const double> b, bool welch) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("ttest_ind: need at least 2 samples per group");
  auto mean_var = [](std::span<const double> v) {
    double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / (v.size() - 1.0)};
  };
  const auto [ma, va] = mean_var(a);
  const auto [mb, vb] = mean_var(b);
  const double na = a.size(), nb = b.size();
  StatTestResult res;
  res.n = a.size() + b.size();
  double se2;
  if (welch) {
    se2 = va / na + vb / nb;
    const double num = se2 * se2;
    const double den = (va / na) * (va / na) / (na - 1) + (vb / nb) * (vb / nb) / (nb - 1);
    res.df = den > 0.0 ? num / den : na + nb - 2.0;
  } else {
    const double sp2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2);
    se2 = sp2 * (1.0 / na + 1.0 / nb);
    res.df = na + nb - 2.0;
  }
  const double diff = ma - mb;
  if (!(se2 > 0.0)) {
    if (diff == 0.0) return res;
    res.statistic = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    res.p_value = 0.0;
    return res;
  }
  res.statistic = diff / std::sqrt(se2);
  res.p_value = t_two_tailed_p(*res.statistic, res.df);
  return res;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string());
    os << text;
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::string fmt_g(double v, int digits = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_g(*v) : std::string(); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void export_embeddings(const Tensor& features, std::span<const int> labels, const std::filesystem::path& path) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw std::invalid_argument("export_embeddings: features and labels not aligned");
  }
  const std::size_t D = features.dim(1);
  std::string text;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    text += std::to_string(labels[n]);
    for (std::size_t d = 0; d < D; ++d) {
      text += ',';
      text += fmt_g(features[n * D + d], 9);
    }
    text += '\n';
  }
  write_text_atomic(path, text);
}

std::pair<Tensor, std::vector<int>> read_embeddings(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_embeddings: cannot open " + path.string());
  std::vector<int> labels;
  std::vector<float> data;
  std::size_t D = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cols = split_csv(line);
    if (labels.empty()) D = cols.size() - 1;
    if (cols.size() != D + 1) throw std::runtime_error("read_embeddings: ragged row");
    labels.push_back(std::stoi(cols[0]));
    for (std::size_t d = 0; d < D; ++d) data.push_back(std::stof(cols[d + 1]));
  }
  return {Tensor({labels.size(), D}, std::move(data)), std::move(labels)};
}

void write_accuracy_csv(const std::vector<MetricsRow>& rows, const std::string& config_hash,
                       const std::filesystem::path& path) {
  std::string text = "config_hash,strategy,seed,delta_t,crop_size,accuracy,cell\n";
  for (const auto& r : rows) {
    text += config_hash + "," + r.strategy + "," + std::to_string(r.seed) + "," + fmt_g(r.delta_t) + "," +
            std::to_string(r.crop_size) + "," + fmt_opt(r.accuracy) + "," + r.cell + "\n";
  }
  write_text_atomic(path, text);
}

std::vector<MetricsRow> read_accuracy_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_accuracy_csv: cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "config_hash,strategy,seed,delta_t,crop_size,accuracy,cell") {
    throw std::runtime_error("read_accuracy_csv: bad header");
  }
  std::vector<MetricsRow> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto c = split_csv(line);
    if (c.size() != 7) throw std::runtime_error("read_accuracy_csv: bad row");
    MetricsRow r;
    r.strategy = c[1];
    r.seed = std::stoull(c[2]);
    r.delta_t = std::stod(c[3]);
    r.crop_size = std::stoi(c[4]);
    if (!c[5].empty()) r.accuracy = std::stod(c[5]);
    r.cell = c[6];
    out.push_back(std::move(r));
  }
  return out;
}

void write_stats_csv(const std::vector<StatsRow>& rows, const std::string& config_hash,
                     const std::filesystem::path& path) {
  std::string text = "config_hash,comparison,statistic,p_value,df,n\n";
  for (const auto& r : rows) {
    text += config_hash + "," + r.comparison + "," + fmt_opt(r.statistic) + "," + fmt_opt(r.p_value) + "," +
            fmt_g(r.df) + "," + std::to_string(r.n) + "\n";
  }
  write_text_atomic(path, text);
}

}  // namespace gazessl
