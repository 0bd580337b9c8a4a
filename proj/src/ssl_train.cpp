// SPDX-License-Identifier: Apache-2.0
#include "gazessl/ssl_train.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gazessl/nn/adamw.hpp"
#include "gazessl/nn/ops.hpp"

namespace gazessl {

using nn::Tensor;
using nn::Var;

std::string to_string(SslMethod m) { return m == SslMethod::SimClrTT ? "SimCLR-TT" : "BYOL-TT"; }

SslMethod ssl_method_from_string(const std::string& s) {
  if (s == "SimCLR-TT" || s == "simclr") return SslMethod::SimClrTT;
  if (s == "BYOL-TT" || s == "byol") return SslMethod::ByolTT;
  throw std::invalid_argument("unknown SSL method: " + s);
}

void SslConfig::validate(double fps) const {
  if (!(temperature > 0.0)) throw std::invalid_argument("SslConfig: temperature must be > 0");
  if (!(fps > 0.0)) throw std::invalid_argument("SslConfig: fps must be > 0");
  if (delta_t_s * fps < 1.0 - 1e-9) throw std::invalid_argument("SslConfig: delta_t_s must be >= 1/fps");
  if (batch_size < 2) throw std::invalid_argument("SslConfig: batch_size must be >= 2");
  if (epochs < 1) throw std::invalid_argument("SslConfig: epochs must be >= 1");
  if (!(lr > 0.0) || weight_decay < 0.0) throw std::invalid_argument("SslConfig: bad lr/weight_decay");
  if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) throw std::invalid_argument("SslConfig: ema_momentum outside [0,1]");
}

int SslConfig::max_offset(double fps) const { return std::max(1, static_cast<int>(std::lround(delta_t_s * fps))); }

PairSampler::PairSampler(std::span<const StreamManifest> manifests, double delta_t_s, bool fixed_offset)
    : fixed_(fixed_offset) {
  if (manifests.empty()) throw std::invalid_argument("PairSampler: no manifests");
  const double fps = manifests.front().intr.fps;
  if (delta_t_s * fps < 1.0 - 1e-9) throw std::invalid_argument("PairSampler: delta_t_s must be >= 1/fps");
  max_offset_ = std::max(1, static_cast<int>(std::lround(delta_t_s * fps)));
  crop_ = manifests.front().crop_size_px;
  for (std::size_t mi = 0; mi < manifests.size(); ++mi) {
    const auto& m = manifests[mi];
    if (m.intr.fps != fps) throw std::invalid_argument("PairSampler: manifests disagree on fps");
    if (m.crop_size_px != crop_) throw std::invalid_argument("PairSampler: manifests disagree on crop size");
    if (m.size() < 2) throw std::invalid_argument("PairSampler: manifest " + m.session_id + " has < 2 frames");
    if (m.crops.size() != m.size()) throw std::invalid_argument("PairSampler: crops not loaded for " + m.session_id);
    std::vector<float> px;
    px.reserve(m.size() * 3 * crop_ * crop_);
    for (const auto& img : m.crops) {
      if (img.width() != crop_ || img.height() != crop_) throw std::invalid_argument("PairSampler: crop size mismatch");
      append_chw(img, px);
    }
    pixels_.push_back(std::move(px));
    total_frames_ += m.size();
    for (auto [b, e] : contiguous_runs(m)) {
      for (std::size_t r = b; r + 1 < e; ++r) {
        if (fixed_ && r + static_cast<std::size_t>(max_offset_) >= e) continue;
        positions_.push_back({static_cast<std::uint32_t>(mi), static_cast<std::uint32_t>(r),
                              static_cast<std::uint32_t>(e)});
      }
    }
  }
  if (positions_.empty()) throw std::invalid_argument("PairSampler: no valid pair positions");
}

PairBatch PairSampler::sample(int batch_size, Rng& rng) const {
  if (batch_size < 1) throw std::invalid_argument("PairSampler: batch_size must be >= 1");
  const std::size_t N = static_cast<std::size_t>(batch_size);
  const std::size_t S = static_cast<std::size_t>(crop_);
  const std::size_t stride = 3 * S * S;
  PairBatch b;
  b.anchors = Tensor({N, 3, S, S});
  b.positives = Tensor({N, 3, S, S});
  for (std::size_t i = 0; i < N; ++i) {
    const Position& p = positions_[rng.below(positions_.size())];
    const int room = static_cast<int>(p.run_end - p.record - 1);
    int off = fixed_ ? max_offset_ : 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_offset_)));
    off = std::min(off, room);
    if (off < 1 || off > max_offset_) throw std::logic_error("PairSampler: offset out of range");
    const float* src = pixels_[p.manifest].data();
    std::copy_n(src + p.record * stride, stride, b.anchors.ptr() + i * stride);
    std::copy_n(src + (p.record + off) * stride, stride, b.positives.ptr() + i * stride);
    b.offsets_frames.push_back(off);
    b.manifest_index.push_back(p.manifest);
    b.anchor_record.push_back(p.record);
  }
  return b;
}

PairBatch sample_pairs(std::span<const StreamManifest> manifests, double delta_t_s, int batch_size, Rng& rng,
                       bool fixed_offset) {
  return PairSampler(manifests, delta_t_s, fixed_offset).sample(batch_size, rng);
}

Var simclr_tt_loss(const Var& z, double temperature) {
  const Tensor& Z = z.value();
  if (Z.rank() != 2) throw std::invalid_argument("simclr_tt_loss: expected [2N,D]");
  if (!(temperature > 0.0)) throw std::invalid_argument("simclr_tt_loss: temperature must be > 0");
  const auto B = static_cast<Eigen::Index>(Z.dim(0));
  const auto D = static_cast<Eigen::Index>(Z.dim(1));
  if (B < 4 || B % 2 != 0) throw std::invalid_argument("simclr_tt_loss: need an even batch of >= 4 rows");
  using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  MatD zd = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(Z.ptr(), B, D)
                .cast<double>();
  for (Eigen::Index i = 0; i < B; ++i) {
    if (std::abs(zd.row(i).norm() - 1.0) > 1e-4) {
      throw std::domain_error("simclr_tt_loss: row " + std::to_string(i) + " is not unit-norm");
    }
  }
  const Eigen::Index N = B / 2;
  MatD s = (zd * zd.transpose()) / temperature;
  auto G = std::make_shared<MatD>(MatD::Zero(B, B));
  double loss = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const Eigen::Index pos = (i + N) % B;
    double mx = -INFINITY;
    for (Eigen::Index k = 0; k < B; ++k) {
      if (k != i) mx = std::max(mx, s(i, k));
    }
    double den = 0.0;
    for (Eigen::Index k = 0; k < B; ++k) {
      if (k != i) den += std::exp(s(i, k) - mx);
    }
    loss += std::log(den) + mx - s(i, pos);
    for (Eigen::Index k = 0; k < B; ++k) {
      if (k != i) (*G)(i, k) = std::exp(s(i, k) - mx) / den;
    }
    (*G)(i, pos) -= 1.0;
  }
  *G /= static_cast<double>(B);
  return nn::make_result(Tensor({1}, {static_cast<float>(loss / B)}), {z},
                         [G, zd = std::move(zd), temperature, B, D](nn::Node& self) {
                           const double g = self.grad[0] / temperature;
                           MatD dz = ((*G) + G->transpose()) * zd * g;
                           Tensor& out = self.parents[0]->grad;
                           for (Eigen::Index i = 0; i < B; ++i)
                             for (Eigen::Index d = 0; d < D; ++d) out[i * D + d] += static_cast<float>(dz(i, d));
                         });
}

Var byol_tt_loss(const Var& q, const Var& z_target) {
  const Tensor& Q = q.value();
  const Tensor& T = z_target.value();
  if (Q.rank() != 2 || Q.shape() != T.shape()) throw std::invalid_argument("byol_tt_loss: shape mismatch");
  const std::size_t N = Q.dim(0), D = Q.dim(1);
  if (N == 0) throw std::invalid_argument("byol_tt_loss: empty batch");
  auto nq = std::make_shared<std::vector<double>>(N);
  auto nt = std::make_shared<std::vector<double>>(N);
  auto cs = std::make_shared<std::vector<double>>(N);
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    double qq = 0, tt = 0, qt = 0;
    for (std::size_t d = 0; d < D; ++d) {
      const double a = Q[n * D + d], b = T[n * D + d];
      qq += a * a;
      tt += b * b;
      qt += a * b;
    }
    if (!(qq > 0.0) || !(tt > 0.0)) throw std::domain_error("byol_tt_loss: zero-norm row " + std::to_string(n));
    (*nq)[n] = std::sqrt(qq);
    (*nt)[n] = std::sqrt(tt);
    (*cs)[n] = qt / ((*nq)[n] * (*nt)[n]);
    loss += 2.0 - 2.0 * (*cs)[n];
  }
  return nn::make_result(Tensor({1}, {static_cast<float>(loss / N)}), {q, z_target},
                         [N, D, nq, nt, cs](nn::Node& self) {
                           const Tensor& Qv = self.parents[0]->value;
                           const Tensor& Tv = self.parents[1]->value;
                           const double s = -2.0 * self.grad[0] / static_cast<double>(N);
                           for (std::size_t n = 0; n < N; ++n) {
                             const double a = (*nq)[n], b = (*nt)[n], c = (*cs)[n];
                             for (std::size_t d = 0; d < D; ++d) {
                               const double qd = Qv[n * D + d], td = Tv[n * D + d];
                               if (self.parents[0]->requires_grad) {
                                 self.parents[0]->grad[n * D + d] +=
                                     static_cast<float>(s * (td / (a * b) - c * qd / (a * a)));
                               }
                               if (self.parents[1]->requires_grad) {
                                 self.parents[1]->grad[n * D + d] +=
                                     static_cast<float>(s * (qd / (a * b) - c * td / (b * b)));
                               }
                             }
                           }
                         });
}

Var concat_rows(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& Bv = b.value();
  if (A.rank() < 1 || A.rank() != Bv.rank() ||
      !std::equal(A.shape().begin() + 1, A.shape().end(), Bv.shape().begin() + 1)) {
    throw std::invalid_argument("concat_rows: shape mismatch");
  }
  nn::Shape sh = A.shape();
  sh[0] += Bv.dim(0);
  std::vector<float> data(A.data().begin(), A.data().end());
  data.insert(data.end(), Bv.data().begin(), Bv.data().end());
  const std::size_t na = A.numel();
  return nn::make_result(Tensor(std::move(sh), std::move(data)), {a, b}, [na](nn::Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!self.parents[k]->requires_grad) continue;
      Tensor& g = self.parents[k]->grad;
      const std::size_t off = k == 0 ? 0 : na;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[off + i];
    }
  });
}

namespace {

bool params_finite(const nn::ParamList& ps) {
  return std::all_of(ps.begin(), ps.end(), [](const nn::NamedParam& p) { return p.var.value().all_finite(); });
}

}  // namespace

TrainResult train(std::span<const StreamManifest> manifests, const SslConfig& cfg, const EpochCallback& on_epoch) {
  if (manifests.empty()) throw std::invalid_argument("train: no manifests");
  cfg.validate(manifests.front().intr.fps);
  const bool byol = cfg.method == SslMethod::ByolTT;
  TrainResult res{nn::SslModel(cfg.model, byol, cfg.seed), {}};
  nn::SslModel& model = res.model;
  PairSampler sampler(manifests, cfg.delta_t_s, cfg.fixed_offset);

  nn::ParamList online = model.online_params();
  nn::ParamList target = model.target_params();
  nn::ParamList ema_source = model.encoder.params("encoder");
  for (auto& p : model.projector.params("projector")) ema_source.push_back(p);
  nn::AdamW opt(online, {static_cast<float>(cfg.lr), static_cast<float>(cfg.weight_decay)});
  Rng rng(mix_seed(cfg.seed, 0x5A1B));
  const std::size_t batches =
      (sampler.total_frames() + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t bi = 0; bi < batches; ++bi) {
      PairBatch pb = sampler.sample(cfg.batch_size, rng);
      Var xa = Var::leaf(std::move(pb.anchors));
      Var xp = Var::leaf(std::move(pb.positives));
      Var loss;
      if (!byol) {
        Var h = model.encoder.forward(concat_rows(xa, xp));
        loss = simclr_tt_loss(nn::l2_normalize(model.projector.forward(h)), cfg.temperature);
      } else {
        auto online_q = [&](const Var& x) { return model.predictor.forward(model.projector.forward(model.encoder.forward(x))); };
        auto target_z = [&](const Var& x) { return nn::detach(model.target_projector.forward(model.target_encoder.forward(x))); };
        loss = byol_tt_loss(online_q(xa), target_z(xp));
        if (cfg.symmetric_byol) {
          Var other = byol_tt_loss(online_q(xp), target_z(xa));
          loss = nn::weighted_sum(concat_rows(loss, other), Tensor({2}, {0.5f, 0.5f}));
        }
      }
      const float lv = loss.value()[0];
      if (!std::isfinite(lv)) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(bi));
      }
      total += lv;
      opt.zero_grad();
      nn::backward(loss);
      opt.step();
      if (byol) ema_update(ema_source, target, static_cast<float>(cfg.ema_momentum));
    }
    if (!params_finite(online) || !params_finite(target)) {
      throw std::runtime_error("train: non-finite parameter after epoch " + std::to_string(epoch));
    }
    const double mean = total / static_cast<double>(batches);
    res.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return res;
}

void write_loss_curve(const std::vector<double>& epoch_loss, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw std::runtime_error("write_loss_curve: cannot open " + tmp.string());
    os << "epoch,mean_loss\n";
    char buf[64];
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e, epoch_loss[e]);
      os << buf;
    }
    if (!os) throw std::runtime_error("write_loss_curve: write failed");
  }
  std::filesystem::rename(tmp, path);
}

std::vector<double> read_loss_curve(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_loss_curve: cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "epoch,mean_loss") throw std::runtime_error("read_loss_curve: bad header");
  std::vector<double> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("read_loss_curve: bad row");
    out.push_back(std::stod(line.substr(comma + 1)));
  }
  return out;
}

}  // namespace gazessl
