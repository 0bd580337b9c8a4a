// SPDX-License-Identifier: Apache-2.0
#include "gazessl/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gazessl::nn {

namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

Tensor& grad_of(Node& self, std::size_t k) { return self.parents[k]->grad; }
bool wants(const Node& self, std::size_t k) { return self.parents[k]->requires_grad; }

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  require(X.rank() == 4 && W.rank() == 4, "conv2d: expected x [N,C,H,W] and weight [O,C,k,k]");
  require(W.dim(1) == X.dim(1) && W.dim(2) == W.dim(3), "conv2d: channel/kernel mismatch");
  require(bias.value().rank() == 1 && bias.value().dim(0) == W.dim(0), "conv2d: bias must be [O]");
  require(stride >= 1, "conv2d: stride must be >= 1");
  const int N = static_cast<int>(X.dim(0)), C = static_cast<int>(X.dim(1));
  const int H = static_cast<int>(X.dim(2)), Wd = static_cast<int>(X.dim(3));
  const int O = static_cast<int>(W.dim(0)), K = static_cast<int>(W.dim(2));
  if (pad < 0) pad = K / 2;
  const int Ho = (H + 2 * pad - K) / stride + 1;
  const int Wo = (Wd + 2 * pad - K) / stride + 1;
  require(Ho > 0 && Wo > 0, "conv2d: input smaller than kernel");
  const int CKK = C * K * K;
  const long P = static_cast<long>(Ho) * Wo;
  const long NP = N * P;

  // im2col over the whole batch: rows (c, ky, kx), columns (n, oy, ox).
  auto col = std::make_shared<std::vector<float>>(static_cast<std::size_t>(CKK) * NP, 0.0f);
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < K; ++ky)
      for (int kx = 0; kx < K; ++kx) {
        float* row = col->data() + static_cast<std::size_t>((c * K + ky) * K + kx) * NP;
        for (int n = 0; n < N; ++n) {
          const float* src = X.ptr() + (static_cast<std::size_t>(n) * C + c) * H * Wd;
          float* dst = row + n * P;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < Wd) dst[oy * Wo + ox] = src[iy * Wd + ix];
            }
          }
        }
      }

  MatR out_mat(O, NP);
  out_mat.noalias() = CMapR(W.ptr(), O, CKK) * CMapR(col->data(), CKK, NP);
  Tensor Y({static_cast<std::size_t>(N), static_cast<std::size_t>(O), static_cast<std::size_t>(Ho),
            static_cast<std::size_t>(Wo)});
  const float* b = bias.value().ptr();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) {
      const float* src = out_mat.data() + static_cast<std::size_t>(o) * NP + n * P;
      float* dst = Y.ptr() + (static_cast<std::size_t>(n) * O + o) * P;
      for (long p = 0; p < P; ++p) dst[p] = src[p] + b[o];
    }

  return make_result(std::move(Y), {x, weight, bias}, [=](Node& self) {
    const Tensor& dY = self.grad;
    MatR dy(O, NP);
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < O; ++o) {
        const float* src = dY.ptr() + (static_cast<std::size_t>(n) * O + o) * P;
        std::copy(src, src + P, dy.data() + static_cast<std::size_t>(o) * NP + n * P);
      }
    if (wants(self, 2)) {
      Tensor& db = grad_of(self, 2);
      for (int o = 0; o < O; ++o) db[o] += dy.row(o).sum();
    }
    if (wants(self, 1)) {
      MapR(grad_of(self, 1).ptr(), O, CKK).noalias() += dy * CMapR(col->data(), CKK, NP).transpose();
    }
    if (wants(self, 0)) {
      const Tensor& Wv = self.parents[1]->value;
      MatR dcol(CKK, NP);
      dcol.noalias() = CMapR(Wv.ptr(), O, CKK).transpose() * dy;
      Tensor& dX = grad_of(self, 0);
      for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < K; ++ky)
          for (int kx = 0; kx < K; ++kx) {
            const float* row = dcol.data() + static_cast<std::size_t>((c * K + ky) * K + kx) * NP;
            for (int n = 0; n < N; ++n) {
              float* dst = dX.ptr() + (static_cast<std::size_t>(n) * C + c) * H * Wd;
              const float* src = row + n * P;
              for (int oy = 0; oy < Ho; ++oy) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= H) continue;
                for (int ox = 0; ox < Wo; ++ox) {
                  const int ix = ox * stride - pad + kx;
                  if (ix >= 0 && ix < Wd) dst[iy * Wd + ix] += src[oy * Wo + ox];
                }
              }
            }
          }
    }
  });
}

Var relu(const Var& x) {
  Tensor Y = x.value();
  for (auto& v : Y.data()) v = v > 0.0f ? v : 0.0f;
  return make_result(std::move(Y), {x}, [](Node& self) {
    const Tensor& X = self.parents[0]->value;
    Tensor& dX = grad_of(self, 0);
    for (std::size_t i = 0; i < X.numel(); ++i) {
      if (X[i] > 0.0f) dX[i] += self.grad[i];
    }
  });
}

Var max_pool2d(const Var& x, int k) {
  const Tensor& X = x.value();
  require(X.rank() == 4, "max_pool2d: expected [N,C,H,W]");
  require(k >= 1, "max_pool2d: window must be >= 1");
  const std::size_t N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  const std::size_t Ho = H / k, Wo = W / k;
  require(Ho > 0 && Wo > 0, "max_pool2d: input smaller than window");
  Tensor Y({N, C, Ho, Wo});
  auto arg = std::make_shared<std::vector<std::uint32_t>>(Y.numel());
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const float* src = X.ptr() + nc * H * W;
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::size_t best = (oy * k) * W + ox * k;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const std::size_t idx = (oy * k + dy) * W + ox * k + dx;
            if (src[idx] > src[best]) best = idx;
          }
        const std::size_t o = nc * Ho * Wo + oy * Wo + ox;
        Y[o] = src[best];
        (*arg)[o] = static_cast<std::uint32_t>(nc * H * W + best);
      }
  }
  return make_result(std::move(Y), {x}, [arg](Node& self) {
    Tensor& dX = grad_of(self, 0);
    for (std::size_t o = 0; o < arg->size(); ++o) dX[(*arg)[o]] += self.grad[o];
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& X = x.value();
  require(X.rank() == 4, "global_avg_pool: expected [N,C,H,W]");
  const std::size_t N = X.dim(0), C = X.dim(1), HW = X.dim(2) * X.dim(3);
  Tensor Y({N, C});
  for (std::size_t i = 0; i < N * C; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < HW; ++p) s += X[i * HW + p];
    Y[i] = static_cast<float>(s / HW);
  }
  return make_result(std::move(Y), {x}, [HW](Node& self) {
    Tensor& dX = grad_of(self, 0);
    const float inv = 1.0f / static_cast<float>(HW);
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      const float g = self.grad[i] * inv;
      for (std::size_t p = 0; p < HW; ++p) dX[i * HW + p] += g;
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  require(X.rank() == 2 && W.rank() == 2 && X.dim(1) == W.dim(1), "linear: shape mismatch");
  require(bias.value().rank() == 1 && bias.value().dim(0) == W.dim(0), "linear: bias must be [out]");
  const auto N = static_cast<Eigen::Index>(X.dim(0));
  const auto In = static_cast<Eigen::Index>(X.dim(1));
  const auto Out = static_cast<Eigen::Index>(W.dim(0));
  Tensor Y({X.dim(0), W.dim(0)});
  MapR y(Y.ptr(), N, Out);
  y.noalias() = CMapR(X.ptr(), N, In) * CMapR(W.ptr(), Out, In).transpose();
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index o = 0; o < Out; ++o) y(n, o) += bias.value()[o];
  return make_result(std::move(Y), {x, weight, bias}, [N, In, Out](Node& self) {
    CMapR dy(self.grad.ptr(), N, Out);
    if (wants(self, 0)) {
      MapR(grad_of(self, 0).ptr(), N, In).noalias() += dy * CMapR(self.parents[1]->value.ptr(), Out, In);
    }
    if (wants(self, 1)) {
      MapR(grad_of(self, 1).ptr(), Out, In).noalias() += dy.transpose() * CMapR(self.parents[0]->value.ptr(), N, In);
    }
    if (wants(self, 2)) {
      Tensor& db = grad_of(self, 2);
      for (Eigen::Index o = 0; o < Out; ++o) db[o] += dy.col(o).sum();
    }
  });
}

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, float eps) {
  const Tensor& X = x.value();
  require(X.rank() >= 2, "group_norm: expected [N,C,...]");
  const std::size_t N = X.dim(0), C = X.dim(1);
  require(groups >= 1 && C % groups == 0, "group_norm: channels must divide into groups");
  require(gamma.value().numel() == C && beta.value().numel() == C, "group_norm: gamma/beta must be [C]");
  const std::size_t S = X.numel() / (N * C);
  const std::size_t G = groups, CG = C / G, M = CG * S;
  auto xhat = std::make_shared<Tensor>(X.shape());
  auto rstd = std::make_shared<std::vector<float>>(N * G);
  Tensor Y(X.shape());
  const float* gm = gamma.value().ptr();
  const float* bt = beta.value().ptr();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t g = 0; g < G; ++g) {
      const std::size_t base = (n * C + g * CG) * S;
      const float* xs = X.ptr() + base;
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < M; ++i) {
        s1 += xs[i];
        s2 += static_cast<double>(xs[i]) * xs[i];
      }
      const double mean = s1 / M;
      const double var = std::max(0.0, s2 / M - mean * mean);
      const float r = static_cast<float>(1.0 / std::sqrt(var + eps));
      const float mu = static_cast<float>(mean);
      (*rstd)[n * G + g] = r;
      float* hs = xhat->ptr() + base;
      float* ys = Y.ptr() + base;
      for (std::size_t cc = 0; cc < CG; ++cc) {
        const std::size_t c = g * CG + cc;
        const float a = gm[c], b = bt[c];
        for (std::size_t p = cc * S; p < (cc + 1) * S; ++p) {
          const float h = (xs[p] - mu) * r;
          hs[p] = h;
          ys[p] = h * a + b;
        }
      }
    }
  return make_result(std::move(Y), {x, gamma, beta}, [=](Node& self) {
    const float* dY = self.grad.ptr();
    const float* gmv = self.parents[1]->value.ptr();
    const bool want_x = wants(self, 0), want_g = wants(self, 1), want_b = wants(self, 2);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t g = 0; g < G; ++g) {
        const std::size_t base = (n * C + g * CG) * S;
        const float* dy = dY + base;
        const float* hs = xhat->ptr() + base;
        double sum_dh = 0.0, sum_dh_h = 0.0;
        for (std::size_t cc = 0; cc < CG; ++cc) {
          const std::size_t c = g * CG + cc;
          float sdy = 0.0f, sdyh = 0.0f;
          for (std::size_t p = cc * S; p < (cc + 1) * S; ++p) {
            sdy += dy[p];
            sdyh += dy[p] * hs[p];
          }
          if (want_g) grad_of(self, 1)[c] += sdyh;
          if (want_b) grad_of(self, 2)[c] += sdy;
          sum_dh += static_cast<double>(sdy) * gmv[c];
          sum_dh_h += static_cast<double>(sdyh) * gmv[c];
        }
        if (!want_x) continue;
        float* dx = grad_of(self, 0).ptr() + base;
        const float r = (*rstd)[n * G + g];
        const float k1 = static_cast<float>(sum_dh / M), k2 = static_cast<float>(sum_dh_h / M);
        for (std::size_t cc = 0; cc < CG; ++cc) {
          const float gc = gmv[g * CG + cc];
          for (std::size_t p = cc * S; p < (cc + 1) * S; ++p) dx[p] += r * (dy[p] * gc - k1 - hs[p] * k2);
        }
      }
  });
}

Var l2_normalize(const Var& x) {
  const Tensor& X = x.value();
  require(X.rank() == 2, "l2_normalize: expected [N,D]");
  const std::size_t N = X.dim(0), D = X.dim(1);
  auto norms = std::make_shared<std::vector<float>>(N);
  Tensor Y(X.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double s = 0.0;
    for (std::size_t d = 0; d < D; ++d) s += static_cast<double>(X[n * D + d]) * X[n * D + d];
    const double nrm = std::sqrt(s);
    if (!(nrm > 1e-12)) throw std::domain_error("l2_normalize: zero-norm row " + std::to_string(n));
    (*norms)[n] = static_cast<float>(nrm);
    for (std::size_t d = 0; d < D; ++d) Y[n * D + d] = static_cast<float>(X[n * D + d] / nrm);
  }
  return make_result(std::move(Y), {x}, [N, D, norms](Node& self) {
    Tensor& dX = grad_of(self, 0);
    for (std::size_t n = 0; n < N; ++n) {
      double dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) dot += static_cast<double>(self.value[n * D + d]) * self.grad[n * D + d];
      for (std::size_t d = 0; d < D; ++d) {
        dX[n * D + d] += static_cast<float>((self.grad[n * D + d] - self.value[n * D + d] * dot) / (*norms)[n]);
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(same_shape(a.value(), b.value()), "add: shape mismatch");
  Tensor Y = a.value();
  for (std::size_t i = 0; i < Y.numel(); ++i) Y[i] += b.value()[i];
  return make_result(std::move(Y), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants(self, k)) continue;
      Tensor& g = grad_of(self, k);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require(same_shape(a.value(), b.value()), "mul: shape mismatch");
  Tensor Y = a.value();
  for (std::size_t i = 0; i < Y.numel(); ++i) Y[i] *= b.value()[i];
  return make_result(std::move(Y), {a, b}, [](Node& self) {
    const Tensor& A = self.parents[0]->value;
    const Tensor& B = self.parents[1]->value;
    if (wants(self, 0)) {
      for (std::size_t i = 0; i < A.numel(); ++i) grad_of(self, 0)[i] += self.grad[i] * B[i];
    }
    if (wants(self, 1)) {
      for (std::size_t i = 0; i < B.numel(); ++i) grad_of(self, 1)[i] += self.grad[i] * A[i];
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (float v : x.value().data()) s += v;
  return make_result(Tensor({1}, {static_cast<float>(s)}), {x}, [](Node& self) {
    Tensor& g = grad_of(self, 0);
    for (auto& v : g.data()) v += self.grad[0];
  });
}

Var weighted_sum(const Var& x, const Tensor& w) {
  require(same_shape(x.value(), w), "weighted_sum: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.numel(); ++i) s += static_cast<double>(x.value()[i]) * w[i];
  return make_result(Tensor({1}, {static_cast<float>(s)}), {x}, [w](Node& self) {
    Tensor& g = grad_of(self, 0);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0] * w[i];
  });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const Tensor& L = logits.value();
  require(L.rank() == 2 && L.dim(0) == labels.size(), "cross_entropy: expected [N,K] logits and N labels");
  const std::size_t N = L.dim(0), K = L.dim(1);
  auto probs = std::make_shared<Tensor>(L.shape());
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    require(y >= 0 && static_cast<std::size_t>(y) < K, "cross_entropy: label out of range");
    float mx = -std::numeric_limits<float>::infinity();
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, L[n * K + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(L[n * K + k]) - mx);
    for (std::size_t k = 0; k < K; ++k) {
      (*probs)[n * K + k] = static_cast<float>(std::exp(static_cast<double>(L[n * K + k]) - mx) / z);
    }
    loss += std::log(z) + mx - L[n * K + y];
  }
  return make_result(Tensor({1}, {static_cast<float>(loss / N)}), {logits}, [=](Node& self) {
    Tensor& g = grad_of(self, 0);
    const float s = self.grad[0] / static_cast<float>(N);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t k = 0; k < K; ++k) {
        const float t = static_cast<int>(k) == (*lab)[n] ? 1.0f : 0.0f;
        g[n * K + k] += s * ((*probs)[n * K + k] - t);
      }
  });
}

}  // namespace gazessl::nn
