// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazessl/image.hpp"
#include "gazessl/nn/model.hpp"

namespace gazessl {

/// [N,3,S,S] float tensor in [0,1]. All images must be size x size.
nn::Tensor images_to_tensor(std::span<const Image> images, int size);

/// Encoder output after global average pooling, [N, encoder.out_dim()].
/// Runs without recording gradients and leaves the encoder untouched.
nn::Tensor extract_features(const nn::Encoder& encoder, std::span<const Image> images, int batch_size = 256);

struct ProbeConfig {
  double lr = 1e-2;
  double weight_decay = 0.0;
  int max_epochs = 500;
  double grad_tol = 1e-4;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double accuracy = 0.0;
  std::vector<std::optional<double>> per_class_accuracy;  // absent for classes missing from the test set
  std::vector<std::vector<long>> confusion;               // [true][predicted]
  std::vector<int> predictions;
  std::size_t n_train = 0, n_test = 0;
  int epochs_run = 0;
  double final_grad_norm = 0.0;
};

/// Multinomial logistic regression on raw features, full-batch AdamW until
/// the gradient norm drops below grad_tol or max_epochs is reached.
/// Class count is 1 + the largest label seen in either split.
ProbeResult train_probe(const nn::Tensor& train_x, std::span<const int> train_y, const nn::Tensor& test_x,
                        std::span<const int> test_y, const ProbeConfig& cfg = {});

struct StatTestResult {
  std::optional<double> statistic;
  std::optional<double> p_value;
  double df = 0.0;
  std::size_t n = 0;
};

/// Two-tailed p-value of a t statistic with `df` degrees of freedom.
double t_two_tailed_p(double t, double df);

/// Product-moment r; p from t = r sqrt((n-2)/(1-r^2)) on n-2 df. Throws
/// std::invalid_argument for n < 3, mismatched sizes or zero variance.
StatTestResult pearson(std::span<const double> x, std::span<const double> y);

/// Independent two-sample t-test, pooled variance unless `welch`. When both
/// samples are constant and equal the statistic and p-value are absent.
StatTestResult ttest_ind(std::span<const double> a, std::span<const double> b, bool welch = false);

/// One CSV row per sample: label, then the features at 9 significant digits.
void export_embeddings(const nn::Tensor& features, std::span<const int> labels, const std::filesystem::path& path);
std::pair<nn::Tensor, std::vector<int>> read_embeddings(const std::filesystem::path& path);

struct MetricsRow {
  std::string strategy;
  std::uint64_t seed = 0;
  double delta_t = 0.0;
  int crop_size = 0;
  std::optional<double> accuracy;  // absent for a failed cell
  std::string cell;
};

struct StatsRow {
  std::string comparison;
  std::optional<double> statistic;
  std::optional<double> p_value;
  double df = 0.0;
  std::size_t n = 0;
};

/// Both files carry the config hash as a leading column.
void write_accuracy_csv(const std::vector<MetricsRow>& rows, const std::string& config_hash,
                       const std::filesystem::path& path);
std::vector<MetricsRow> read_accuracy_csv(const std::filesystem::path& path);
void write_stats_csv(const std::vector<StatsRow>& rows, const std::string& config_hash,
                     const std::filesystem::path& path);

/// Replaces `path` atomically with `text`.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace gazessl
