#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nic/rng.hpp"

namespace nic {

// Pearson correlation of average ranks (ties get the mean of their ranks)
double spearman(const std::vector<double>& x, const std::vector<double>& y);

std::vector<double> average_ranks(const std::vector<double>& v);

enum class CiMethod { fisher_z, bootstrap };

struct Interval {
  double lo, hi;
};

// Fisher z interval with standard error 1/sqrt(N-3), or a seeded percentile
// bootstrap (10000 resamples)
Interval spearman_ci(const std::vector<double>& x, const std::vector<double>& y,
                     double level = 0.95, CiMethod method = CiMethod::fisher_z,
                     uint64_t seed = 0);

// Mann-Whitney form: probability a random positive outranks a random
// negative, ties counted 1/2
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

enum class FoldPattern { train_val, train_val_test };

struct FoldPlan {
  int k = 4;
  FoldPattern pattern = FoldPattern::train_val;
  std::vector<int> assignment;  // fold id per sample

  // role helpers for rotation r
  std::vector<int> train_indices(int rotation) const;
  std::vector<int> val_indices(int rotation) const;
  std::vector<int> test_indices(int rotation) const;  // train_val_test only
};

FoldPlan kfold(int sample_count, int k, FoldPattern pattern, uint64_t seed);

// arithmetic mean across models per sample
std::vector<double> ensemble_mean(const std::vector<std::vector<double>>& predictions);

struct AblationRow {
  std::array<bool, 4> included{};  // lymph, mitosis, prostate, colorectal
  double correlation = 0.0;
};

// per-task Spearman between the 0/1 inclusion flag and the achieved
// correlation column
std::array<double, 4> task_inclusion_correlation(const std::vector<AblationRow>& rows);

std::vector<AblationRow> read_ablation_csv(const std::string& path);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

struct PredictionRow {
  std::string sample_id;
  int fold = 0;
  int model = 0;
  double prediction = 0.0;
  double label = 0.0;
};
void write_predictions_csv(const std::vector<PredictionRow>& rows, const std::string& path);
std::vector<PredictionRow> read_predictions_csv(const std::string& path);

}  // namespace nic
