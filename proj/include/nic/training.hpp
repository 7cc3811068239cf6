#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nic/models.hpp"
#include "nic/survival.hpp"

namespace nic {

struct AdamState {
  int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<double>> m, v;  // parallel to the parameter list

  void init(const std::vector<TensorPtr>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p->data.size(), 0.0);
      v.emplace_back(p->data.size(), 0.0);
    }
    step = 0;
  }
};

// bias-corrected Adam update from the gradients currently in the tensors
void adam_step(AdamState& state, const std::vector<TensorPtr>& params, double lr);

struct PlateauSchedule {
  double lr = 1e-3;
  double factor = 10.0;
  double floor_lr = 1e-5;
  int patience = 4;
  double min_delta = 1e-4;
  bool maximize = true;

  double best = std::nan("");
  int epochs_since_best = 0;
  bool stopped = false;
};

// Feeds one epoch's validation metric; divides lr by `factor` after
// `patience` epochs without improvement > min_delta, and signals stop when
// the next decay would cross the floor. Returns true while training should
// continue.
bool plateau_step(PlateauSchedule& sched, double epoch_metric);

struct AugmentPolicy {
  bool enabled = true;
  bool rotations = true;        // multiples of 90 degrees
  bool flips = true;            // horizontal / vertical
  double brightness = 0.2;      // additive jitter range
  double contrast = 0.2;        // multiplicative jitter range around 0.5
  double channel_shift = 0.1;   // per-channel additive range
};

// in-place on a normalized patch; output clamped to [0,1]
void augment_patch(double* patch, int patch_size, Rng& rng, const AugmentPolicy& policy);

struct TrainConfig {
  uint64_t seed = 0;
  int batch_per_task = 32;  // multitask: 4 tasks -> 128-sample mixed batch
  int image_batch = 16;
  double initial_lr = 1e-3;
  double floor_lr = 1e-5;
  int max_epochs = 50;
  int patience = 4;
  double min_delta = 1e-4;
  AugmentPolicy augment;
};

struct PatchDataset {
  std::string name;
  int patch_size = 64;
  int class_count = 2;
  std::vector<std::vector<double>> patches;  // normalized, P*P*3 each
  std::vector<int> labels;
  std::vector<int> train_idx, val_idx;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::vector<double> val_metrics;  // per task (multitask) or single value
};

struct History {
  std::vector<std::string> metric_names;
  std::vector<EpochRecord> epochs;
};

void write_history_csv(const History& history, const std::string& path);

// Patch-level multitask loop: one epoch is a full pass over the smallest
// task's training split; each step draws batch_per_task samples per task.
History train_multitask(const EncoderSpec& enc, const std::vector<HeadSpec>& heads,
                        ParamStore& params, const std::vector<PatchDataset>& datasets,
                        const TrainConfig& config);

double task_accuracy(const EncoderSpec& enc, const HeadSpec& head, const ParamStore& params,
                     const std::string& head_prefix, const PatchDataset& dataset,
                     const std::vector<int>& indices);

enum class Objective { mse, ce, cox };

struct ImageLevelData {
  std::vector<TensorPtr> grids;  // [H,W,C], all the same extents
  std::vector<double> targets;       // mse
  std::vector<int> labels;           // ce
  std::vector<SurvivalRecord> records;  // cox
};

History train_image_level(const WsiCnnSpec& spec, ParamStore& params,
                          const ImageLevelData& data, Objective objective,
                          const std::vector<int>& train_idx,
                          const std::vector<int>& val_idx, const TrainConfig& config);

// infer-mode predictions: regression value, risk score, or probability of
// class 1 for binary classification
std::vector<double> predict_image_level(const WsiCnnSpec& spec, const ParamStore& params,
                                        const std::vector<TensorPtr>& grids,
                                        const std::vector<int>& indices);

}  // namespace nic
