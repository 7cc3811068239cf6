#pragma once

#include <array>
#include <optional>
#include <vector>

#include "nic/compression.hpp"
#include "nic/metrics.hpp"
#include "nic/synthdata.hpp"
#include "nic/training.hpp"

namespace nic {

// thread-safe single-patch embedding closure over a frozen encoder
EmbedFn make_encoder_embed(const EncoderSpec& spec, const ParamStore& params);

std::vector<MiniWsi> gen_mini_wsi_set(uint64_t seed, int count, int grid_n,
                                      int patch_size = 64);

// compress one raster through the encoder; grid defaults to P=S=patch size
CompressedImage compress_image(const Image& image, const EncoderSpec& spec,
                               const ParamStore& params,
                               std::optional<double> tissue_filter_threshold = std::nullopt,
                               int threads = 1);

// [H,W,C] tensor padded up to the next multiple of `multiple`
TensorPtr grid_tensor(const CompressedImage& ci, int multiple = 64);

struct EncoderTrainResult {
  ParamStore params;
  History history;
  std::vector<int> task_ids;  // indices into canonical_tasks()
};

// trains encoder + heads on the selected subset of the four patch tasks;
// heads are named head0..head{n-1} in subset order
EncoderTrainResult train_encoder_subset(const EncoderSpec& spec,
                                        const std::vector<PatchDataset>& all_tasks,
                                        const std::array<bool, 4>& include,
                                        const TrainConfig& config);

struct CvOutput {
  std::vector<double> oof;      // one out-of-fold prediction per sample
  std::vector<int> fold_of;     // validation fold id per sample
  std::vector<History> histories;
};

// k-rotation cross-validation of the image-level CNN; every sample receives
// exactly one out-of-fold prediction (from the rotation where it sits in
// the validation fold)
CvOutput cross_validate_image_level(const WsiCnnSpec& spec, const ImageLevelData& data,
                                    Objective objective, int k, uint64_t seed,
                                    const TrainConfig& fold_config);

uint64_t mix_stream(uint64_t seed, uint64_t stream);

}  // namespace nic
