#include "nic/pipeline.hpp"

#include <stdexcept>

namespace nic {

uint64_t mix_stream(uint64_t seed, uint64_t stream) {
  uint64_t h = seed ^ (stream * 0x9e3779b97f4a7c15ULL);
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

EmbedFn make_encoder_embed(const EncoderSpec& spec, const ParamStore& params) {
  const int p = spec.input_size;
  const int c = spec.code_size;
  return [&spec, &params, p, c](const double* patch, double* embedding) {
    auto in = make_tensor({1, p, p, 3});
    std::copy(patch, patch + static_cast<int64_t>(p) * p * 3, in->data.begin());
    Tape tape;
    auto code = encoder_forward(tape, spec, params, in, Mode::infer);
    std::copy(code->data.begin(), code->data.begin() + c, embedding);
  };
}

std::vector<MiniWsi> gen_mini_wsi_set(uint64_t seed, int count, int grid_n,
                                      int patch_size) {
  std::vector<MiniWsi> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(gen_mini_wsi(mix_stream(seed, static_cast<uint64_t>(i) + 1), grid_n,
                               patch_size));
  return out;
}

CompressedImage compress_image(const Image& image, const EncoderSpec& spec,
                               const ParamStore& params,
                               std::optional<double> tissue_filter_threshold,
                               int threads) {
  MemoryRowSource source(image);
  const PatchGrid grid =
      plan_grid(image.width, image.height, spec.input_size, spec.input_size);
  return compress(source, make_encoder_embed(spec, params), spec.code_size, grid,
                  tissue_filter_threshold, threads);
}

TensorPtr grid_tensor(const CompressedImage& ci, int multiple) {
  auto t = make_tensor({ci.rows, ci.cols, ci.code_size});
  t->data = ci.embeddings;
  return pad_grid(t, multiple);
}

EncoderTrainResult train_encoder_subset(const EncoderSpec& spec,
                                        const std::vector<PatchDataset>& all_tasks,
                                        const std::array<bool, 4>& include,
                                        const TrainConfig& config) {
  if (all_tasks.size() != 4)
    throw std::invalid_argument("train_encoder_subset: expected the four canonical tasks");
  EncoderTrainResult result;
  std::vector<PatchDataset> subset;
  std::vector<HeadSpec> heads;
  for (int t = 0; t < 4; ++t) {
    if (!include[static_cast<size_t>(t)]) continue;
    subset.push_back(all_tasks[static_cast<size_t>(t)]);
    HeadSpec head;
    head.classes = all_tasks[static_cast<size_t>(t)].class_count;
    heads.push_back(head);
    result.task_ids.push_back(t);
  }
  if (subset.empty())
    throw std::invalid_argument("train_encoder_subset: at least one task required");

  Rng init_rng(mix_stream(config.seed, 0xe5c0de));
  init_encoder_params(result.params, spec, init_rng);
  for (size_t h = 0; h < heads.size(); ++h)
    init_head_params(result.params, "head" + std::to_string(h), heads[h], spec.code_size,
                     init_rng);
  result.history = train_multitask(spec, heads, result.params, subset, config);
  return result;
}

CvOutput cross_validate_image_level(const WsiCnnSpec& spec, const ImageLevelData& data,
                                    Objective objective, int k, uint64_t seed,
                                    const TrainConfig& fold_config) {
  const int n = static_cast<int>(data.grids.size());
  const FoldPlan plan = kfold(n, k, FoldPattern::train_val, mix_stream(seed, 0xf01d));

  CvOutput out;
  out.oof.assign(static_cast<size_t>(n), 0.0);
  out.fold_of.assign(static_cast<size_t>(n), -1);
  for (int r = 0; r < k; ++r) {
    const auto train_idx = plan.train_indices(r);
    const auto val_idx = plan.val_indices(r);

    ParamStore params;
    Rng init_rng(mix_stream(seed, 0x1000 + static_cast<uint64_t>(r)));
    init_wsi_params(params, spec, init_rng);

    TrainConfig cfg = fold_config;
    cfg.seed = mix_stream(seed, 0x2000 + static_cast<uint64_t>(r));
    out.histories.push_back(
        train_image_level(spec, params, data, objective, train_idx, val_idx, cfg));

    const auto preds = predict_image_level(spec, params, data.grids, val_idx);
    for (size_t i = 0; i < val_idx.size(); ++i) {
      out.oof[static_cast<size_t>(val_idx[i])] = preds[i];
      out.fold_of[static_cast<size_t>(val_idx[i])] = r;
    }
  }
  return out;
}

}  // namespace nic
