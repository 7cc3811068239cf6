#pragma once

#include <array>
#include <string>
#include <vector>

#include "nic/ops.hpp"

namespace nic {

// Patch encoder: stacked stride-2 3x3 convolutions with batch norm and
// leaky-ReLU, flattened into one dense layer of code_size units.
struct EncoderSpec {
  int input_size = 64;
  int input_channels = 3;
  int conv_layers = 4;
  int filters = 128;
  int code_size = 128;
  double leaky_alpha = 0.2;
  double bn_eps = 1e-3;
  double bn_momentum = 0.9;

  int final_spatial() const {
    int s = input_size;
    for (int i = 0; i < conv_layers; ++i) s = (s + 1) / 2;
    return s;
  }
};

// Per-task classification head: dropout, dense 256 + leaky-ReLU, dropout,
// dense K, softmax.
struct HeadSpec {
  int classes = 2;
  int hidden = 256;
  double dropout_rate = 0.1;
  double leaky_alpha = 0.2;
};

enum class WsiOutput { classification, regression, risk };

// Image-level CNN over an embedding grid: 8 depthwise-separable conv blocks
// (stride 2 except the last two), then dense 128 + BN + leaky-ReLU, then a
// task-dependent output layer.
struct WsiCnnSpec {
  int code_size = 128;
  int filters = 128;
  std::array<int, 8> strides{2, 2, 2, 2, 2, 2, 1, 1};
  int grid_size = 64;  // expected square input extent (after padding)
  int dense_units = 128;
  double l2_coeff = 1e-5;
  double dropout_rate = 0.2;  // channel-wise
  double leaky_alpha = 0.2;
  double bn_eps = 1e-3;
  double bn_momentum = 0.9;
  WsiOutput output = WsiOutput::regression;
  int classes = 2;

  int final_spatial() const {
    int s = grid_size;
    for (int st : strides) s = (s + st - 1) / st;
    return s;
  }
};

struct TaskSpec {
  std::string name;
  int class_count = 2;
};

// the four canonical patch tasks, in fixed order
std::vector<TaskSpec> canonical_tasks();

struct TaskBatch {
  TensorPtr patches;        // [B,P,P,3]
  std::vector<int> labels;  // length B
};

void init_encoder_params(ParamStore& store, const EncoderSpec& spec, Rng& rng);
void init_head_params(ParamStore& store, const std::string& prefix, const HeadSpec& spec,
                      int code_size, Rng& rng);
void init_wsi_params(ParamStore& store, const WsiCnnSpec& spec, Rng& rng);

TensorPtr encoder_forward(Tape& tape, const EncoderSpec& spec, const ParamStore& params,
                          const TensorPtr& batch, Mode mode);

TensorPtr head_forward(Tape& tape, const HeadSpec& spec, const ParamStore& params,
                       const std::string& prefix, const TensorPtr& embeddings, Mode mode,
                       Rng& rng);

// (1/T) * sum of per-task cross-entropies; batch norm statistics are taken
// over the mixed multi-task batch
TensorPtr multitask_loss(Tape& tape, const EncoderSpec& enc, const ParamStore& params,
                         const std::vector<HeadSpec>& heads,
                         const std::vector<TaskBatch>& batches, Mode mode, Rng& rng);

// grid [N,H,W,C] -> [N,K] probabilities, or [N] scalars for regression/risk
TensorPtr wsi_forward(Tape& tape, const WsiCnnSpec& spec, const ParamStore& params,
                      const TensorPtr& grid, Mode mode, Rng& rng);

// conv and dense weight tensors subject to the L2 penalty (biases and norm
// parameters excluded)
std::vector<TensorPtr> wsi_l2_weights(const WsiCnnSpec& spec, const ParamStore& params);

// zero-pad a [H,W,C] grid (and its validity mask) on the right/bottom up to
// the next multiple of `multiple`; content preserved at offset (0,0)
TensorPtr pad_grid(const TensorPtr& grid, int multiple);
std::vector<uint8_t> pad_mask(const std::vector<uint8_t>& mask, int rows, int cols,
                              int multiple);

}  // namespace nic
