#include "nic/models.hpp"

#include <cmath>
#include <stdexcept>

namespace nic {

namespace {

TensorPtr normal_init(std::vector<int> shape, double fan_in, Rng& rng) {
  auto t = make_param(std::move(shape));
  const double stddev = std::sqrt(2.0 / fan_in);
  for (auto& v : t->data) v = stddev * rng.normal();
  return t;
}

void add_bn_params(ParamStore& store, const std::string& prefix, int channels) {
  store.add(prefix + ".gamma", make_param({channels}, 1.0));
  store.add(prefix + ".beta", make_param({channels}));
  store.add(prefix + ".running_mean", make_tensor({channels}));
  store.add(prefix + ".running_var", make_tensor({channels}, 1.0));
}

TensorPtr bn(Tape& tape, const ParamStore& p, const std::string& prefix, const TensorPtr& x,
             Mode mode, double momentum, double eps) {
  return batch_norm(tape, x, p.get(prefix + ".gamma"), p.get(prefix + ".beta"),
                    p.get(prefix + ".running_mean"), p.get(prefix + ".running_var"), mode,
                    momentum, eps);
}

}  // namespace

std::vector<TaskSpec> canonical_tasks() {
  return {{"lymph", 2}, {"mitosis", 2}, {"prostate", 2}, {"colorectal", 9}};
}

void init_encoder_params(ParamStore& store, const EncoderSpec& spec, Rng& rng) {
  int cin = spec.input_channels;
  for (int l = 0; l < spec.conv_layers; ++l) {
    const std::string name = "enc.conv" + std::to_string(l);
    store.add(name + ".kernel", normal_init({3, 3, cin, spec.filters}, 9.0 * cin, rng));
    store.add(name + ".bias", make_param({spec.filters}));
    add_bn_params(store, "enc.bn" + std::to_string(l), spec.filters);
    cin = spec.filters;
  }
  const int flat = spec.final_spatial() * spec.final_spatial() * spec.filters;
  store.add("enc.fc.weight", normal_init({flat, spec.code_size}, flat, rng));
  store.add("enc.fc.bias", make_param({spec.code_size}));
}

void init_head_params(ParamStore& store, const std::string& prefix, const HeadSpec& spec,
                      int code_size, Rng& rng) {
  store.add(prefix + ".fc1.weight", normal_init({code_size, spec.hidden}, code_size, rng));
  store.add(prefix + ".fc1.bias", make_param({spec.hidden}));
  store.add(prefix + ".fc2.weight", normal_init({spec.hidden, spec.classes}, spec.hidden, rng));
  store.add(prefix + ".fc2.bias", make_param({spec.classes}));
}

void init_wsi_params(ParamStore& store, const WsiCnnSpec& spec, Rng& rng) {
  int cin = spec.code_size;
  for (int l = 0; l < 8; ++l) {
    const std::string name = "wsi.conv" + std::to_string(l);
    store.add(name + ".depth", normal_init({3, 3, cin}, 9.0, rng));
    store.add(name + ".point", normal_init({1, 1, cin, spec.filters}, cin, rng));
    store.add(name + ".bias", make_param({spec.filters}));
    add_bn_params(store, "wsi.bn" + std::to_string(l), spec.filters);
    cin = spec.filters;
  }
  const int flat = spec.final_spatial() * spec.final_spatial() * spec.filters;
  store.add("wsi.fc.weight", normal_init({flat, spec.dense_units}, flat, rng));
  store.add("wsi.fc.bias", make_param({spec.dense_units}));
  add_bn_params(store, "wsi.bnfc", spec.dense_units);
  const int out_units = spec.output == WsiOutput::classification ? spec.classes : 1;
  store.add("wsi.out.weight", normal_init({spec.dense_units, out_units}, spec.dense_units, rng));
  store.add("wsi.out.bias", make_param({out_units}));
}

TensorPtr encoder_forward(Tape& tape, const EncoderSpec& spec, const ParamStore& params,
                          const TensorPtr& batch, Mode mode) {
  if (batch->shape.size() != 4 || batch->shape[1] != spec.input_size ||
      batch->shape[2] != spec.input_size || batch->shape[3] != spec.input_channels)
    throw std::invalid_argument("encoder_forward: wrong input shape");
  TensorPtr x = batch;
  for (int l = 0; l < spec.conv_layers; ++l) {
    const std::string name = "enc.conv" + std::to_string(l);
    x = conv2d(tape, x, params.get(name + ".kernel"), params.get(name + ".bias"), 2,
               Padding::same);
    x = bn(tape, params, "enc.bn" + std::to_string(l), x, mode, spec.bn_momentum, spec.bn_eps);
    x = leaky_relu(tape, x, spec.leaky_alpha);
  }
  const int flat = spec.final_spatial() * spec.final_spatial() * spec.filters;
  x = reshape(tape, x, {batch->shape[0], flat});
  return dense(tape, x, params.get("enc.fc.weight"), params.get("enc.fc.bias"));
}

TensorPtr head_forward(Tape& tape, const HeadSpec& spec, const ParamStore& params,
                       const std::string& prefix, const TensorPtr& embeddings, Mode mode,
                       Rng& rng) {
  TensorPtr x = dropout(tape, embeddings, spec.dropout_rate, mode,
                        DropoutGranularity::element, rng);
  x = dense(tape, x, params.get(prefix + ".fc1.weight"), params.get(prefix + ".fc1.bias"));
  x = leaky_relu(tape, x, spec.leaky_alpha);
  x = dropout(tape, x, spec.dropout_rate, mode, DropoutGranularity::element, rng);
  x = dense(tape, x, params.get(prefix + ".fc2.weight"), params.get(prefix + ".fc2.bias"));
  return softmax(tape, x);
}

TensorPtr multitask_loss(Tape& tape, const EncoderSpec& enc, const ParamStore& params,
                         const std::vector<HeadSpec>& heads,
                         const std::vector<TaskBatch>& batches, Mode mode, Rng& rng) {
  if (heads.size() != batches.size() || heads.empty())
    throw std::invalid_argument("multitask_loss: task/head count mismatch");
  std::vector<TensorPtr> patch_parts;
  for (const auto& b : batches) patch_parts.push_back(b.patches);
  TensorPtr mixed = concat_rows(tape, patch_parts);
  TensorPtr codes = encoder_forward(tape, enc, params, mixed, mode);

  std::vector<TensorPtr> losses;
  int row = 0;
  for (size_t t = 0; t < heads.size(); ++t) {
    const int bsz = batches[t].patches->shape[0];
    TensorPtr emb = slice_rows(tape, codes, row, bsz);
    row += bsz;
    TensorPtr probs =
        head_forward(tape, heads[t], params, "head" + std::to_string(t), emb, mode, rng);
    losses.push_back(cross_entropy(tape, probs, batches[t].labels));
  }
  return mean_scalars(tape, losses);
}

TensorPtr wsi_forward(Tape& tape, const WsiCnnSpec& spec, const ParamStore& params,
                      const TensorPtr& grid, Mode mode, Rng& rng) {
  if (grid->shape.size() != 4 || grid->shape[3] != spec.code_size)
    throw std::invalid_argument("wsi_forward: grid channel count mismatch");
  if (grid->shape[1] != spec.grid_size || grid->shape[2] != spec.grid_size)
    throw std::invalid_argument("wsi_forward: grid spatial extent mismatch");
  TensorPtr x = grid;
  for (int l = 0; l < 8; ++l) {
    const std::string name = "wsi.conv" + std::to_string(l);
    x = depthwise_separable_conv2d(tape, x, params.get(name + ".depth"),
                                   params.get(name + ".point"), params.get(name + ".bias"),
                                   spec.strides[static_cast<size_t>(l)], Padding::same);
    x = bn(tape, params, "wsi.bn" + std::to_string(l), x, mode, spec.bn_momentum, spec.bn_eps);
    x = leaky_relu(tape, x, spec.leaky_alpha);
    x = dropout(tape, x, spec.dropout_rate, mode, DropoutGranularity::channel, rng);
  }
  const int flat = spec.final_spatial() * spec.final_spatial() * spec.filters;
  x = reshape(tape, x, {grid->shape[0], flat});
  x = dense(tape, x, params.get("wsi.fc.weight"), params.get("wsi.fc.bias"));
  x = bn(tape, params, "wsi.bnfc", x, mode, spec.bn_momentum, spec.bn_eps);
  x = leaky_relu(tape, x, spec.leaky_alpha);
  x = dense(tape, x, params.get("wsi.out.weight"), params.get("wsi.out.bias"));
  if (spec.output == WsiOutput::classification) return softmax(tape, x);
  return reshape(tape, x, {grid->shape[0]});
}

std::vector<TensorPtr> wsi_l2_weights(const WsiCnnSpec& spec, const ParamStore& params) {
  (void)spec;
  std::vector<TensorPtr> out;
  for (const auto& [name, t] : params.entries()) {
    if (name.ends_with(".depth") || name.ends_with(".point") || name.ends_with(".weight"))
      out.push_back(t);
  }
  return out;
}

TensorPtr pad_grid(const TensorPtr& grid, int multiple) {
  if (grid->shape.size() != 3) throw std::invalid_argument("pad_grid: grid must be [H,W,C]");
  if (multiple <= 0) throw std::invalid_argument("pad_grid: multiple must be positive");
  const int h = grid->shape[0], w = grid->shape[1], c = grid->shape[2];
  const int ph = ((h + multiple - 1) / multiple) * multiple;
  const int pw = ((w + multiple - 1) / multiple) * multiple;
  if (ph == h && pw == w) return grid;
  auto out = make_tensor({ph, pw, c});
  for (int y = 0; y < h; ++y)
    std::copy(grid->data.begin() + static_cast<int64_t>(y) * w * c,
              grid->data.begin() + static_cast<int64_t>(y + 1) * w * c,
              out->data.begin() + static_cast<int64_t>(y) * pw * c);
  return out;
}

std::vector<uint8_t> pad_mask(const std::vector<uint8_t>& mask, int rows, int cols,
                              int multiple) {
  const int pr = ((rows + multiple - 1) / multiple) * multiple;
  const int pc = ((cols + multiple - 1) / multiple) * multiple;
  std::vector<uint8_t> out(static_cast<size_t>(pr) * pc, 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<size_t>(r) * pc + c] = mask[static_cast<size_t>(r) * cols + c];
  return out;
}

}  // namespace nic
