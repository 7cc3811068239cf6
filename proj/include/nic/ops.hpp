#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nic/rng.hpp"
#include "nic/tensor.hpp"

namespace nic {

enum class Padding { same, valid };
enum class Mode { train, infer };
enum class DropoutGranularity { element, channel };

// Spatial ops use NHWC layout; dense ops use [N, D].

// conv2d: input [N,H,W,Cin], kernel [kh,kw,Cin,Cout], bias [Cout]
TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride, Padding padding);

// depthwise spatial conv then 1x1 channel mix; depth_kernel [kh,kw,Cin],
// point_kernel [1,1,Cin,Cout], bias [Cout]
TensorPtr depthwise_separable_conv2d(Tape& tape, const TensorPtr& input,
                                     const TensorPtr& depth_kernel,
                                     const TensorPtr& point_kernel,
                                     const TensorPtr& bias, int stride, Padding padding);

// Per-channel normalization over all leading axes. gamma/beta/running_* are
// [C] with C the trailing extent. Train mode uses batch statistics and
// updates running stats in place: running <- momentum*running + (1-m)*batch.
TensorPtr batch_norm(Tape& tape, const TensorPtr& input, const TensorPtr& gamma,
                     const TensorPtr& beta, const TensorPtr& running_mean,
                     const TensorPtr& running_var, Mode mode, double momentum,
                     double eps);

TensorPtr leaky_relu(Tape& tape, const TensorPtr& input, double alpha);

// input [N,Din] x weight [Din,Dout] + bias [Dout]
TensorPtr dense(Tape& tape, const TensorPtr& input, const TensorPtr& weight,
                const TensorPtr& bias);

// row-wise, max-shifted
TensorPtr softmax(Tape& tape, const TensorPtr& input);

// Inverted dropout; channel granularity zeroes whole trailing-axis feature
// maps per sample. Identity in infer mode.
TensorPtr dropout(Tape& tape, const TensorPtr& input, double rate, Mode mode,
                  DropoutGranularity granularity, Rng& rng);

// mean over rows of -log(probs[i, label_i]), probability clamped at 1e-12
TensorPtr cross_entropy(Tape& tape, const TensorPtr& probs, const std::vector<int>& labels);

TensorPtr mse(Tape& tape, const TensorPtr& pred, const TensorPtr& target);

// negative Cox partial log-likelihood over the batch (Breslow ties,
// risk set {j : t_j >= t_i}); differentiable w.r.t. risks [N]
TensorPtr cox_loss(Tape& tape, const TensorPtr& risks, const std::vector<double>& times,
                   const std::vector<uint8_t>& events);

// shape utilities (copying views with identity-style gradients)
TensorPtr reshape(Tape& tape, const TensorPtr& input, std::vector<int> shape);
TensorPtr concat_rows(Tape& tape, const std::vector<TensorPtr>& parts);
TensorPtr slice_rows(Tape& tape, const TensorPtr& input, int begin, int count);

// scalar combinators
TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape& tape, const TensorPtr& a, double c);
TensorPtr mean_scalars(Tape& tape, const std::vector<TensorPtr>& xs);
// coeff * sum of squared entries over all listed tensors
TensorPtr l2_penalty(Tape& tape, const std::vector<TensorPtr>& weights, double coeff);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
};

// Central-difference check of d fn / d params against the grads already in
// params (caller runs backward first). fn must rebuild the forward pass.
GradCheckReport finite_difference_check(const std::function<double()>& fn,
                                        const std::vector<std::pair<std::string, TensorPtr>>& params,
                                        double epsilon);

int conv_out_extent(int in, int k, int stride, Padding padding);

}  // namespace nic
