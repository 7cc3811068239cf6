#include "nic/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace nic {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool any_grad(std::initializer_list<TensorPtr> ts) {
  for (const auto& t : ts)
    if (t && t->requires_grad) return true;
  return false;
}

struct ConvGeom {
  int oh, ow, pad_top, pad_left;
};

ConvGeom conv_geom(int h, int w, int kh, int kw, int stride, Padding padding) {
  ConvGeom g;
  g.oh = conv_out_extent(h, kh, stride, padding);
  g.ow = conv_out_extent(w, kw, stride, padding);
  if (padding == Padding::same) {
    int pad_h = std::max((g.oh - 1) * stride + kh - h, 0);
    int pad_w = std::max((g.ow - 1) * stride + kw - w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    g.pad_top = g.pad_left = 0;
  }
  return g;
}

// cols: [oh*ow, kh*kw*cin] for one sample
void im2col(const double* in, int h, int w, int cin, int kh, int kw, int stride,
            const ConvGeom& g, double* cols) {
  const int patch = kh * kw * cin;
  for (int oy = 0; oy < g.oh; ++oy) {
    for (int ox = 0; ox < g.ow; ++ox) {
      double* row = cols + (static_cast<int64_t>(oy) * g.ow + ox) * patch;
      for (int ky = 0; ky < kh; ++ky) {
        int iy = oy * stride - g.pad_top + ky;
        double* dst = row + ky * kw * cin;
        if (iy < 0 || iy >= h) {
          std::memset(dst, 0, sizeof(double) * kw * cin);
          continue;
        }
        for (int kx = 0; kx < kw; ++kx) {
          int ix = ox * stride - g.pad_left + kx;
          if (ix < 0 || ix >= w) {
            std::memset(dst + kx * cin, 0, sizeof(double) * cin);
          } else {
            std::memcpy(dst + kx * cin, in + (static_cast<int64_t>(iy) * w + ix) * cin,
                        sizeof(double) * cin);
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, int h, int w, int cin, int kh, int kw, int stride,
                const ConvGeom& g, double* din) {
  const int patch = kh * kw * cin;
  for (int oy = 0; oy < g.oh; ++oy) {
    for (int ox = 0; ox < g.ow; ++ox) {
      const double* row = cols + (static_cast<int64_t>(oy) * g.ow + ox) * patch;
      for (int ky = 0; ky < kh; ++ky) {
        int iy = oy * stride - g.pad_top + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int ix = ox * stride - g.pad_left + kx;
          if (ix < 0 || ix >= w) continue;
          const double* src = row + (ky * kw + kx) * cin;
          double* dst = din + (static_cast<int64_t>(iy) * w + ix) * cin;
          for (int c = 0; c < cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

int conv_out_extent(int in, int k, int stride, Padding padding) {
  require(stride > 0, "conv: stride must be positive");
  if (padding == Padding::same) return (in + stride - 1) / stride;
  require(in >= k, "conv: input smaller than kernel with valid padding");
  return (in - k) / stride + 1;
}

TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride, Padding padding) {
  require(input->shape.size() == 4, "conv2d: input must be [N,H,W,Cin]");
  require(kernel->shape.size() == 4, "conv2d: kernel must be [kh,kw,Cin,Cout]");
  const int n = input->shape[0], h = input->shape[1], w = input->shape[2], cin = input->shape[3];
  const int kh = kernel->shape[0], kw = kernel->shape[1], cout = kernel->shape[3];
  require(kernel->shape[2] == cin, "conv2d: kernel Cin mismatch");
  require(bias->shape == std::vector<int>{cout}, "conv2d: bias must be [Cout]");
  const ConvGeom g = conv_geom(h, w, kh, kw, stride, padding);
  const int patch = kh * kw * cin;
  const int64_t ohw = static_cast<int64_t>(g.oh) * g.ow;

  auto out = make_tensor({n, g.oh, g.ow, cout});
  ConstMapMat km(kernel->data.data(), patch, cout);
  std::vector<double> cols(ohw * patch);
  for (int s = 0; s < n; ++s) {
    im2col(input->data.data() + static_cast<int64_t>(s) * h * w * cin, h, w, cin, kh, kw,
           stride, g, cols.data());
    MapMat om(out->data.data() + s * ohw * cout, ohw, cout);
    ConstMapMat cm(cols.data(), ohw, patch);
    om.noalias() = cm * km;
    om.rowwise() += ConstMapMat(bias->data.data(), 1, cout).row(0);
  }

  if (!any_grad({input, kernel, bias})) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    ConstMapMat km(kernel->data.data(), patch, cout);
    std::vector<double> cols(ohw * patch);
    std::vector<double> dcols;
    if (input->requires_grad) dcols.resize(ohw * patch);
    for (int s = 0; s < n; ++s) {
      ConstMapMat dout(out->grad.data() + s * ohw * cout, ohw, cout);
      if (kernel->requires_grad || input->requires_grad)
        im2col(input->data.data() + static_cast<int64_t>(s) * h * w * cin, h, w, cin, kh, kw,
               stride, g, cols.data());
      if (kernel->requires_grad) {
        MapMat dk(kernel->ensure_grad().data(), patch, cout);
        dk.noalias() += ConstMapMat(cols.data(), ohw, patch).transpose() * dout;
      }
      if (bias->requires_grad) {
        auto& db = bias->ensure_grad();
        Eigen::Map<Eigen::VectorXd>(db.data(), cout) += dout.colwise().sum().transpose();
      }
      if (input->requires_grad) {
        MapMat dcm(dcols.data(), ohw, patch);
        dcm.noalias() = dout * km.transpose();
        col2im_add(dcols.data(), h, w, cin, kh, kw, stride, g,
                   input->ensure_grad().data() + static_cast<int64_t>(s) * h * w * cin);
      }
    }
  });
  return out;
}

namespace {

// depthwise spatial convolution, no bias: input [N,H,W,C], kernel [kh,kw,C]
TensorPtr depthwise_conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& kernel,
                           int stride, Padding padding) {
  require(input->shape.size() == 4, "depthwise: input must be [N,H,W,C]");
  require(kernel->shape.size() == 3, "depthwise: kernel must be [kh,kw,C]");
  const int n = input->shape[0], h = input->shape[1], w = input->shape[2], c = input->shape[3];
  const int kh = kernel->shape[0], kw = kernel->shape[1];
  require(kernel->shape[2] == c, "depthwise: channel mismatch");
  const ConvGeom g = conv_geom(h, w, kh, kw, stride, padding);

  auto out = make_tensor({n, g.oh, g.ow, c});
  const double* kd = kernel->data.data();
  for (int s = 0; s < n; ++s) {
    const double* in = input->data.data() + static_cast<int64_t>(s) * h * w * c;
    double* od = out->data.data() + static_cast<int64_t>(s) * g.oh * g.ow * c;
    for (int oy = 0; oy < g.oh; ++oy)
      for (int ox = 0; ox < g.ow; ++ox) {
        double* op = od + (static_cast<int64_t>(oy) * g.ow + ox) * c;
        for (int ky = 0; ky < kh; ++ky) {
          int iy = oy * stride - g.pad_top + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            int ix = ox * stride - g.pad_left + kx;
            if (ix < 0 || ix >= w) continue;
            const double* ip = in + (static_cast<int64_t>(iy) * w + ix) * c;
            const double* kp = kd + (ky * kw + kx) * c;
            for (int ch = 0; ch < c; ++ch) op[ch] += ip[ch] * kp[ch];
          }
        }
      }
  }

  if (!any_grad({input, kernel})) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    const double* kd = kernel->data.data();
    double* dk = kernel->requires_grad ? kernel->ensure_grad().data() : nullptr;
    double* din = input->requires_grad ? input->ensure_grad().data() : nullptr;
    for (int s = 0; s < n; ++s) {
      const double* in = input->data.data() + static_cast<int64_t>(s) * h * w * c;
      const double* go = out->grad.data() + static_cast<int64_t>(s) * g.oh * g.ow * c;
      for (int oy = 0; oy < g.oh; ++oy)
        for (int ox = 0; ox < g.ow; ++ox) {
          const double* gp = go + (static_cast<int64_t>(oy) * g.ow + ox) * c;
          for (int ky = 0; ky < kh; ++ky) {
            int iy = oy * stride - g.pad_top + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              int ix = ox * stride - g.pad_left + kx;
              if (ix < 0 || ix >= w) continue;
              const int64_t ioff = (static_cast<int64_t>(iy) * w + ix) * c;
              const int koff = (ky * kw + kx) * c;
              if (dk)
                for (int ch = 0; ch < c; ++ch) dk[koff + ch] += in[ioff + ch] * gp[ch];
              if (din) {
                double* dp = din + static_cast<int64_t>(s) * h * w * c + ioff;
                for (int ch = 0; ch < c; ++ch) dp[ch] += kd[koff + ch] * gp[ch];
              }
            }
          }
        }
    }
  });
  return out;
}

}  // namespace

TensorPtr depthwise_separable_conv2d(Tape& tape, const TensorPtr& input,
                                     const TensorPtr& depth_kernel,
                                     const TensorPtr& point_kernel,
                                     const TensorPtr& bias, int stride, Padding padding) {
  auto spatial = depthwise_conv2d(tape, input, depth_kernel, stride, padding);
  return conv2d(tape, spatial, point_kernel, bias, 1, Padding::valid);
}

TensorPtr batch_norm(Tape& tape, const TensorPtr& input, const TensorPtr& gamma,
                     const TensorPtr& beta, const TensorPtr& running_mean,
                     const TensorPtr& running_var, Mode mode, double momentum,
                     double eps) {
  require(eps > 0, "batch_norm: eps must be positive");
  require(!input->shape.empty(), "batch_norm: empty input");
  const int c = input->shape.back();
  require(gamma->numel() == c && beta->numel() == c, "batch_norm: gamma/beta must be [C]");
  require(running_mean->numel() == c && running_var->numel() == c,
          "batch_norm: running stats must be [C]");
  const int64_t m = input->numel() / c;

  std::vector<double> mean(c), inv_std(c);
  if (mode == Mode::train) {
    require(m >= 2, "batch_norm: train mode needs at least 2 samples per channel");
    std::vector<double> var(c, 0.0);
    for (int ch = 0; ch < c; ++ch) mean[ch] = 0.0;
    const double* x = input->data.data();
    for (int64_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch) mean[ch] += x[i * c + ch];
    for (int ch = 0; ch < c; ++ch) mean[ch] /= static_cast<double>(m);
    for (int64_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch) {
        double d = x[i * c + ch] - mean[ch];
        var[ch] += d * d;
      }
    for (int ch = 0; ch < c; ++ch) {
      var[ch] /= static_cast<double>(m);
      inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
      running_mean->data[ch] = momentum * running_mean->data[ch] + (1.0 - momentum) * mean[ch];
      running_var->data[ch] = momentum * running_var->data[ch] + (1.0 - momentum) * var[ch];
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean->data[ch];
      inv_std[ch] = 1.0 / std::sqrt(running_var->data[ch] + eps);
    }
  }

  auto out = make_tensor(input->shape);
  {
    const double* x = input->data.data();
    double* y = out->data.data();
    for (int64_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch)
        y[i * c + ch] =
            gamma->data[ch] * (x[i * c + ch] - mean[ch]) * inv_std[ch] + beta->data[ch];
  }

  if (!any_grad({input, gamma, beta})) return out;
  out->requires_grad = true;
  const bool train = (mode == Mode::train);
  tape.record(out, [=]() {
    const double* x = input->data.data();
    const double* dy = out->grad.data();
    std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
    for (int64_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch) {
        double xhat = (x[i * c + ch] - mean[ch]) * inv_std[ch];
        sum_dy[ch] += dy[i * c + ch];
        sum_dy_xhat[ch] += dy[i * c + ch] * xhat;
      }
    if (gamma->requires_grad) {
      auto& dg = gamma->ensure_grad();
      for (int ch = 0; ch < c; ++ch) dg[ch] += sum_dy_xhat[ch];
    }
    if (beta->requires_grad) {
      auto& db = beta->ensure_grad();
      for (int ch = 0; ch < c; ++ch) db[ch] += sum_dy[ch];
    }
    if (input->requires_grad) {
      auto& dx = input->ensure_grad();
      const double inv_m = 1.0 / static_cast<double>(m);
      for (int64_t i = 0; i < m; ++i)
        for (int ch = 0; ch < c; ++ch) {
          double g = gamma->data[ch] * inv_std[ch];
          if (train) {
            double xhat = (x[i * c + ch] - mean[ch]) * inv_std[ch];
            dx[i * c + ch] += g * (dy[i * c + ch] - sum_dy[ch] * inv_m -
                                   xhat * sum_dy_xhat[ch] * inv_m);
          } else {
            dx[i * c + ch] += g * dy[i * c + ch];
          }
        }
    }
  });
  return out;
}

TensorPtr leaky_relu(Tape& tape, const TensorPtr& input, double alpha) {
  auto out = make_tensor(input->shape);
  for (int64_t i = 0; i < input->numel(); ++i) {
    double x = input->data[i];
    out->data[i] = x >= 0.0 ? x : alpha * x;
  }
  if (!input->requires_grad) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    auto& din = input->ensure_grad();
    for (int64_t i = 0; i < input->numel(); ++i)
      din[i] += out->grad[i] * (input->data[i] >= 0.0 ? 1.0 : alpha);
  });
  return out;
}

TensorPtr dense(Tape& tape, const TensorPtr& input, const TensorPtr& weight,
                const TensorPtr& bias) {
  require(input->shape.size() == 2, "dense: input must be [N,Din]");
  require(weight->shape.size() == 2, "dense: weight must be [Din,Dout]");
  const int n = input->shape[0], din = input->shape[1];
  require(weight->shape[0] == din, "dense: inner-dimension mismatch");
  const int dout = weight->shape[1];
  require(bias->numel() == dout, "dense: bias must be [Dout]");

  auto out = make_tensor({n, dout});
  {
    ConstMapMat im(input->data.data(), n, din);
    ConstMapMat wm(weight->data.data(), din, dout);
    MapMat om(out->data.data(), n, dout);
    om.noalias() = im * wm;
    om.rowwise() += ConstMapMat(bias->data.data(), 1, dout).row(0);
  }
  if (!any_grad({input, weight, bias})) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    ConstMapMat dout_m(out->grad.data(), n, dout);
    if (weight->requires_grad) {
      MapMat dw(weight->ensure_grad().data(), din, dout);
      dw.noalias() += ConstMapMat(input->data.data(), n, din).transpose() * dout_m;
    }
    if (bias->requires_grad) {
      Eigen::Map<Eigen::VectorXd>(bias->ensure_grad().data(), dout) +=
          dout_m.colwise().sum().transpose();
    }
    if (input->requires_grad) {
      MapMat di(input->ensure_grad().data(), n, din);
      di.noalias() += dout_m * ConstMapMat(weight->data.data(), din, dout).transpose();
    }
  });
  return out;
}

TensorPtr softmax(Tape& tape, const TensorPtr& input) {
  require(input->shape.size() == 2, "softmax: input must be [N,K]");
  const int n = input->shape[0], k = input->shape[1];
  auto out = make_tensor(input->shape);
  for (int i = 0; i < n; ++i) {
    const double* row = input->data.data() + static_cast<int64_t>(i) * k;
    double* orow = out->data.data() + static_cast<int64_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < k; ++j) orow[j] /= sum;
  }
  if (!input->requires_grad) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    auto& din = input->ensure_grad();
    for (int i = 0; i < n; ++i) {
      const double* s = out->data.data() + static_cast<int64_t>(i) * k;
      const double* dy = out->grad.data() + static_cast<int64_t>(i) * k;
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += dy[j] * s[j];
      for (int j = 0; j < k; ++j) din[static_cast<int64_t>(i) * k + j] += s[j] * (dy[j] - dot);
    }
  });
  return out;
}

TensorPtr dropout(Tape& tape, const TensorPtr& input, double rate, Mode mode,
                  DropoutGranularity granularity, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (mode == Mode::infer || rate == 0.0) return input;

  const int c = input->shape.back();
  const int64_t m = input->numel() / c;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>();
  if (granularity == DropoutGranularity::element) {
    mask->resize(input->numel());
    for (auto& v : *mask) v = rng.uniform() < rate ? 0.0 : keep_scale;
  } else {
    // one multiplier per (sample-position, channel) feature map: for NHWC
    // inputs a channel mask spans all spatial positions of one sample
    const int64_t samples = input->shape[0];
    const int64_t per_sample = input->numel() / samples;
    mask->resize(static_cast<size_t>(samples) * c);
    for (auto& v : *mask) v = rng.uniform() < rate ? 0.0 : keep_scale;
    auto out = make_tensor(input->shape);
    for (int64_t s = 0; s < samples; ++s)
      for (int64_t i = 0; i < per_sample; ++i)
        out->data[s * per_sample + i] =
            input->data[s * per_sample + i] * (*mask)[s * c + i % c];
    if (input->requires_grad) {
      out->requires_grad = true;
      tape.record(out, [=]() {
        auto& din = input->ensure_grad();
        for (int64_t s = 0; s < samples; ++s)
          for (int64_t i = 0; i < per_sample; ++i)
            din[s * per_sample + i] += out->grad[s * per_sample + i] * (*mask)[s * c + i % c];
      });
    }
    return out;
  }

  auto out = make_tensor(input->shape);
  for (int64_t i = 0; i < input->numel(); ++i) out->data[i] = input->data[i] * (*mask)[i];
  (void)m;
  if (input->requires_grad) {
    out->requires_grad = true;
    tape.record(out, [=]() {
      auto& din = input->ensure_grad();
      for (int64_t i = 0; i < input->numel(); ++i) din[i] += out->grad[i] * (*mask)[i];
    });
  }
  return out;
}

TensorPtr cross_entropy(Tape& tape, const TensorPtr& probs, const std::vector<int>& labels) {
  require(probs->shape.size() == 2, "cross_entropy: probs must be [N,K]");
  const int n = probs->shape[0], k = probs->shape[1];
  require(static_cast<int>(labels.size()) == n, "cross_entropy: label count mismatch");
  constexpr double clamp = 1e-12;
  auto out = make_tensor({1});
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    require(labels[i] >= 0 && labels[i] < k, "cross_entropy: label out of range");
    sum -= std::log(std::max(probs->data[static_cast<int64_t>(i) * k + labels[i]], clamp));
  }
  out->data[0] = sum / n;
  if (!probs->requires_grad) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    auto& dp = probs->ensure_grad();
    const double g = out->grad[0] / n;
    for (int i = 0; i < n; ++i) {
      double p = probs->data[static_cast<int64_t>(i) * k + labels[i]];
      if (p >= clamp) dp[static_cast<int64_t>(i) * k + labels[i]] -= g / p;
    }
  });
  return out;
}

TensorPtr mse(Tape& tape, const TensorPtr& pred, const TensorPtr& target) {
  require(pred->numel() == target->numel(), "mse: size mismatch");
  const int64_t n = pred->numel();
  auto out = make_tensor({1});
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = pred->data[i] - target->data[i];
    sum += d * d;
  }
  out->data[0] = sum / static_cast<double>(n);
  if (!any_grad({pred, target})) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    const double g = 2.0 * out->grad[0] / static_cast<double>(n);
    if (pred->requires_grad) {
      auto& dp = pred->ensure_grad();
      for (int64_t i = 0; i < n; ++i) dp[i] += g * (pred->data[i] - target->data[i]);
    }
    if (target->requires_grad) {
      auto& dt = target->ensure_grad();
      for (int64_t i = 0; i < n; ++i) dt[i] -= g * (pred->data[i] - target->data[i]);
    }
  });
  return out;
}

TensorPtr cox_loss(Tape& tape, const TensorPtr& risks, const std::vector<double>& times,
                   const std::vector<uint8_t>& events) {
  const int64_t n = risks->numel();
  require(risks->shape.size() <= 2, "cox_loss: risks must be a vector");
  require(static_cast<int64_t>(times.size()) == n && times.size() == events.size(),
          "cox_loss: record count mismatch");
  bool any_event = false;
  for (auto e : events) any_event = any_event || e;
  require(any_event, "cox_loss: at least one observed event required");
  for (int64_t i = 0; i < n; ++i)
    require(std::isfinite(risks->data[i]), "cox_loss: non-finite risk");

  // log-sum-exp over each risk set, max-shifted; Breslow handling of ties
  // falls out of the >= comparison (tied events share one denominator)
  auto lse_over_risk_set = [&](double t_event) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < n; ++j)
      if (times[j] >= t_event) mx = std::max(mx, risks->data[j]);
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j)
      if (times[j] >= t_event) s += std::exp(risks->data[j] - mx);
    return mx + std::log(s);
  };

  auto out = make_tensor({1});
  double nll = 0.0;
  for (int64_t i = 0; i < n; ++i)
    if (events[i]) nll -= risks->data[i] - lse_over_risk_set(times[i]);
  out->data[0] = nll;

  if (!risks->requires_grad) return out;
  out->requires_grad = true;
  // capture copies: the vjp runs long after this frame is gone
  std::vector<double> times_copy(times);
  std::vector<uint8_t> events_copy(events);
  tape.record(out, [out, risks, n, times_copy, events_copy]() {
    auto lse = [&](double t_event) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < n; ++j)
        if (times_copy[j] >= t_event) mx = std::max(mx, risks->data[j]);
      double s = 0.0;
      for (int64_t j = 0; j < n; ++j)
        if (times_copy[j] >= t_event) s += std::exp(risks->data[j] - mx);
      return mx + std::log(s);
    };
    auto& dr = risks->ensure_grad();
    const double g = out->grad[0];
    for (int64_t i = 0; i < n; ++i) {
      if (!events_copy[i]) continue;
      const double l = lse(times_copy[i]);
      for (int64_t j = 0; j < n; ++j)
        if (times_copy[j] >= times_copy[i]) dr[j] += g * std::exp(risks->data[j] - l);
      dr[i] -= g;
    }
  });
  return out;
}

TensorPtr reshape(Tape& tape, const TensorPtr& input, std::vector<int> shape) {
  require(Tensor::numel_of(shape) == input->numel(), "reshape: element count mismatch");
  auto out = make_tensor(std::move(shape));
  out->data = input->data;
  if (!input->requires_grad) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    auto& din = input->ensure_grad();
    for (int64_t i = 0; i < input->numel(); ++i) din[i] += out->grad[i];
  });
  return out;
}

TensorPtr concat_rows(Tape& tape, const std::vector<TensorPtr>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  std::vector<int> shape = parts[0]->shape;
  int64_t rows = 0;
  const int64_t row_sz = parts[0]->numel() / parts[0]->shape[0];
  for (const auto& p : parts) {
    require(p->shape.size() == shape.size(), "concat_rows: rank mismatch");
    for (size_t d = 1; d < shape.size(); ++d)
      require(p->shape[d] == shape[d], "concat_rows: trailing extent mismatch");
    rows += p->shape[0];
  }
  shape[0] = static_cast<int>(rows);
  auto out = make_tensor(shape);
  int64_t off = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    std::copy(p->data.begin(), p->data.end(), out->data.begin() + off);
    off += p->numel();
    needs_grad = needs_grad || p->requires_grad;
  }
  if (!needs_grad) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    int64_t off = 0;
    for (const auto& p : parts) {
      if (p->requires_grad) {
        auto& dp = p->ensure_grad();
        for (int64_t i = 0; i < p->numel(); ++i) dp[i] += out->grad[off + i];
      }
      off += p->numel();
    }
  });
  (void)row_sz;
  return out;
}

TensorPtr slice_rows(Tape& tape, const TensorPtr& input, int begin, int count) {
  require(!input->shape.empty(), "slice_rows: scalar input");
  require(begin >= 0 && count > 0 && begin + count <= input->shape[0],
          "slice_rows: range out of bounds");
  std::vector<int> shape = input->shape;
  shape[0] = count;
  const int64_t row_sz = input->numel() / input->shape[0];
  auto out = make_tensor(shape);
  std::copy(input->data.begin() + begin * row_sz,
            input->data.begin() + (begin + count) * row_sz, out->data.begin());
  if (!input->requires_grad) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    auto& din = input->ensure_grad();
    for (int64_t i = 0; i < out->numel(); ++i) din[begin * row_sz + i] += out->grad[i];
  });
  return out;
}

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  require(a->numel() == b->numel(), "add: size mismatch");
  auto out = make_tensor(a->shape);
  for (int64_t i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] + b->data[i];
  if (!any_grad({a, b})) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    for (const auto& t : {a, b})
      if (t->requires_grad) {
        auto& dt = t->ensure_grad();
        for (int64_t i = 0; i < t->numel(); ++i) dt[i] += out->grad[i];
      }
  });
  return out;
}

TensorPtr scale(Tape& tape, const TensorPtr& a, double c) {
  auto out = make_tensor(a->shape);
  for (int64_t i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] * c;
  if (!a->requires_grad) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    auto& da = a->ensure_grad();
    for (int64_t i = 0; i < a->numel(); ++i) da[i] += out->grad[i] * c;
  });
  return out;
}

TensorPtr mean_scalars(Tape& tape, const std::vector<TensorPtr>& xs) {
  require(!xs.empty(), "mean_scalars: no inputs");
  auto out = make_tensor({1});
  bool needs_grad = false;
  for (const auto& x : xs) {
    require(x->is_scalar(), "mean_scalars: non-scalar input");
    out->data[0] += x->data[0];
    needs_grad = needs_grad || x->requires_grad;
  }
  out->data[0] /= static_cast<double>(xs.size());
  if (!needs_grad) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    const double g = out->grad[0] / static_cast<double>(xs.size());
    for (const auto& x : xs)
      if (x->requires_grad) x->ensure_grad()[0] += g;
  });
  return out;
}

TensorPtr l2_penalty(Tape& tape, const std::vector<TensorPtr>& weights, double coeff) {
  auto out = make_tensor({1});
  bool needs_grad = false;
  for (const auto& w : weights) {
    for (double v : w->data) out->data[0] += v * v;
    needs_grad = needs_grad || w->requires_grad;
  }
  out->data[0] *= coeff;
  if (!needs_grad) return out;
  out->requires_grad = true;
  tape.record(out, [=]() {
    const double g = 2.0 * coeff * out->grad[0];
    for (const auto& w : weights)
      if (w->requires_grad) {
        auto& dw = w->ensure_grad();
        for (int64_t i = 0; i < w->numel(); ++i) dw[i] += g * w->data[i];
      }
  });
  return out;
}

GradCheckReport finite_difference_check(
    const std::function<double()>& fn,
    const std::vector<std::pair<std::string, TensorPtr>>& params, double epsilon) {
  GradCheckReport report;
  for (const auto& [name, p] : params) {
    if (!p->requires_grad) continue;
    const auto& analytic = p->grad;
    require(analytic.size() == p->data.size(), "finite_difference_check: grads not populated");
    for (int64_t i = 0; i < p->numel(); ++i) {
      const double saved = p->data[i];
      p->data[i] = saved + epsilon;
      const double fp = fn();
      p->data[i] = saved - epsilon;
      const double fm = fn();
      p->data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace nic
