#include "nic/training.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace nic {

void adam_step(AdamState& state, const std::vector<TensorPtr>& params, double lr) {
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (p.grad.size() != p.data.size())
      throw std::invalid_argument("adam_step: gradients not populated");
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t j = 0; j < p.data.size(); ++j) {
      const double g = p.grad[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      p.data[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + state.eps);
    }
  }
}

bool plateau_step(PlateauSchedule& sched, double epoch_metric) {
  if (sched.stopped) return false;
  const bool improved =
      std::isnan(sched.best) || (sched.maximize ? epoch_metric > sched.best + sched.min_delta
                                                : epoch_metric < sched.best - sched.min_delta);
  if (improved) {
    sched.best = epoch_metric;
    sched.epochs_since_best = 0;
    return true;
  }
  if (++sched.epochs_since_best >= sched.patience) {
    sched.epochs_since_best = 0;
    if (sched.lr / sched.factor < sched.floor_lr * (1.0 - 1e-9)) {
      sched.stopped = true;
      return false;
    }
    sched.lr /= sched.factor;
  }
  return true;
}

void augment_patch(double* patch, int patch_size, Rng& rng, const AugmentPolicy& policy) {
  if (!policy.enabled) return;
  const int p = patch_size;
  auto at = [&](int y, int x, int c) -> double& { return patch[(y * p + x) * 3 + c]; };

  if (policy.rotations) {
    const int quarter_turns = static_cast<int>(rng.uniform_int(4));
    for (int q = 0; q < quarter_turns; ++q) {
      std::vector<double> tmp(patch, patch + static_cast<size_t>(p) * p * 3);
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x)
          for (int c = 0; c < 3; ++c)
            at(y, x, c) = tmp[((p - 1 - x) * p + y) * 3 + c];
    }
  }
  if (policy.flips) {
    if (rng.uniform() < 0.5) {  // horizontal
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p / 2; ++x)
          for (int c = 0; c < 3; ++c) std::swap(at(y, x, c), at(y, p - 1 - x, c));
    }
    if (rng.uniform() < 0.5) {  // vertical
      for (int y = 0; y < p / 2; ++y)
        for (int x = 0; x < p; ++x)
          for (int c = 0; c < 3; ++c) std::swap(at(y, x, c), at(p - 1 - y, x, c));
    }
  }
  const double bright = rng.uniform(-policy.brightness, policy.brightness);
  const double contrast = 1.0 + rng.uniform(-policy.contrast, policy.contrast);
  double shift[3];
  for (auto& s : shift) s = rng.uniform(-policy.channel_shift, policy.channel_shift);
  for (int i = 0; i < p * p; ++i)
    for (int c = 0; c < 3; ++c) {
      double v = patch[i * 3 + c];
      v = (v - 0.5) * contrast + 0.5 + bright + shift[c];
      patch[i * 3 + c] = std::clamp(v, 0.0, 1.0);
    }
}

void write_history_csv(const History& history, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write history CSV: " + path);
  f << "epoch,lr,train_loss";
  for (const auto& name : history.metric_names) f << ',' << name;
  f << "\n";
  f.precision(17);
  for (const auto& e : history.epochs) {
    f << e.epoch << ',' << e.lr << ',' << e.train_loss;
    for (double m : e.val_metrics) f << ',' << m;
    f << "\n";
  }
}

namespace {

// shuffled cyclic sampler over a fixed index set
class BatchSampler {
 public:
  BatchSampler(std::vector<int> indices, Rng& rng) : indices_(std::move(indices)), rng_(rng) {
    if (indices_.empty()) throw std::invalid_argument("empty dataset split");
    rng_.shuffle(indices_);
  }
  int next() {
    if (pos_ >= indices_.size()) {
      rng_.shuffle(indices_);
      pos_ = 0;
    }
    return indices_[pos_++];
  }

 private:
  std::vector<int> indices_;
  Rng& rng_;
  size_t pos_ = 0;
};

TensorPtr stack_patches(const std::vector<const std::vector<double>*>& patches, int p) {
  auto t = make_tensor({static_cast<int>(patches.size()), p, p, 3});
  for (size_t i = 0; i < patches.size(); ++i)
    std::copy(patches[i]->begin(), patches[i]->end(),
              t->data.begin() + static_cast<int64_t>(i) * p * p * 3);
  return t;
}

}  // namespace

double task_accuracy(const EncoderSpec& enc, const HeadSpec& head, const ParamStore& params,
                     const std::string& head_prefix, const PatchDataset& dataset,
                     const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("task_accuracy: empty index set");
  Rng unused(0);
  int correct = 0;
  constexpr int kEvalBatch = 64;
  for (size_t begin = 0; begin < indices.size(); begin += kEvalBatch) {
    const size_t end = std::min(indices.size(), begin + kEvalBatch);
    std::vector<const std::vector<double>*> batch;
    for (size_t i = begin; i < end; ++i)
      batch.push_back(&dataset.patches[static_cast<size_t>(indices[i])]);
    Tape tape;
    auto codes = encoder_forward(tape, enc, params, stack_patches(batch, dataset.patch_size),
                                 Mode::infer);
    auto probs = head_forward(tape, head, params, head_prefix, codes, Mode::infer, unused);
    const int k = probs->shape[1];
    for (size_t i = begin; i < end; ++i) {
      const double* row = probs->data.data() + static_cast<int64_t>(i - begin) * k;
      int arg = 0;
      for (int j = 1; j < k; ++j)
        if (row[j] > row[arg]) arg = j;
      if (arg == dataset.labels[static_cast<size_t>(indices[i])]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

History train_multitask(const EncoderSpec& enc, const std::vector<HeadSpec>& heads,
                        ParamStore& params, const std::vector<PatchDataset>& datasets,
                        const TrainConfig& config) {
  if (heads.size() != datasets.size() || heads.empty())
    throw std::invalid_argument("train_multitask: task/head count mismatch");
  for (const auto& d : datasets)
    if (d.patches.empty() || d.train_idx.empty())
      throw std::invalid_argument("train_multitask: empty dataset");

  Rng rng(config.seed);
  auto trainable = params.trainable();
  AdamState adam;
  adam.init(trainable);
  PlateauSchedule sched;
  sched.lr = config.initial_lr;
  sched.floor_lr = config.floor_lr;
  sched.patience = config.patience;
  sched.min_delta = config.min_delta;
  sched.maximize = true;  // mean validation accuracy

  size_t smallest = datasets[0].train_idx.size();
  for (const auto& d : datasets) smallest = std::min(smallest, d.train_idx.size());
  const int steps_per_epoch =
      std::max<int>(1, static_cast<int>(smallest) / config.batch_per_task);

  std::vector<BatchSampler> samplers;
  samplers.reserve(datasets.size());
  for (const auto& d : datasets) samplers.emplace_back(d.train_idx, rng);

  History history;
  for (const auto& d : datasets) history.metric_names.push_back("val_acc_" + d.name);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      std::vector<TaskBatch> batches;
      for (size_t t = 0; t < datasets.size(); ++t) {
        const auto& d = datasets[t];
        TaskBatch b;
        std::vector<std::vector<double>> staged;
        staged.reserve(static_cast<size_t>(config.batch_per_task));
        b.labels.reserve(static_cast<size_t>(config.batch_per_task));
        for (int i = 0; i < config.batch_per_task; ++i) {
          const int idx = samplers[t].next();
          staged.push_back(d.patches[static_cast<size_t>(idx)]);
          augment_patch(staged.back().data(), d.patch_size, rng, config.augment);
          b.labels.push_back(d.labels[static_cast<size_t>(idx)]);
        }
        std::vector<const std::vector<double>*> views;
        for (const auto& s : staged) views.push_back(&s);
        b.patches = stack_patches(views, d.patch_size);
        batches.push_back(std::move(b));
      }
      Tape tape;
      auto loss = multitask_loss(tape, enc, params, heads, batches, Mode::train, rng);
      if (!std::isfinite(loss->data[0]))
        throw std::runtime_error("train_multitask: non-finite loss");
      params.zero_grad();
      tape.backward(loss);
      adam_step(adam, trainable, sched.lr);
      loss_sum += loss->data[0];
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = sched.lr;
    rec.train_loss = loss_sum / steps_per_epoch;
    double acc_sum = 0.0;
    for (size_t t = 0; t < datasets.size(); ++t) {
      const double acc = task_accuracy(enc, heads[t], params, "head" + std::to_string(t),
                                       datasets[t], datasets[t].val_idx);
      rec.val_metrics.push_back(acc);
      acc_sum += acc;
    }
    history.epochs.push_back(rec);
    if (!plateau_step(sched, acc_sum / static_cast<double>(datasets.size()))) break;
  }
  return history;
}

namespace {

TensorPtr stack_grids(const std::vector<TensorPtr>& grids, const std::vector<int>& idx,
                      size_t begin, size_t end) {
  const auto& g0 = grids[static_cast<size_t>(idx[begin])];
  auto t = make_tensor({static_cast<int>(end - begin), g0->shape[0], g0->shape[1],
                        g0->shape[2]});
  const int64_t per = g0->numel();
  for (size_t i = begin; i < end; ++i) {
    const auto& g = grids[static_cast<size_t>(idx[i])];
    if (g->shape != g0->shape)
      throw std::invalid_argument("train_image_level: grid extents differ within batch");
    std::copy(g->data.begin(), g->data.end(),
              t->data.begin() + static_cast<int64_t>(i - begin) * per);
  }
  return t;
}

}  // namespace

std::vector<double> predict_image_level(const WsiCnnSpec& spec, const ParamStore& params,
                                        const std::vector<TensorPtr>& grids,
                                        const std::vector<int>& indices) {
  Rng unused(0);
  std::vector<double> out;
  out.reserve(indices.size());
  constexpr size_t kBatch = 16;
  for (size_t begin = 0; begin < indices.size(); begin += kBatch) {
    const size_t end = std::min(indices.size(), begin + kBatch);
    Tape tape;
    auto batch = stack_grids(grids, indices, begin, end);
    auto pred = wsi_forward(tape, spec, params, batch, Mode::infer, unused);
    if (spec.output == WsiOutput::classification) {
      if (spec.classes != 2)
        throw std::invalid_argument("predict_image_level: scalar prediction needs 2 classes");
      for (size_t i = 0; i < end - begin; ++i)
        out.push_back(pred->data[static_cast<int64_t>(i) * 2 + 1]);
    } else {
      for (size_t i = 0; i < end - begin; ++i) out.push_back(pred->data[i]);
    }
  }
  return out;
}

History train_image_level(const WsiCnnSpec& spec, ParamStore& params,
                          const ImageLevelData& data, Objective objective,
                          const std::vector<int>& train_idx,
                          const std::vector<int>& val_idx, const TrainConfig& config) {
  if (train_idx.empty() || val_idx.empty())
    throw std::invalid_argument("train_image_level: empty split");
  if (objective == Objective::ce && spec.output != WsiOutput::classification)
    throw std::invalid_argument("train_image_level: ce objective needs classification output");

  Rng rng(config.seed);
  auto trainable = params.trainable();
  AdamState adam;
  adam.init(trainable);
  PlateauSchedule sched;
  sched.lr = config.initial_lr;
  sched.floor_lr = config.floor_lr;
  sched.patience = config.patience;
  sched.min_delta = config.min_delta;
  sched.maximize = (objective == Objective::ce);
  const auto l2_weights = wsi_l2_weights(spec, params);

  History history;
  history.metric_names.push_back(objective == Objective::mse   ? "val_mse"
                                 : objective == Objective::ce ? "val_acc"
                                                              : "val_cox_nll");

  std::vector<int> order = train_idx;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int steps = 0, epoch_events = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(config.image_batch)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(config.image_batch));
      if (end - begin < 2) continue;  // batch statistics need two samples
      if (objective == Objective::cox) {
        int events = 0;
        for (size_t i = begin; i < end; ++i)
          events += data.records[static_cast<size_t>(order[i])].event ? 1 : 0;
        epoch_events += events;
        if (events == 0) continue;  // risk sets need an observed event
      }
      Tape tape;
      auto batch = stack_grids(data.grids, order, begin, end);
      auto out = wsi_forward(tape, spec, params, batch, Mode::train, rng);
      TensorPtr data_loss;
      switch (objective) {
        case Objective::mse: {
          auto target = make_tensor({static_cast<int>(end - begin)});
          for (size_t i = begin; i < end; ++i)
            target->data[i - begin] = data.targets[static_cast<size_t>(order[i])];
          data_loss = mse(tape, out, target);
          break;
        }
        case Objective::ce: {
          std::vector<int> labels;
          for (size_t i = begin; i < end; ++i)
            labels.push_back(data.labels[static_cast<size_t>(order[i])]);
          data_loss = cross_entropy(tape, out, labels);
          break;
        }
        case Objective::cox: {
          std::vector<double> times;
          std::vector<uint8_t> events;
          for (size_t i = begin; i < end; ++i) {
            const auto& r = data.records[static_cast<size_t>(order[i])];
            times.push_back(r.follow_up);
            events.push_back(r.event ? 1 : 0);
          }
          data_loss = cox_loss(tape, out, times, events);
          break;
        }
      }
      auto loss = add(tape, data_loss, l2_penalty(tape, l2_weights, spec.l2_coeff));
      if (!std::isfinite(loss->data[0]))
        throw std::runtime_error("train_image_level: non-finite loss");
      params.zero_grad();
      tape.backward(loss);
      adam_step(adam, trainable, sched.lr);
      loss_sum += loss->data[0];
      ++steps;
    }
    if (objective == Objective::cox && epoch_events == 0)
      throw std::runtime_error("train_image_level: no observed events in epoch");

    // validation metric, dropout off
    double val_metric = 0.0;
    auto preds = predict_image_level(spec, params, data.grids, val_idx);
    if (objective == Objective::mse) {
      for (size_t i = 0; i < val_idx.size(); ++i) {
        const double d = preds[i] - data.targets[static_cast<size_t>(val_idx[i])];
        val_metric += d * d;
      }
      val_metric /= static_cast<double>(val_idx.size());
    } else if (objective == Objective::ce) {
      int correct = 0;
      for (size_t i = 0; i < val_idx.size(); ++i)
        if ((preds[i] > 0.5 ? 1 : 0) == data.labels[static_cast<size_t>(val_idx[i])])
          ++correct;
      val_metric = static_cast<double>(correct) / static_cast<double>(val_idx.size());
    } else {
      std::vector<double> times;
      std::vector<uint8_t> events;
      bool any = false;
      for (int i : val_idx) {
        const auto& r = data.records[static_cast<size_t>(i)];
        times.push_back(r.follow_up);
        events.push_back(r.event ? 1 : 0);
        any = any || r.event;
      }
      if (any) {
        Tape tape;
        auto risk = make_tensor({static_cast<int>(preds.size())});
        risk->data = preds;
        val_metric = cox_loss(tape, risk, times, events)->data[0];
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = sched.lr;
    rec.train_loss = steps > 0 ? loss_sum / steps : 0.0;
    rec.val_metrics.push_back(val_metric);
    history.epochs.push_back(rec);
    if (!plateau_step(sched, val_metric)) break;
  }
  return history;
}

}  // namespace nic
