#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace nic {

// Dense row-major double tensor. Gradients live next to the values and are
// sized lazily the first time backward touches the tensor.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("tensor extents must be positive");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  bool is_scalar() const { return data.size() == 1; }

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
  void zero_grad() {
    if (!grad.empty()) grad.assign(grad.size(), 0.0);
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(std::vector<int> shape, double fill = 0.0) {
  return std::make_shared<Tensor>(std::move(shape), fill);
}

inline TensorPtr make_param(std::vector<int> shape, double fill = 0.0) {
  auto t = make_tensor(std::move(shape), fill);
  t->requires_grad = true;
  return t;
}

// Reverse-mode tape. Operations append their output plus a vector-Jacobian
// closure in execution order, which is already topological; backward replays
// the closures in reverse. Gradients of leaf tensors (parameters) accumulate
// across backward calls; gradients of recorded outputs are reset each pass.
class Tape {
 public:
  void record(TensorPtr out, std::function<void()> vjp) {
    entries_.push_back({std::move(out), std::move(vjp)});
  }

  void backward(const TensorPtr& loss) {
    if (!loss->is_scalar()) throw std::invalid_argument("backward: loss must be scalar");
    for (auto& e : entries_) {
      e.out->ensure_grad();
      e.out->zero_grad();
    }
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->vjp();
  }

  void clear() { entries_.clear(); }
  size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    TensorPtr out;
    std::function<void()> vjp;
  };
  std::vector<Entry> entries_;
};

// Named, ordered parameter collection. Buffers (running batch-norm
// statistics) live here too with requires_grad=false; the optimizer skips
// them, the checkpoint stores them.
class ParamStore {
 public:
  TensorPtr add(const std::string& name, TensorPtr t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = params_.size();
    params_.push_back({name, t});
    return t;
  }

  TensorPtr get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no such parameter: " + name);
    return params_[it->second].second;
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, TensorPtr>>& entries() const { return params_; }

  std::vector<TensorPtr> trainable() const {
    std::vector<TensorPtr> out;
    for (const auto& [name, t] : params_)
      if (t->requires_grad) out.push_back(t);
    return out;
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t->zero_grad();
  }

  int64_t trainable_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params_)
      if (t->requires_grad) n += t->numel();
    return n;
  }

 private:
  std::vector<std::pair<std::string, TensorPtr>> params_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace nic
