#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

#include "mmcp/core/rng.hpp"
#include "mmcp/nn/tape.hpp"

namespace mmcp::nn {

// Named parameter tensors plus optimizer state. Entry order is creation order
// and defines the serialization layout, so it must be deterministic.
template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    std::vector<int> logical_shape;  // as reported in checkpoints
    Mat<T> value;
    Mat<T> grad;
    Mat<T> adam_m;
    Mat<T> adam_v;
  };

  std::vector<Entry> entries;
  std::map<std::string, int> index;

  int add(const std::string& name, int rows, int cols, std::vector<int> logical_shape = {}) {
    if (index.count(name) > 0)
      throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    Entry e;
    e.name = name;
    e.logical_shape = logical_shape.empty() ? std::vector<int>{rows, cols}
                                            : std::move(logical_shape);
    e.value = Mat<T>::Zero(rows, cols);
    e.grad = Mat<T>::Zero(rows, cols);
    e.adam_m = Mat<T>::Zero(rows, cols);
    e.adam_v = Mat<T>::Zero(rows, cols);
    const int id = static_cast<int>(entries.size());
    entries.push_back(std::move(e));
    index.emplace(name, id);
    return id;
  }

  bool has(const std::string& name) const { return index.count(name) > 0; }

  Entry& at(const std::string& name) { return entries[index.at(name)]; }
  const Entry& at(const std::string& name) const { return entries[index.at(name)]; }

  void zero_grad() {
    for (auto& e : entries) e.grad.setZero();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  // Uniform init in +-1/sqrt(fan_in), applied to weights and biases alike.
  void init_uniform(const std::string& name, Rng& rng, int fan_in) {
    auto& e = at(name);
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index j = 0; j < e.value.cols(); ++j) {
      for (Eigen::Index i = 0; i < e.value.rows(); ++i) {
        e.value(i, j) = static_cast<T>(rng.uniform(-s, s));
      }
    }
  }
};

// Binds store entries to tape leaves for one forward/backward pass.
template <typename T>
class ParamBinding {
 public:
  ParamBinding(Tape<T>& tape, ParamStore<T>& store) : tape_(&tape), store_(&store) {}

  int use(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const int node = tape_->leaf(store_->at(name).value);
    cache_.emplace(name, node);
    return node;
  }

  // Copy accumulated tape gradients back into the store (adds onto whatever
  // is already there).
  void collect_grads() {
    for (const auto& [name, node] : cache_) {
      if (tape_->has_grad(node)) store_->at(name).grad += tape_->grad(node);
    }
  }

 private:
  Tape<T>* tape_;
  ParamStore<T>* store_;
  std::map<std::string, int> cache_;
};

// Adam with bias correction. Deterministic given the gradient sequence.
template <typename T>
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // `frozen` returns true for entries that must not move (their value, grad
  // and optimizer state stay bit-identical).
  template <typename FrozenFn>
  void step(ParamStore<T>& store, FrozenFn&& frozen) {
    ++t_;
    const T b1 = static_cast<T>(beta1_);
    const T b2 = static_cast<T>(beta2_);
    const T c1 = static_cast<T>(1.0 - std::pow(beta1_, t_));
    const T c2 = static_cast<T>(1.0 - std::pow(beta2_, t_));
    const T lr = static_cast<T>(lr_);
    const T eps = static_cast<T>(eps_);
    for (auto& e : store.entries) {
      if (frozen(e.name)) continue;
      e.adam_m = b1 * e.adam_m + (T(1) - b1) * e.grad;
      e.adam_v = (b2 * e.adam_v.array() + (T(1) - b2) * e.grad.array().square()).matrix();
      const auto mhat = e.adam_m.array() / c1;
      const auto vhat = e.adam_v.array() / c2;
      e.value.array() -= lr * mhat / (vhat.sqrt() + eps);
    }
  }

  void step(ParamStore<T>& store) {
    step(store, [](const std::string&) { return false; });
  }

  int iterations() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

}  // namespace mmcp::nn
