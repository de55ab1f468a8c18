#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgcicam/graph.hpp"
#include "kgcicam/tensor.hpp"

namespace kgcicam {

// Named parameter tensors with stable (insertion) order.
class ParamStore {
 public:
  int add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter: " + name);
    int id = static_cast<int>(names_.size());
    index_[name] = id;
    names_.push_back(name);
    values_.push_back(std::move(value));
    return id;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  int count() const { return static_cast<int>(names_.size()); }
  const std::string& name(int i) const { return names_[static_cast<size_t>(i)]; }
  Tensor& value(int i) { return values_[static_cast<size_t>(i)]; }
  const Tensor& value(int i) const { return values_[static_cast<size_t>(i)]; }
  Tensor& value(const std::string& name) { return values_[static_cast<size_t>(index(name))]; }
  const Tensor& value(const std::string& name) const {
    return values_[static_cast<size_t>(index(name))];
  }
  int index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  long total_scalars() const {
    long n = 0;
    for (const auto& t : values_) n += t.numel();
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
  std::vector<Tensor> values_;
};

// Binds store parameters to graph leaves for one forward pass. In train mode
// every parameter becomes a tracked leaf; in eval mode an untracked constant.
class BoundParams {
 public:
  BoundParams(Graph& g, const ParamStore& store, bool train)
      : g_(&g), store_(&store), train_(train) {}

  Graph::Id operator()(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    Tensor copy = store_->value(name);
    Graph::Id id = train_ ? g_->leaf(std::move(copy)) : g_->constant(std::move(copy));
    ids_[name] = id;
    return id;
  }

  // After backward(): add each bound leaf's gradient into grads (parallel to
  // store indices).
  void accumulate_grads(std::vector<Tensor>& grads) const {
    for (const auto& [name, id] : ids_) {
      if (!g_->tracked(id)) continue;
      const Tensor& gsrc = g_->grad(id);
      Tensor& gdst = grads[static_cast<size_t>(store_->index(name))];
      for (long i = 0; i < gsrc.numel(); ++i) gdst[i] += gsrc[i];
    }
  }

  bool train_mode() const { return train_; }

 private:
  Graph* g_;
  const ParamStore* store_;
  bool train_;
  std::unordered_map<std::string, Graph::Id> ids_;
};

inline Tensor randn(std::vector<int> shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (long i = 0; i < t.numel(); ++i) t[i] = dist(rng);
  return t;
}

}  // namespace kgcicam
