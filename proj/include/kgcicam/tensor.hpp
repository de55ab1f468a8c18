#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgcicam {

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct LabelError : std::runtime_error {
  explicit LabelError(const std::string& what) : std::runtime_error(what) {}
};

struct IngestionError : std::runtime_error {
  explicit IngestionError(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major tensor of doubles, rank 0..4.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), v_(numel_of(shape_), 0.0) {}
  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), v_(std::move(data)) {
    if (static_cast<size_t>(numel_of(shape_)) != v_.size())
      throw DimensionError("Tensor: data size does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(double x) { return Tensor({}, {x}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  long numel() const { return static_cast<long>(v_.size()); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& operator[](long i) { return v_[static_cast<size_t>(i)]; }
  double operator[](long i) const { return v_[static_cast<size_t>(i)]; }

  double& at(int i) { return v_[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return v_[static_cast<size_t>(i) * shape_[1] + j]; }
  double& at(int i, int j, int k) {
    return v_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  double at(int i) const { return v_[static_cast<size_t>(i)]; }
  double at(int i, int j) const { return v_[static_cast<size_t>(i) * shape_[1] + j]; }
  double at(int i, int j, int k) const {
    return v_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }

  double item() const {
    if (v_.size() != 1) throw DimensionError("Tensor::item on non-scalar");
    return v_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  static long numel_of(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape) {
      if (d < 0) throw DimensionError("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> v_;
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline void require_shape(const Tensor& t, const std::vector<int>& shape,
                          const char* what) {
  if (t.shape() != shape)
    throw DimensionError(std::string(what) + ": expected " + shape_str(shape) +
                         " got " + shape_str(t.shape()));
}

}  // namespace kgcicam
