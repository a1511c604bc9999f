#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "darsvs/errors.hpp"

namespace darsvs {

template <class Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor. Rank-1 tensors behave as a single row; higher ranks
// view as shape[0] x (product of the remaining dims).
// Storage is aligned to Eigen's packet boundary: vectorised reductions peel
// according to the address, so unaligned buffers would make sums depend on
// where the allocator happened to place them.
template <class Real>
class Tensor {
 public:
  using Storage = std::vector<Real, Eigen::aligned_allocator<Real>>;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape, Real fill = Real(0)) : shape_(std::move(shape)) {
    data_.assign(count(shape_), fill);
  }

  Tensor(std::vector<int> shape, const std::vector<Real>& data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (count(shape_) != data_.size())
      throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_string(shape_));
  }

  static Tensor matrix(int rows, int cols, Real fill = Real(0)) { return Tensor({rows, cols}, fill); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  int rows() const { return shape_.size() >= 2 ? shape_[0] : 1; }
  int cols() const { return rows() == 0 ? 0 : static_cast<int>(data_.size() / static_cast<std::size_t>(rows())); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  std::vector<Real> storage() const { return {data_.begin(), data_.end()}; }

  Real& operator[](std::size_t i) { return data_[i]; }
  const Real& operator[](std::size_t i) const { return data_[i]; }
  Real& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  const Real& at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  std::span<Real> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols(), static_cast<std::size_t>(cols())}; }
  std::span<const Real> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * cols(), static_cast<std::size_t>(cols())};
  }

  Eigen::Map<RowMatrix<Real>> mat() { return {data_.data(), rows(), cols()}; }
  Eigen::Map<const RowMatrix<Real>> mat() const { return {data_.data(), rows(), cols()}; }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  void reshape(std::vector<int> shape) {
    if (count(shape) != data_.size())
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  template <class Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    std::copy(data_.begin(), data_.end(), out.data());
    return out;
  }

  static std::size_t count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw DimensionError("negative dimension in shape " + shape_string(shape));
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  Storage data_;
};

template <class Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  // Buffers (batch-norm running statistics) are persisted but not optimized.
  bool trainable = true;

  void zero_grad() {
    if (grad.same_shape(value))
      grad.fill(Real(0));
    else
      grad = Tensor<Real>(value.shape());
  }
};

// Insertion-ordered collection of named parameters. Addresses stay stable.
template <class Real>
class ParameterSet {
 public:
  Parameter<Real>& add(const std::string& name, std::vector<int> shape, bool trainable = true) {
    if (find(name)) throw ConfigError("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<Real>>();
    p->name = name;
    p->value = Tensor<Real>(shape);
    p->grad = Tensor<Real>(std::move(shape));
    p->trainable = trainable;
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<Real>* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const Parameter<Real>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  Parameter<Real>& get(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw DataError("unknown parameter: " + name);
  }
  const Parameter<Real>& get(const std::string& name) const {
    if (const auto* p = find(name)) return *p;
    throw DataError("unknown parameter: " + name);
  }

  std::size_t size() const { return params_.size(); }
  Parameter<Real>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return *params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
};

template <class Real>
void init_uniform(Parameter<Real>& p, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : p.value.values()) v = static_cast<Real>(dist(rng));
}

}  // namespace darsvs
