/*
 * Copyright 2026 The IRR Toolkit Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "irr/error.hpp"

namespace irr {

using Shape = std::vector<std::int64_t>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class DType { F32, F64, U8 };

std::string_view dtype_name(DType dtype);
DType dtype_from_name(std::string_view name);
std::size_t dtype_size(DType dtype);

template <typename Scalar>
struct dtype_of;
template <>
struct dtype_of<float> {
  static constexpr DType value = DType::F32;
};
template <>
struct dtype_of<double> {
  static constexpr DType value = DType::F64;
};
template <>
struct dtype_of<std::uint8_t> {
  static constexpr DType value = DType::U8;
};

std::int64_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Live/peak object counts across every BasicTensor instantiation. Used by the
// streaming-surgery memory harness.
struct TensorStats {
  static std::int64_t live();
  static std::int64_t peak();
  static void reset_peak();

  static void on_create();
  static void on_destroy();

 private:
  static std::atomic<std::int64_t> live_;
  static std::atomic<std::int64_t> peak_;
};

/// Dense row-major tensor. Rank-2 tensors are laid out [rows, cols] so a
/// linear layer weight is [fan_out, fan_in].
template <typename Scalar>
class BasicTensor {
 public:
  using scalar_type = Scalar;
  using Vector = VectorX<Scalar>;
  using MatrixMap = Eigen::Map<RowMatrixX<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrixX<Scalar>>;

  BasicTensor() : shape_{0}, data_(0) { TensorStats::on_create(); }

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(Vector::Zero(checked_numel(shape_))) {
    TensorStats::on_create();
  }

  BasicTensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_numel(shape_) != data_.size()) {
      throw Error(Errc::shape_mismatch, "shape " + shape_string(shape_) + " does not match " +
                                            std::to_string(data_.size()) + " values");
    }
    TensorStats::on_create();
  }

  BasicTensor(const BasicTensor& other) : shape_(other.shape_), data_(other.data_) { TensorStats::on_create(); }
  BasicTensor(BasicTensor&& other) noexcept : shape_(std::move(other.shape_)), data_(std::move(other.data_)) {
    TensorStats::on_create();
  }
  BasicTensor& operator=(const BasicTensor&) = default;
  BasicTensor& operator=(BasicTensor&&) noexcept = default;
  ~BasicTensor() { TensorStats::on_destroy(); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Eigen::Index size() const { return data_.size(); }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  Eigen::Index rows() const { return rank() == 2 ? shape_[0] : 1; }
  Eigen::Index cols() const { return rank() == 2 ? shape_[1] : data_.size(); }

  // Rank-1 tensors view as a single row.
  MatrixMap matrix() { return MatrixMap(data_.data(), rows(), cols()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), rows(), cols()); }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const {
    if constexpr (std::is_floating_point_v<Scalar>) {
      return data_.allFinite();
    } else {
      return true;
    }
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static Eigen::Index checked_numel(const Shape& shape) {
    for (auto d : shape) {
      if (d < 0) throw Error(Errc::shape_mismatch, "negative dimension in " + shape_string(shape));
    }
    return static_cast<Eigen::Index>(numel(shape));
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<float>;

/// Ordered name -> tensor map plus free-form string metadata. Iteration order
/// is lexicographic by name.
template <typename Scalar>
struct NamedTensors {
  using scalar_type = Scalar;
  using tensor_type = BasicTensor<Scalar>;

  std::map<std::string, tensor_type> entries;
  std::map<std::string, std::string> metadata;

  bool contains(const std::string& name) const { return entries.count(name) != 0; }
  std::size_t size() const { return entries.size(); }

  const tensor_type& at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw Error(Errc::incompatible, "no tensor named \"" + name + "\"");
    return it->second;
  }
  tensor_type& at(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw Error(Errc::incompatible, "no tensor named \"" + name + "\"");
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& [name, _] : entries) out.push_back(name);
    return out;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [_, t] : entries) n += t.size();
    return n;
  }

  friend bool operator==(const NamedTensors& a, const NamedTensors& b) {
    return a.entries == b.entries && a.metadata == b.metadata;
  }
};

/// One checkpoint (pre-trained, fine-tuned, aligned, unaligned).
struct ParamSet : NamedTensors<float> {};

template <typename To, typename From>
NamedTensors<To> cast_tensors(const NamedTensors<From>& in) {
  NamedTensors<To> out;
  out.metadata = in.metadata;
  for (const auto& [name, t] : in.entries) out.entries.emplace(name, t.template cast<To>());
  return out;
}

/// Succeeds iff both sets hold the same names with equal shapes. The error
/// names the first mismatch.
template <typename A, typename B>
void assert_compatible(const NamedTensors<A>& a, const NamedTensors<B>& b) {
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  while (ia != a.entries.end() || ib != b.entries.end()) {
    if (ib == b.entries.end() || (ia != a.entries.end() && ia->first < ib->first)) {
      throw Error(Errc::incompatible, "tensor \"" + ia->first + "\" missing from second set");
    }
    if (ia == a.entries.end() || ib->first < ia->first) {
      throw Error(Errc::incompatible, "tensor \"" + ib->first + "\" missing from first set");
    }
    if (ia->second.shape() != ib->second.shape()) {
      throw Error(Errc::incompatible, "tensor \"" + ia->first + "\" has shape " +
                                          shape_string(ia->second.shape()) + " vs " +
                                          shape_string(ib->second.shape()));
    }
    ++ia;
    ++ib;
  }
}

}  // namespace irr
