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

#include "irr/tensor.hpp"

#include <sstream>

namespace irr {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::io_failure: return "io failure";
    case Errc::malformed_header: return "malformed header";
    case Errc::byte_length_mismatch: return "byte-length mismatch";
    case Errc::duplicate_name: return "duplicate name";
    case Errc::unsupported_dtype: return "unsupported dtype";
    case Errc::incompatible: return "incompatible";
    case Errc::invalid_argument: return "invalid argument";
    case Errc::invalid_mask: return "invalid mask";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::token_out_of_range: return "token out of range";
    case Errc::non_finite: return "non-finite value";
    case Errc::singular_hessian: return "singular hessian";
    case Errc::missing_calibration: return "missing calibration";
    case Errc::precondition: return "precondition violated";
  }
  return "unknown";
}

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::F32: return "F32";
    case DType::F64: return "F64";
    case DType::U8: return "U8";
  }
  return "?";
}

DType dtype_from_name(std::string_view name) {
  if (name == "F32") return DType::F32;
  if (name == "F64") return DType::F64;
  if (name == "U8") return DType::U8;
  throw Error(Errc::unsupported_dtype, std::string(name));
}

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
  }
  return 0;
}

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::atomic<std::int64_t> TensorStats::live_{0};
std::atomic<std::int64_t> TensorStats::peak_{0};

std::int64_t TensorStats::live() { return live_.load(); }
std::int64_t TensorStats::peak() { return peak_.load(); }
void TensorStats::reset_peak() { peak_.store(live_.load()); }

void TensorStats::on_create() {
  auto now = ++live_;
  auto prev = peak_.load();
  while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
  }
}

void TensorStats::on_destroy() { --live_; }

}  // namespace irr
