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

#include <stdexcept>
#include <string>
#include <string_view>

namespace irr {

enum class Errc {
  io_failure,
  malformed_header,
  byte_length_mismatch,
  duplicate_name,
  unsupported_dtype,
  incompatible,
  invalid_argument,
  invalid_mask,
  shape_mismatch,
  token_out_of_range,
  non_finite,
  singular_hessian,
  missing_calibration,
  precondition,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace irr
