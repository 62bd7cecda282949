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

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "irr/tensor.hpp"

namespace irr {

// On-disk layout (safetensors-compatible):
//   u64 little-endian header length N
//   N bytes of UTF-8 JSON: {name: {"dtype", "shape", "data_offsets": [begin, end]},
//                           "__metadata__": {string: string}}
//   contiguous little-endian payload, tensors in lexicographic name order.

struct TensorRecord {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
};

struct CheckpointHeader {
  std::vector<TensorRecord> tensors;  // lexicographic
  std::map<std::string, std::string> metadata;
  std::uint64_t payload_offset = 0;   // absolute file offset of the payload
  std::uint64_t payload_size = 0;

  const TensorRecord& find(const std::string& name) const;
};

/// Parses and validates a header against the total byte count that follows
/// the length prefix.
CheckpointHeader parse_header(std::string_view json_text, std::uint64_t payload_size);

template <typename Scalar>
std::string serialize(const NamedTensors<Scalar>& tensors);

template <typename Scalar>
NamedTensors<Scalar> deserialize(std::string_view bytes);

template <typename Scalar>
void save_checkpoint(const NamedTensors<Scalar>& tensors, const std::filesystem::path& path);

template <typename Scalar>
NamedTensors<Scalar> load_tensors(const std::filesystem::path& path);

ParamSet load_checkpoint(const std::filesystem::path& path);

/// Random-access reader: parses the header once, then reads one tensor at a
/// time so callers can stream a checkpoint layer by layer.
class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path);

  const CheckpointHeader& header() const { return header_; }
  const std::map<std::string, std::string>& metadata() const { return header_.metadata; }
  bool contains(const std::string& name) const;

  template <typename Scalar>
  BasicTensor<Scalar> read(const std::string& name);

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  CheckpointHeader header_;
};

/// Streaming writer. The full tensor table (names, dtypes, shapes) is fixed at
/// construction; tensors must then be written in lexicographic order. The
/// resulting file is byte-identical to save_checkpoint on the same contents.
class CheckpointWriter {
 public:
  struct Slot {
    std::string name;
    DType dtype;
    Shape shape;
  };

  CheckpointWriter(const std::filesystem::path& path, std::vector<Slot> slots,
                   std::map<std::string, std::string> metadata);
  ~CheckpointWriter();

  template <typename Scalar>
  void write(const std::string& name, const BasicTensor<Scalar>& tensor);

  /// Throws if any slot was not written.
  void finish();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::vector<Slot> slots_;
  std::size_t next_ = 0;
  bool finished_ = false;
};

}  // namespace irr
