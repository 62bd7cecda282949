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

#include "irr/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace irr {

static_assert(std::endian::native == std::endian::little, "payload is written in host byte order");

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kMaxHeaderBytes = 100u << 20;

template <typename Scalar>
std::string header_json(const NamedTensors<Scalar>& tensors) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors.entries) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(t.size()) * sizeof(Scalar);
    header[name] = {{"dtype", dtype_name(dtype_of<Scalar>::value)},
                    {"shape", t.shape()},
                    {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  if (!tensors.metadata.empty()) header["__metadata__"] = tensors.metadata;
  return header.dump();
}

std::string slots_json(const std::vector<CheckpointWriter::Slot>& slots,
                       const std::map<std::string, std::string>& metadata) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& slot : slots) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(numel(slot.shape)) * dtype_size(slot.dtype);
    header[slot.name] = {{"dtype", dtype_name(slot.dtype)},
                         {"shape", slot.shape},
                         {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  if (!metadata.empty()) header["__metadata__"] = metadata;
  return header.dump();
}

// Length prefix plus header padded with spaces to an 8-byte boundary.
std::string frame_header(std::string text) {
  while ((text.size() % 8) != 0) text.push_back(' ');
  std::string out(8, '\0');
  const std::uint64_t n = text.size();
  std::memcpy(out.data(), &n, 8);
  out += text;
  return out;
}

template <typename Scalar>
void append_payload(std::string& out, const BasicTensor<Scalar>& t) {
  const auto* bytes = reinterpret_cast<const char*>(t.data().data());
  out.append(bytes, static_cast<std::size_t>(t.size()) * sizeof(Scalar));
}

template <typename Scalar>
BasicTensor<Scalar> decode(const TensorRecord& rec, const char* payload) {
  if (rec.dtype != dtype_of<Scalar>::value) {
    throw Error(Errc::unsupported_dtype, "tensor \"" + rec.name + "\" is " + std::string(dtype_name(rec.dtype)) +
                                             ", expected " + std::string(dtype_name(dtype_of<Scalar>::value)));
  }
  VectorX<Scalar> data(numel(rec.shape));
  if (data.size() > 0) std::memcpy(data.data(), payload + rec.begin, rec.end - rec.begin);
  return BasicTensor<Scalar>(rec.shape, std::move(data));
}

std::uint64_t read_length_prefix(std::string_view bytes) {
  if (bytes.size() < 8) throw Error(Errc::malformed_header, "file shorter than the length prefix");
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data(), 8);
  return n;
}

}  // namespace

const TensorRecord& CheckpointHeader::find(const std::string& name) const {
  auto it = std::lower_bound(tensors.begin(), tensors.end(), name,
                             [](const TensorRecord& r, const std::string& n) { return r.name < n; });
  if (it == tensors.end() || it->name != name) {
    throw Error(Errc::incompatible, "no tensor named \"" + name + "\"");
  }
  return *it;
}

CheckpointHeader parse_header(std::string_view json_text, std::uint64_t payload_size) {
  std::set<std::string> seen;
  std::string duplicate;
  json::parser_callback_t on_event = [&](int depth, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::key && depth == 1) {
      auto key = parsed.get<std::string>();
      if (!seen.insert(key).second && duplicate.empty()) duplicate = key;
    }
    return true;
  };

  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end(), on_event);
  } catch (const json::parse_error& e) {
    throw Error(Errc::malformed_header, e.what());
  }
  if (!duplicate.empty()) throw Error(Errc::duplicate_name, "tensor \"" + duplicate + "\" appears twice");
  if (!doc.is_object()) throw Error(Errc::malformed_header, "header is not a JSON object");

  CheckpointHeader header;
  header.payload_size = payload_size;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "__metadata__") {
        if (!value.is_object()) throw Error(Errc::malformed_header, "__metadata__ is not an object");
        for (const auto& [mk, mv] : value.items()) {
          if (!mv.is_string()) throw Error(Errc::malformed_header, "metadata value for \"" + mk + "\" is not a string");
          header.metadata[mk] = mv.get<std::string>();
        }
        continue;
      }
      if (!value.is_object() || !value.contains("dtype") || !value.contains("shape") ||
          !value.contains("data_offsets")) {
        throw Error(Errc::malformed_header, "entry \"" + key + "\" lacks dtype/shape/data_offsets");
      }
      TensorRecord rec;
      rec.name = key;
      rec.dtype = dtype_from_name(value.at("dtype").get<std::string>());
      rec.shape = value.at("shape").get<Shape>();
      for (auto d : rec.shape) {
        if (d < 0) throw Error(Errc::malformed_header, "negative dimension in \"" + key + "\"");
      }
      const auto& offsets = value.at("data_offsets");
      if (!offsets.is_array() || offsets.size() != 2) {
        throw Error(Errc::malformed_header, "data_offsets of \"" + key + "\" must be [begin, end]");
      }
      rec.begin = offsets[0].get<std::uint64_t>();
      rec.end = offsets[1].get<std::uint64_t>();
      if (rec.end < rec.begin) throw Error(Errc::malformed_header, "data_offsets of \"" + key + "\" decrease");
      const auto expected = static_cast<std::uint64_t>(numel(rec.shape)) * dtype_size(rec.dtype);
      if (rec.end - rec.begin != expected) {
        throw Error(Errc::byte_length_mismatch, "\"" + key + "\" spans " + std::to_string(rec.end - rec.begin) +
                                                    " bytes but shape " + shape_string(rec.shape) + " needs " +
                                                    std::to_string(expected));
      }
      header.tensors.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_header, e.what());
  }

  // Payload must be covered exactly, without gaps or overlap.
  std::vector<const TensorRecord*> by_offset;
  for (const auto& r : header.tensors) by_offset.push_back(&r);
  std::sort(by_offset.begin(), by_offset.end(), [](auto* a, auto* b) {
    return a->begin != b->begin ? a->begin < b->begin : a->end < b->end;
  });
  std::uint64_t cursor = 0;
  for (const auto* r : by_offset) {
    if (r->begin != cursor) throw Error(Errc::malformed_header, "payload of \"" + r->name + "\" is not contiguous");
    cursor = r->end;
  }
  if (cursor != payload_size) {
    throw Error(Errc::byte_length_mismatch, "header declares " + std::to_string(cursor) + " payload bytes, file has " +
                                                std::to_string(payload_size));
  }
  std::sort(header.tensors.begin(), header.tensors.end(),
            [](const TensorRecord& a, const TensorRecord& b) { return a.name < b.name; });
  return header;
}

template <typename Scalar>
std::string serialize(const NamedTensors<Scalar>& tensors) {
  std::string out = frame_header(header_json(tensors));
  for (const auto& [_, t] : tensors.entries) append_payload(out, t);
  return out;
}

template <typename Scalar>
NamedTensors<Scalar> deserialize(std::string_view bytes) {
  const std::uint64_t n = read_length_prefix(bytes);
  if (n > kMaxHeaderBytes || n > bytes.size() - 8) {
    throw Error(Errc::malformed_header, "header length " + std::to_string(n) + " exceeds file");
  }
  auto header = parse_header(bytes.substr(8, n), bytes.size() - 8 - n);
  const char* payload = bytes.data() + 8 + n;
  NamedTensors<Scalar> out;
  out.metadata = header.metadata;
  for (const auto& rec : header.tensors) out.entries.emplace(rec.name, decode<Scalar>(rec, payload));
  return out;
}

template <typename Scalar>
void save_checkpoint(const NamedTensors<Scalar>& tensors, const std::filesystem::path& path) {
  const auto bytes = serialize(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io_failure, "write to " + path.string() + " failed");
}

template <typename Scalar>
NamedTensors<Scalar> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize<Scalar>(buf.str());
}

ParamSet load_checkpoint(const std::filesystem::path& path) { return ParamSet{load_tensors<float>(path)}; }

CheckpointReader::CheckpointReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw Error(Errc::io_failure, "cannot open " + path.string());
  in_.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in_.tellg());
  in_.seekg(0);
  char prefix[8];
  if (file_size < 8 || !in_.read(prefix, 8)) throw Error(Errc::malformed_header, "file shorter than the length prefix");
  const std::uint64_t n = read_length_prefix(std::string_view(prefix, 8));
  if (n > kMaxHeaderBytes || n > file_size - 8) {
    throw Error(Errc::malformed_header, "header length " + std::to_string(n) + " exceeds file");
  }
  std::string text(n, '\0');
  in_.read(text.data(), static_cast<std::streamsize>(n));
  header_ = parse_header(text, file_size - 8 - n);
  header_.payload_offset = 8 + n;
}

bool CheckpointReader::contains(const std::string& name) const {
  auto it = std::lower_bound(header_.tensors.begin(), header_.tensors.end(), name,
                             [](const TensorRecord& r, const std::string& n) { return r.name < n; });
  return it != header_.tensors.end() && it->name == name;
}

template <typename Scalar>
BasicTensor<Scalar> CheckpointReader::read(const std::string& name) {
  const auto& rec = header_.find(name);
  if (rec.dtype != dtype_of<Scalar>::value) {
    throw Error(Errc::unsupported_dtype, "tensor \"" + name + "\" is " + std::string(dtype_name(rec.dtype)));
  }
  VectorX<Scalar> data(numel(rec.shape));
  in_.seekg(static_cast<std::streamoff>(header_.payload_offset + rec.begin));
  if (data.size() > 0 &&
      !in_.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(rec.end - rec.begin))) {
    throw Error(Errc::io_failure, "short read of \"" + name + "\" from " + path_.string());
  }
  return BasicTensor<Scalar>(rec.shape, std::move(data));
}

CheckpointWriter::CheckpointWriter(const std::filesystem::path& path, std::vector<Slot> slots,
                                   std::map<std::string, std::string> metadata)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), slots_(std::move(slots)) {
  if (!out_) throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  std::sort(slots_.begin(), slots_.end(), [](const Slot& a, const Slot& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < slots_.size(); ++i) {
    if (slots_[i].name == slots_[i - 1].name) throw Error(Errc::duplicate_name, slots_[i].name);
  }
  const auto framed = frame_header(slots_json(slots_, metadata));
  out_.write(framed.data(), static_cast<std::streamsize>(framed.size()));
}

CheckpointWriter::~CheckpointWriter() = default;

template <typename Scalar>
void CheckpointWriter::write(const std::string& name, const BasicTensor<Scalar>& tensor) {
  if (next_ >= slots_.size() || slots_[next_].name != name) {
    throw Error(Errc::precondition, "tensor \"" + name + "\" written out of order");
  }
  const auto& slot = slots_[next_];
  if (slot.dtype != dtype_of<Scalar>::value || slot.shape != tensor.shape()) {
    throw Error(Errc::shape_mismatch, "tensor \"" + name + "\" does not match its declared slot");
  }
  out_.write(reinterpret_cast<const char*>(tensor.data().data()),
             static_cast<std::streamsize>(static_cast<std::size_t>(tensor.size()) * sizeof(Scalar)));
  if (!out_) throw Error(Errc::io_failure, "write to " + path_.string() + " failed");
  ++next_;
}

void CheckpointWriter::finish() {
  if (next_ != slots_.size()) {
    throw Error(Errc::precondition, std::to_string(slots_.size() - next_) + " tensors were never written");
  }
  out_.flush();
  if (!out_) throw Error(Errc::io_failure, "flush of " + path_.string() + " failed");
  finished_ = true;
}

#define IRR_INSTANTIATE(S)                                                               \
  template std::string serialize<S>(const NamedTensors<S>&);                             \
  template NamedTensors<S> deserialize<S>(std::string_view);                             \
  template void save_checkpoint<S>(const NamedTensors<S>&, const std::filesystem::path&); \
  template NamedTensors<S> load_tensors<S>(const std::filesystem::path&);                \
  template BasicTensor<S> CheckpointReader::read<S>(const std::string&);                 \
  template void CheckpointWriter::write<S>(const std::string&, const BasicTensor<S>&);

IRR_INSTANTIATE(float)
IRR_INSTANTIATE(double)
IRR_INSTANTIATE(std::uint8_t)

#undef IRR_INSTANTIATE

}  // namespace irr
