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

#include <cstring>
#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "irr/checkpoint.hpp"
#include "irr/error.hpp"
#include "support.hpp"

namespace irr {
namespace {

using testing::random_params;
using testing::scratch_dir;

std::string with_prefix(const std::string& header, const std::string& payload) {
  std::string out(8, '\0');
  const std::uint64_t n = header.size();
  for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = static_cast<char>((n >> (8 * i)) & 0xff);
  return out + header + payload;
}

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no irr::Error thrown";
  return Errc::precondition;
}

TEST(Checkpoint, SingleTensorRoundTrip) {
  const auto dir = scratch_dir("ckpt_single");
  ParamSet p;
  p.entries.emplace("w", Tensor({2, 2}, Eigen::VectorXf{{1.f, 2.f, 3.f, 4.f}}));
  save_checkpoint(p, dir / "w.safetensors");
  const auto q = load_checkpoint(dir / "w.safetensors");
  ASSERT_EQ(q.size(), 1u);
  EXPECT_EQ(q.at("w").shape(), (Shape{2, 2}));
  EXPECT_EQ(q.at("w").matrix()(0, 1), 2.f);
  EXPECT_EQ(q.at("w").matrix()(1, 0), 3.f);
  EXPECT_EQ(q, p);
}

TEST(Checkpoint, EmptyTableIsValid) {
  const auto dir = scratch_dir("ckpt_empty");
  save_checkpoint(ParamSet{}, dir / "e.safetensors");
  EXPECT_EQ(load_checkpoint(dir / "e.safetensors").size(), 0u);
}

TEST(Checkpoint, DeclaredBytesExceedPayload) {
  const std::string header = R"({"w":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}})";
  const auto bytes = with_prefix(header, std::string(12, '\0'));
  try {
    deserialize<float>(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::byte_length_mismatch);
    EXPECT_NE(std::string(e.what()).find("byte-length mismatch"), std::string::npos);
  }
}

TEST(Checkpoint, SpanDisagreesWithShape) {
  const std::string header = R"({"w":{"dtype":"F32","shape":[3],"data_offsets":[0,16]}})";
  EXPECT_EQ(code_of([&] { deserialize<float>(with_prefix(header, std::string(16, '\0'))); }),
            Errc::byte_length_mismatch);
}

TEST(Checkpoint, TrailingBytesRejected) {
  const std::string header = R"({"w":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})";
  EXPECT_EQ(code_of([&] { deserialize<float>(with_prefix(header, std::string(12, '\0'))); }),
            Errc::byte_length_mismatch);
}

TEST(Checkpoint, DuplicateNameRejected) {
  const std::string header =
      R"({"w":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"w":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}})";
  EXPECT_EQ(code_of([&] { deserialize<float>(with_prefix(header, std::string(8, '\0'))); }), Errc::duplicate_name);
}

TEST(Checkpoint, MalformedHeaders) {
  EXPECT_EQ(code_of([&] { deserialize<float>(std::string("abc")); }), Errc::malformed_header);
  EXPECT_EQ(code_of([&] { deserialize<float>(with_prefix("{not json", "")); }), Errc::malformed_header);
  EXPECT_EQ(code_of([&] { deserialize<float>(with_prefix(R"({"w":{"dtype":"F32"}})", "")); }),
            Errc::malformed_header);
  // Overlapping spans.
  const std::string overlap =
      R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"b":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}})";
  EXPECT_NE(code_of([&] { deserialize<float>(with_prefix(overlap, std::string(8, '\0'))); }), Errc::io_failure);
}

TEST(Checkpoint, UnsupportedDtype) {
  const std::string header = R"({"w":{"dtype":"BF16","shape":[2],"data_offsets":[0,4]}})";
  EXPECT_EQ(code_of([&] { deserialize<float>(with_prefix(header, std::string(4, '\0'))); }),
            Errc::unsupported_dtype);
  // A valid F64 file loaded as float.
  NamedTensors<double> d;
  d.entries.emplace("x", BasicTensor<double>({2}));
  EXPECT_EQ(code_of([&] { deserialize<float>(serialize(d)); }), Errc::unsupported_dtype);
}

TEST(Checkpoint, MissingFile) {
  EXPECT_EQ(code_of([] { load_checkpoint("/nonexistent/irr/none.safetensors"); }), Errc::io_failure);
}

TEST(Checkpoint, HeaderIsAlignedAndSafetensorsShaped) {
  std::mt19937_64 rng(3);
  const auto p = random_params(rng);
  const auto bytes = serialize(p);
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  EXPECT_EQ((8 + n) % 8, 0u);
  const auto doc = nlohmann::json::parse(bytes.substr(8, n));
  EXPECT_EQ(doc["layer.0.bias"]["dtype"], "F32");
}

TEST(Checkpoint, RandomRoundTripLaw) {
  const auto dir = scratch_dir("ckpt_law");
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_params(rng);
    p.metadata["trial"] = std::to_string(trial);
    const auto path = dir / "p.safetensors";
    save_checkpoint(p, path);
    const auto q = load_checkpoint(path);
    ASSERT_EQ(q.names(), p.names());
    for (const auto& [name, t] : p.entries) {
      ASSERT_EQ(q.at(name).shape(), t.shape());
      ASSERT_EQ(std::memcmp(q.at(name).data().data(), t.data().data(), sizeof(float) * t.size()), 0);
    }
    EXPECT_EQ(q.metadata, p.metadata);
  }
}

TEST(Checkpoint, NonFiniteValuesSurviveBitwise) {
  ParamSet p;
  Tensor t({3});
  t[0] = std::numeric_limits<float>::quiet_NaN();
  t[1] = -0.0f;
  t[2] = std::numeric_limits<float>::infinity();
  p.entries.emplace("w", t);
  const auto q = deserialize<float>(serialize(p));
  EXPECT_EQ(std::memcmp(q.at("w").data().data(), t.data().data(), sizeof(float) * 3), 0);
}

TEST(Checkpoint, MetadataPreserved) {
  const auto dir = scratch_dir("ckpt_meta");
  ParamSet p;
  p.entries.emplace("w", Tensor({1}));
  p.metadata["model"] = "ref-v1";
  save_checkpoint(p, dir / "m.safetensors");
  EXPECT_EQ(load_checkpoint(dir / "m.safetensors").metadata.at("model"), "ref-v1");
}

TEST(Checkpoint, SavesAreByteIdentical) {
  const auto dir = scratch_dir("ckpt_det");
  std::mt19937_64 rng(5);
  const auto p = random_params(rng);
  save_checkpoint(p, dir / "a.safetensors");
  save_checkpoint(p, dir / "b.safetensors");
  std::ifstream a(dir / "a.safetensors", std::ios::binary), b(dir / "b.safetensors", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(sa, serialize(p));
}

TEST(Checkpoint, ReaderAndWriterStreamOneTensorAtATime) {
  const auto dir = scratch_dir("ckpt_stream");
  std::mt19937_64 rng(8);
  auto p = random_params(rng);
  p.metadata["k"] = "v";
  save_checkpoint(p, dir / "full.safetensors");

  CheckpointReader reader(dir / "full.safetensors");
  std::vector<CheckpointWriter::Slot> slots;
  for (const auto& rec : reader.header().tensors) slots.push_back({rec.name, rec.dtype, rec.shape});
  CheckpointWriter writer(dir / "copy.safetensors", slots, reader.metadata());
  for (const auto& rec : reader.header().tensors) writer.write(rec.name, reader.read<float>(rec.name));
  writer.finish();

  std::ifstream a(dir / "full.safetensors", std::ios::binary), b(dir / "copy.safetensors", std::ios::binary);
  EXPECT_EQ(std::string((std::istreambuf_iterator<char>(a)), {}), std::string((std::istreambuf_iterator<char>(b)), {}));
  EXPECT_TRUE(reader.contains("layer.0.bias"));
  EXPECT_FALSE(reader.contains("nope"));
  EXPECT_EQ(code_of([&] { reader.read<double>("layer.0.bias"); }), Errc::unsupported_dtype);
}

TEST(Checkpoint, WriterEnforcesOrderAndCompleteness) {
  const auto dir = scratch_dir("ckpt_writer");
  std::vector<CheckpointWriter::Slot> slots{{"a", DType::F32, {2}}, {"b", DType::F32, {1}}};
  {
    CheckpointWriter w(dir / "x.safetensors", slots, {});
    EXPECT_EQ(code_of([&] { w.write("b", Tensor({1})); }), Errc::precondition);
    EXPECT_EQ(code_of([&] { w.write("a", Tensor({3})); }), Errc::shape_mismatch);
    w.write("a", Tensor({2}));
    EXPECT_EQ(code_of([&] { w.finish(); }), Errc::precondition);
  }
}

TEST(Compatibility, IdenticalArchitecturesPass) {
  std::mt19937_64 rng(1);
  const auto p = random_params(rng);
  auto q = p;
  EXPECT_NO_THROW(assert_compatible(p, q));
}

TEST(Compatibility, MissingTensorIsNamed) {
  ParamSet a, b;
  a.entries.emplace("w1", Tensor({1}));
  a.entries.emplace("w2", Tensor({1}));
  b.entries.emplace("w1", Tensor({1}));
  try {
    assert_compatible(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::incompatible);
    EXPECT_NE(std::string(e.what()).find("w2"), std::string::npos);
  }
}

TEST(Compatibility, ShapeMismatchShowsBothShapes) {
  ParamSet a, b;
  a.entries.emplace("w", Tensor({2, 2}));
  b.entries.emplace("w", Tensor({2, 3}));
  try {
    assert_compatible(a, b);
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,2]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
  }
}

}  // namespace
}  // namespace irr
