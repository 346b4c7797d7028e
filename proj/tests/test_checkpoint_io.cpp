#include "naive.hpp"

#include <rece/checkpoint_io.hpp>
#include <rece/edit_core.hpp>
#include <rece/error.hpp>
#include <rece/synthetic.hpp>

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <numeric>

using namespace rece;

namespace {

std::vector<std::uint8_t> raw_file(const std::string& header, std::vector<std::uint8_t> payload) {
  std::vector<std::uint8_t> out(8);
  const std::uint64_t n = header.size();
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(n >> (8 * i));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::vector<std::uint8_t> f32_bytes(std::initializer_list<float> values) {
  std::vector<std::uint8_t> out(values.size() * 4);
  std::size_t i = 0;
  for (float v : values) std::memcpy(out.data() + 4 * i++, &v, 4);
  return out;
}

FormatErrorCode code_of(const std::vector<std::uint8_t>& bytes) {
  try {
    parse_tensor_file(bytes);
  } catch (const FormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no FormatError";
  return FormatErrorCode::InvalidValue;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rece_test_" + name);
}

}  // namespace

TEST(TensorFile, ParsesHandBuiltIdentity) {
  const auto bytes = raw_file(R"({"eye":{"dtype":"F32","shape":[2,2],"data_offsets":[0,16]}})",
                              f32_bytes({1, 0, 0, 1}));
  const auto file = parse_tensor_file(bytes);
  EXPECT_EQ(file.info("eye").shape, (std::vector<std::int64_t>{2, 2}));
  EXPECT_EQ(file.values("eye"), (std::vector<double>{1, 0, 0, 1}));
  EXPECT_EQ(file.matrix("eye"), Matrix::Identity(2, 2));
  EXPECT_FALSE(file.metadata().has_value());
}

TEST(TensorFile, MalformedInputsReportCodes) {
  EXPECT_EQ(code_of({1, 2, 3}), FormatErrorCode::Truncated);
  auto long_header = raw_file("{}", {});
  long_header[0] = 200;
  EXPECT_EQ(code_of(long_header), FormatErrorCode::Truncated);
  EXPECT_EQ(code_of(raw_file("{not json", {})), FormatErrorCode::MalformedHeader);
  EXPECT_EQ(code_of(raw_file("[]", {})), FormatErrorCode::MalformedHeader);
  EXPECT_EQ(code_of(raw_file(R"({"a":{"dtype":"F32","shape":[2]}})", {})),
            FormatErrorCode::MalformedHeader);
  EXPECT_EQ(code_of(raw_file(R"({"__metadata__":{"k":1}})", {})), FormatErrorCode::MalformedHeader);
  EXPECT_EQ(code_of(raw_file(R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})",
                             f32_bytes({1}))),
            FormatErrorCode::OffsetOutOfRange);
  EXPECT_EQ(code_of(raw_file(R"({"a":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}})",
                             f32_bytes({1, 2}))),
            FormatErrorCode::SizeMismatch);
  EXPECT_EQ(code_of(raw_file(R"({"a":{"dtype":"Q4","shape":[2],"data_offsets":[0,8]}})",
                             f32_bytes({1, 2}))),
            FormatErrorCode::UnsupportedDtype);
  EXPECT_EQ(code_of(raw_file(R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},)"
                             R"("b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}})",
                             f32_bytes({1, 2, 3}))),
            FormatErrorCode::OverlappingRanges);
}

TEST(TensorFile, NonFloatDtypesPassThrough) {
  const auto bytes = raw_file(
      R"({"__metadata__":{"format":"pt"},"ids":{"dtype":"I64","shape":[1],"data_offsets":[0,8]}})",
      {1, 0, 0, 0, 0, 0, 0, 0});
  const auto file = parse_tensor_file(bytes);
  EXPECT_EQ(file.metadata()->at("format"), "pt");
  EXPECT_THROW(file.values("ids"), FormatError);
  const auto again = parse_tensor_file(serialize_tensor_file(file));
  EXPECT_TRUE(again.same_contents(file));
}

TEST(TensorFile, HeaderIsPaddedAndPayloadOffsetsKept) {
  TensorFile f;
  const std::vector<double> v{1, 2, 3};
  f.add_tensor("z", "F16", {3}, v);
  f.add_tensor("a", "F64", {1, 3}, v);
  const auto bytes = serialize_tensor_file(f);
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data(), 8);
  EXPECT_EQ(n % 8, 0u);
  EXPECT_EQ(f.names_by_offset(), (std::vector<std::string>{"z", "a"}));
  const auto back = parse_tensor_file(bytes);
  EXPECT_EQ(back.info("a"), f.info("a"));
  EXPECT_EQ(back.values("a"), v);
  EXPECT_EQ(serialize_tensor_file(back), bytes);
}

TEST(TensorFile, RoundTripThroughDisk) {
  const auto file = make_synthetic_checkpoint(3, 16, 0.05);
  const auto path = temp_path("roundtrip.safetensors");
  write_tensor_file(file, path);
  const auto back = read_tensor_file(path);
  EXPECT_TRUE(back.same_contents(file));
  EXPECT_EQ(back.payload(), file.payload());
  std::filesystem::remove(path);
  EXPECT_THROW(read_tensor_file(temp_path("does_not_exist")), IoError);
}

TEST(TensorFile, OverwriteKeepsDtypeAndShape) {
  TensorFile f;
  const std::vector<double> v{1, 2, 3, 4};
  f.add_tensor("w", "BF16", {2, 2}, v);
  f.overwrite("w", std::vector<double>{0.5, 1.5, -2, 8});
  EXPECT_EQ(f.values("w"), (std::vector<double>{0.5, 1.5, -2, 8}));
  EXPECT_THROW(f.overwrite("w", std::vector<double>{1}), DimensionError);
  EXPECT_THROW(f.add_tensor("w", "F32", {1}, std::vector<double>{1}), FormatError);
  EXPECT_THROW(f.info("missing"), SelectionError);
}

TEST(Selection, DefaultPatternPicksCrossAttentionKv) {
  TensorFile f;
  const std::vector<double> four{1, 2, 3, 4};
  f.add_tensor("blk.attn2.to_k.weight", "F32", {2, 2}, four);
  f.add_tensor("blk.attn2.to_v.weight", "F32", {2, 2}, four);
  f.add_tensor("blk.attn1.to_k.weight", "F32", {2, 2}, four);
  f.add_tensor("blk.attn2.to_q.weight", "F32", {2, 2}, four);
  f.add_tensor("blk.attn2.to_out.0.bias", "F32", {2}, std::vector<double>{1, 2});
  const auto set = select_cross_attention(f, SelectionPattern::cross_attention());
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set[0].name(), "blk.attn2.to_k.weight");
  EXPECT_EQ(set[0].kind(), ProjKind::Key);
  EXPECT_EQ(set[1].kind(), ProjKind::Value);
  EXPECT_EQ(set[0].origin()->dtype, "F32");

  SelectionPattern none;
  none.include = {"attn9"};
  EXPECT_THROW(select_cross_attention(f, none), SelectionError);

  const auto stats = model_stats(f, SelectionPattern::cross_attention());
  EXPECT_EQ(stats.selected_tensors, 2u);
  EXPECT_EQ(stats.total_params, 18u);
  EXPECT_NEAR(stats.fraction, 8.0 / 18.0, 1e-15);
}

TEST(Selection, SyntheticSdCheckpointHas32Matrices) {
  const auto f = make_synthetic_checkpoint(1, 32, 0.05);
  const auto set = select_cross_attention(f, {});
  EXPECT_EQ(set.size(), 32u);
  int keys = 0;
  for (const auto& l : set) keys += l.kind() == ProjKind::Key;
  EXPECT_EQ(keys, 16);
}

TEST(Selection, TransposedLayout) {
  TensorFile f;
  f.add_tensor("x.to_k.weight", "F64", {3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  SelectionPattern p;
  p.include = {};
  p.transpose = true;
  const auto set = select_cross_attention(f, p);
  EXPECT_EQ(set[0].out_dim(), 2);
  EXPECT_EQ(set[0].embed_dim(), 3);
  EXPECT_EQ(set[0].weights()(0, 1), 3);
  const auto merged = merge_back(set, f);
  EXPECT_TRUE(merged.same_contents(f));
}

TEST(Stats, FractionEdgeCases) {
  TensorFile one;
  one.add_tensor("a.attn2.to_k.weight", "F32", {2, 2}, std::vector<double>(4, 1.0));
  EXPECT_EQ(model_stats(one, {}).fraction, 1.0);
  one.add_tensor("b.attn1.to_k.weight", "F32", {2, 2}, std::vector<double>(4, 1.0));
  EXPECT_EQ(model_stats(one, {}).fraction, 0.5);
}

TEST(Merge, UneditedIsIdentityAndEditTouchesOnlySelectedRanges) {
  const auto f = make_synthetic_checkpoint(4, 24, 0.05);
  const auto set = select_cross_attention(f, {});
  EXPECT_EQ(serialize_tensor_file(merge_back(set, f)), serialize_tensor_file(f));

  RandomSource rng(4);
  const std::vector<ConceptTask> erase{{rng.embedding(24, 1), rng.embedding(24, 1), "c"}};
  const auto edited = edit_layer_set(set, erase, {}, 0.1, 0.1);
  const auto merged = merge_back(edited, f);
  ASSERT_EQ(merged.payload().size(), f.payload().size());
  std::vector<bool> selected(f.payload().size(), false);
  for (const auto& l : set) {
    const auto& info = f.info(l.name());
    for (auto i = info.begin; i < info.end; ++i) selected[i] = true;
  }
  std::size_t changed = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (merged.payload()[i] != f.payload()[i]) {
      ++changed;
      EXPECT_TRUE(selected[i]) << "byte " << i;
    }
  }
  EXPECT_GT(changed, 0u);
  const auto reselected = select_cross_attention(merged, {});
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Matrix want = edited[i].weights().cast<float>().cast<double>();
    EXPECT_EQ(reselected[i].weights(), want);
  }
}

TEST(Merge, SnapshotPatchAndShapeDrift) {
  const auto f = make_synthetic_checkpoint(5, 16, 0.05);
  const auto set = select_cross_attention(f, {});
  RandomSource rng(5);
  const std::vector<ConceptTask> erase{{rng.embedding(16, 1), rng.embedding(16, 1), "c"}};
  const auto edited = edit_layer_set(set, erase, {}, 0.1, 0.1);
  const auto patch = layers_to_tensor_file(edited);
  EXPECT_TRUE(merge_tensors(patch, f).same_contents(merge_back(edited, f)));

  TensorFile bad;
  bad.add_tensor(set[0].name(), "F64", {1, 1}, std::vector<double>{1});
  EXPECT_THROW(merge_tensors(bad, f), DimensionError);
  const AttentionLayerSet wrong({ProjectionMatrix(set[0].name(), ProjKind::Key, Matrix::Ones(3, 3))});
  EXPECT_THROW(merge_back(wrong, f), DimensionError);
}

TEST(Embeddings, TableRoundTripAndTokens) {
  RandomSource rng(6);
  const std::vector<Embedding> es{rng.embedding(5, 1, "pooled"), rng.embedding(5, 3, "seq")};
  const auto table = embeddings_to_tensor_file(es, "F64");
  EXPECT_EQ(table.info("pooled").shape, (std::vector<std::int64_t>{5}));
  EXPECT_EQ(table.info("seq").shape, (std::vector<std::int64_t>{3, 5}));
  EXPECT_EQ(embedding_from_file(table, "seq").data(), es[1].data());
  EXPECT_EQ(embedding_from_file(table, "pooled").data(), es[0].data());
  EXPECT_EQ(embedding_from_file(table, "seq", 2).tokens(), 2);
  EXPECT_THROW(embedding_from_file(table, "nope"), SelectionError);
  const auto labels = make_synthetic_embeddings(1, 8);
  for (const char* l : {"concept", "empty_text", "preserve", "probe"}) EXPECT_TRUE(labels.contains(l));
}

TEST(Synthetic, DeterministicInSeed) {
  EXPECT_EQ(serialize_tensor_file(make_synthetic_checkpoint(9, 16, 0.05)),
            serialize_tensor_file(make_synthetic_checkpoint(9, 16, 0.05)));
  EXPECT_NE(serialize_tensor_file(make_synthetic_checkpoint(9, 16, 0.05)),
            serialize_tensor_file(make_synthetic_checkpoint(10, 16, 0.05)));
  EXPECT_EQ(sd_cross_attention_widths().size(), 16u);
}
