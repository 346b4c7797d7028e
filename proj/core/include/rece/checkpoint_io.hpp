#pragma once

#include "rece/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rece {

/// Header entry for one tensor. Offsets are relative to the payload, which
/// starts right after the 8-byte length prefix and the JSON header.
struct TensorInfo {
  std::string dtype;
  std::vector<std::int64_t> shape;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;

  std::uint64_t element_count() const;
  friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

/// A parsed tensor file: 8-byte little-endian header length, JSON header,
/// raw payload. Unknown-but-defined dtypes (integers, bool, fp8) are carried
/// through byte-for-byte; only F16/BF16/F32/F64 tensors can be read as
/// matrices.
class TensorFile {
 public:
  TensorFile() = default;

  const std::map<std::string, TensorInfo>& tensors() const noexcept { return tensors_; }
  const std::vector<std::uint8_t>& payload() const noexcept { return payload_; }
  const std::optional<std::map<std::string, std::string>>& metadata() const noexcept {
    return metadata_;
  }
  void set_metadata(std::map<std::string, std::string> metadata) { metadata_ = std::move(metadata); }

  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
  const TensorInfo& info(const std::string& name) const;

  /// Raw bytes of one tensor.
  std::span<const std::uint8_t> bytes(const std::string& name) const;

  /// Tensor values widened to double, row-major flattened.
  std::vector<double> values(const std::string& name) const;

  /// 2-D tensor as a matrix, or a 1-D tensor as a single column.
  Matrix matrix(const std::string& name) const;

  /// Appends a tensor at the end of the payload, stored as `dtype`.
  void add_tensor(const std::string& name, const std::string& dtype,
                  std::vector<std::int64_t> shape, std::span<const double> row_major_values);

  /// Appends a tensor whose bytes are copied verbatim.
  void add_raw_tensor(const std::string& name, const std::string& dtype,
                      std::vector<std::int64_t> shape, std::span<const std::uint8_t> bytes);

  /// Overwrites an existing float tensor in place (same dtype, same shape),
  /// rounding to the on-disk dtype.
  void overwrite(const std::string& name, std::span<const double> row_major_values);

  /// Overwrites an existing tensor's bytes in place.
  void overwrite_raw(const std::string& name, std::span<const std::uint8_t> bytes);

  /// Tensor names in ascending payload order.
  std::vector<std::string> names_by_offset() const;

  /// Same tensor names, dtypes, shapes and bytes (offsets may differ).
  bool same_contents(const TensorFile& other) const;

 private:
  friend TensorFile parse_tensor_file(std::span<const std::uint8_t> bytes);

  std::map<std::string, TensorInfo> tensors_;
  std::vector<std::uint8_t> payload_;
  std::optional<std::map<std::string, std::string>> metadata_;
};

TensorFile parse_tensor_file(std::span<const std::uint8_t> bytes);
TensorFile read_tensor_file(const std::filesystem::path& path);

/// Header is emitted with sorted keys and padded with spaces to a multiple
/// of 8 bytes; the payload is written as stored, so tensor offsets are kept.
std::vector<std::uint8_t> serialize_tensor_file(const TensorFile& file);
void write_tensor_file(const TensorFile& file, const std::filesystem::path& path);

/// Which tensors are cross-attention key/value projections.
struct SelectionPattern {
  /// Every substring must occur in the name.
  std::vector<std::string> include{"attn2"};
  std::string key_suffix = ".to_k.weight";
  std::string value_suffix = ".to_v.weight";
  /// Weights stored as (d x out) instead of (out x d).
  bool transpose = false;

  static SelectionPattern cross_attention() { return {}; }

  /// Kind of projection `name` denotes, or nullopt if not selected.
  std::optional<ProjKind> classify(const std::string& name) const;
};

/// Matching tensors as a layer set sorted by name. Each layer records its
/// on-disk dtype and transpose flag so merge_back can restore the layout.
AttentionLayerSet select_cross_attention(const TensorFile& file, const SelectionPattern& pattern);

/// `original` with every layer of `edited` written into its tensor, in that
/// tensor's dtype and layout. All other bytes are left untouched.
TensorFile merge_back(const AttentionLayerSet& edited, const TensorFile& original);

/// `base` with each tensor of `patch` copied over byte-for-byte. Names,
/// dtypes and shapes must match.
TensorFile merge_tensors(const TensorFile& patch, const TensorFile& base);

/// A standalone tensor file holding just the given layers, in their origin
/// dtype and layout (F32 when a layer has no origin).
TensorFile layers_to_tensor_file(const AttentionLayerSet& layers);

struct ModelStats {
  std::uint64_t total_params = 0;
  std::uint64_t selected_params = 0;
  std::size_t selected_tensors = 0;
  double fraction = 0.0;
};

/// Counts come from header shapes; no payload is decoded.
ModelStats model_stats(const TensorFile& file, const SelectionPattern& pattern);

// Embedding tables: one tensor per concept label, shape [tokens, d] or [d].

/// Embedding for `label`, keeping at most `max_tokens` leading tokens (0 = all).
Embedding embedding_from_file(const TensorFile& file, const std::string& label,
                              Eigen::Index max_tokens = 0);

/// Writes each embedding as [tokens, d] (or [d] for a single token when
/// `pooled_as_vector` is set).
TensorFile embeddings_to_tensor_file(const std::vector<Embedding>& embeddings,
                                     const std::string& dtype = "F32",
                                     bool pooled_as_vector = true);

}  // namespace rece
