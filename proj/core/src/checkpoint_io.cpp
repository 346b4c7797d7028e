#include "rece/checkpoint_io.hpp"

#include "rece/dtype.hpp"
#include "rece/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>

namespace rece {
namespace {

using json = nlohmann::json;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

FloatType float_type_of(const std::string& name, const TensorInfo& info) {
  if (auto t = parse_float_type(info.dtype)) return *t;
  throw FormatError(FormatErrorCode::UnsupportedDtype,
                    "tensor '" + name + "' has dtype " + info.dtype +
                        "; only F16, BF16, F32 and F64 can be decoded");
}

std::uint64_t expected_bytes(const std::string& name, const TensorInfo& info) {
  const auto width = dtype_byte_width(info.dtype);
  if (!width) {
    throw FormatError(FormatErrorCode::UnsupportedDtype,
                      "tensor '" + name + "' has unknown dtype '" + info.dtype + "'");
  }
  return info.element_count() * *width;
}

std::vector<double> row_major_values(const Matrix& m) {
  RowMajor r = m;
  return {r.data(), r.data() + r.size()};
}

Matrix matrix_from_row_major(const std::vector<double>& values, Eigen::Index rows,
                             Eigen::Index cols) {
  return Eigen::Map<const RowMajor>(values.data(), rows, cols);
}

TensorInfo parse_entry(const std::string& name, const json& entry, std::uint64_t payload_size) {
  auto bad = [&](const std::string& why) {
    return FormatError(FormatErrorCode::MalformedHeader, "tensor '" + name + "': " + why);
  };
  if (!entry.is_object()) throw bad("entry is not an object");
  if (!entry.contains("dtype") || !entry["dtype"].is_string()) throw bad("missing dtype");
  if (!entry.contains("shape") || !entry["shape"].is_array()) throw bad("missing shape");
  if (!entry.contains("data_offsets") || !entry["data_offsets"].is_array() ||
      entry["data_offsets"].size() != 2) {
    throw bad("missing data_offsets");
  }
  TensorInfo info;
  info.dtype = entry["dtype"].get<std::string>();
  for (const auto& dim : entry["shape"]) {
    if (!dim.is_number_unsigned()) throw bad("shape entries must be non-negative integers");
    info.shape.push_back(dim.get<std::int64_t>());
  }
  for (const auto& off : entry["data_offsets"]) {
    if (!off.is_number_unsigned()) throw bad("data_offsets must be non-negative integers");
  }
  info.begin = entry["data_offsets"][0].get<std::uint64_t>();
  info.end = entry["data_offsets"][1].get<std::uint64_t>();
  if (info.begin > info.end || info.end > payload_size) {
    throw FormatError(FormatErrorCode::OffsetOutOfRange,
                      "tensor '" + name + "' spans [" + std::to_string(info.begin) + "," +
                          std::to_string(info.end) + ") of a " + std::to_string(payload_size) +
                          "-byte payload");
  }
  const std::uint64_t want = expected_bytes(name, info);
  if (info.end - info.begin != want) {
    throw FormatError(FormatErrorCode::SizeMismatch,
                      "tensor '" + name + "' of shape " + shape_str(info.shape) + " and dtype " +
                          info.dtype + " needs " + std::to_string(want) + " bytes, range holds " +
                          std::to_string(info.end - info.begin));
  }
  return info;
}

}  // namespace

std::uint64_t TensorInfo::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= static_cast<std::uint64_t>(d);
  return n;
}

const TensorInfo& TensorFile::info(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw SelectionError("no tensor named '" + name + "'");
  return it->second;
}

std::span<const std::uint8_t> TensorFile::bytes(const std::string& name) const {
  const auto& i = info(name);
  return {payload_.data() + i.begin, static_cast<std::size_t>(i.end - i.begin)};
}

std::vector<double> TensorFile::values(const std::string& name) const {
  const auto& i = info(name);
  const FloatType type = float_type_of(name, i);
  const std::size_t width = byte_width(type);
  const auto n = static_cast<std::size_t>(i.element_count());
  std::vector<double> out(n);
  const std::uint8_t* src = payload_.data() + i.begin;
  for (std::size_t k = 0; k < n; ++k) out[k] = load_element(type, src + k * width);
  return out;
}

Matrix TensorFile::matrix(const std::string& name) const {
  const auto& i = info(name);
  if (i.shape.size() == 1) {
    const auto v = values(name);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (i.shape.size() != 2) {
    throw DimensionError("tensor '" + name + "' has shape " + shape_str(i.shape) +
                         ", expected a matrix");
  }
  return matrix_from_row_major(values(name), i.shape[0], i.shape[1]);
}

void TensorFile::add_raw_tensor(const std::string& name, const std::string& dtype,
                                std::vector<std::int64_t> shape,
                                std::span<const std::uint8_t> bytes) {
  if (contains(name)) throw FormatError(FormatErrorCode::InvalidValue, "duplicate tensor '" + name + "'");
  TensorInfo info{dtype, std::move(shape), payload_.size(), payload_.size() + bytes.size()};
  if (expected_bytes(name, info) != bytes.size()) {
    throw FormatError(FormatErrorCode::SizeMismatch,
                      "tensor '" + name + "' of shape " + shape_str(info.shape) + " needs " +
                          std::to_string(expected_bytes(name, info)) + " bytes, got " +
                          std::to_string(bytes.size()));
  }
  payload_.insert(payload_.end(), bytes.begin(), bytes.end());
  tensors_.emplace(name, std::move(info));
}

void TensorFile::add_tensor(const std::string& name, const std::string& dtype,
                            std::vector<std::int64_t> shape,
                            std::span<const double> row_major_values) {
  const auto type = parse_float_type(dtype);
  if (!type) {
    throw FormatError(FormatErrorCode::UnsupportedDtype, "cannot encode doubles as " + dtype);
  }
  const std::size_t width = byte_width(*type);
  std::vector<std::uint8_t> bytes(row_major_values.size() * width);
  for (std::size_t k = 0; k < row_major_values.size(); ++k) {
    store_element(*type, row_major_values[k], bytes.data() + k * width);
  }
  add_raw_tensor(name, dtype, std::move(shape), bytes);
}

void TensorFile::overwrite(const std::string& name, std::span<const double> row_major_values) {
  const auto& i = info(name);
  const FloatType type = float_type_of(name, i);
  if (row_major_values.size() != i.element_count()) {
    throw DimensionError("tensor '" + name + "' holds " + std::to_string(i.element_count()) +
                         " values, got " + std::to_string(row_major_values.size()));
  }
  const std::size_t width = byte_width(type);
  std::uint8_t* dst = payload_.data() + i.begin;
  for (std::size_t k = 0; k < row_major_values.size(); ++k) {
    store_element(type, row_major_values[k], dst + k * width);
  }
}

void TensorFile::overwrite_raw(const std::string& name, std::span<const std::uint8_t> bytes) {
  const auto& i = info(name);
  if (bytes.size() != i.end - i.begin) {
    throw DimensionError("tensor '" + name + "' occupies " + std::to_string(i.end - i.begin) +
                         " bytes, got " + std::to_string(bytes.size()));
  }
  std::memcpy(payload_.data() + i.begin, bytes.data(), bytes.size());
}

std::vector<std::string> TensorFile::names_by_offset() const {
  std::vector<std::string> names;
  names.reserve(tensors_.size());
  for (const auto& [name, info] : tensors_) names.push_back(name);
  std::stable_sort(names.begin(), names.end(), [&](const auto& a, const auto& b) {
    return tensors_.at(a).begin < tensors_.at(b).begin;
  });
  return names;
}

bool TensorFile::same_contents(const TensorFile& other) const {
  if (tensors_.size() != other.tensors_.size() || metadata_ != other.metadata_) return false;
  for (const auto& [name, info] : tensors_) {
    auto it = other.tensors_.find(name);
    if (it == other.tensors_.end()) return false;
    if (it->second.dtype != info.dtype || it->second.shape != info.shape) return false;
    const auto a = bytes(name);
    const auto b = other.bytes(name);
    if (!std::equal(a.begin(), a.end(), b.begin(), b.end())) return false;
  }
  return true;
}

TensorFile parse_tensor_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) {
    throw FormatError(FormatErrorCode::Truncated,
                      "file has " + std::to_string(bytes.size()) + " bytes, need an 8-byte prefix");
  }
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) header_len |= std::uint64_t(bytes[i]) << (8 * i);
  if (header_len > bytes.size() - 8) {
    throw FormatError(FormatErrorCode::Truncated,
                      "header claims " + std::to_string(header_len) + " bytes, file holds " +
                          std::to_string(bytes.size() - 8));
  }
  const std::string_view text(reinterpret_cast<const char*>(bytes.data() + 8),
                              static_cast<std::size_t>(header_len));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorCode::MalformedHeader, e.what());
  }
  if (!header.is_object()) {
    throw FormatError(FormatErrorCode::MalformedHeader, "header is not a JSON object");
  }

  TensorFile file;
  const std::uint64_t payload_size = bytes.size() - 8 - header_len;
  for (const auto& [key, value] : header.items()) {
    if (key == "__metadata__") {
      if (!value.is_object()) {
        throw FormatError(FormatErrorCode::MalformedHeader, "__metadata__ is not an object");
      }
      std::map<std::string, std::string> meta;
      for (const auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) {
          throw FormatError(FormatErrorCode::MalformedHeader,
                            "__metadata__ value for '" + mk + "' is not a string");
        }
        meta.emplace(mk, mv.get<std::string>());
      }
      file.metadata_ = std::move(meta);
      continue;
    }
    file.tensors_.emplace(key, parse_entry(key, value, payload_size));
  }

  const auto order = file.names_by_offset();
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto& prev = file.tensors_.at(order[i - 1]);
    const auto& cur = file.tensors_.at(order[i]);
    if (cur.begin < prev.end) {
      throw FormatError(FormatErrorCode::OverlappingRanges,
                        "tensors '" + order[i - 1] + "' and '" + order[i] + "' overlap");
    }
  }
  const auto* payload = bytes.data() + 8 + header_len;
  file.payload_.assign(payload, payload + payload_size);
  return file;
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  if (size < 0) throw IoError("cannot determine size of '" + path.string() + "'");
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(buf.data()), size)) {
    throw IoError("failed reading '" + path.string() + "'");
  }
  try {
    return parse_tensor_file(buf);
  } catch (Error& e) {
    e.add_context(path.string());
    throw;
  }
}

std::vector<std::uint8_t> serialize_tensor_file(const TensorFile& file) {
  json header = json::object();
  for (const auto& [name, info] : file.tensors()) {
    header[name] = {{"dtype", info.dtype},
                    {"shape", info.shape},
                    {"data_offsets", {info.begin, info.end}}};
  }
  if (file.metadata()) header["__metadata__"] = *file.metadata();
  std::string text = header.dump();
  text.append((8 - text.size() % 8) % 8, ' ');

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + file.payload().size());
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), file.payload().begin(), file.payload().end());
  return out;
}

void write_tensor_file(const TensorFile& file, const std::filesystem::path& path) {
  const auto bytes = serialize_tensor_file(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::optional<ProjKind> SelectionPattern::classify(const std::string& name) const {
  for (const auto& part : include) {
    if (name.find(part) == std::string::npos) return std::nullopt;
  }
  auto ends_with = [&](const std::string& suffix) {
    return !suffix.empty() && name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(key_suffix)) return ProjKind::Key;
  if (ends_with(value_suffix)) return ProjKind::Value;
  return std::nullopt;
}

AttentionLayerSet select_cross_attention(const TensorFile& file, const SelectionPattern& pattern) {
  std::vector<ProjectionMatrix> layers;
  for (const auto& [name, info] : file.tensors()) {
    const auto kind = pattern.classify(name);
    if (!kind) continue;
    if (info.shape.size() != 2) {
      throw SelectionError("selected tensor '" + name + "' has shape " + shape_str(info.shape) +
                           ", expected 2-D");
    }
    Matrix w = file.matrix(name);
    if (pattern.transpose) w.transposeInPlace();
    layers.emplace_back(name, *kind, std::move(w), TensorOrigin{info.dtype, pattern.transpose});
  }
  if (layers.empty()) {
    std::string parts;
    for (const auto& p : pattern.include) parts += " '" + p + "'";
    throw SelectionError("no tensor matches include" + parts + " with suffix '" +
                         pattern.key_suffix + "' or '" + pattern.value_suffix + "'");
  }
  return AttentionLayerSet(std::move(layers));
}

TensorFile merge_back(const AttentionLayerSet& edited, const TensorFile& original) {
  TensorFile out = original;
  for (const auto& layer : edited) {
    const auto& info = original.info(layer.name());
    const bool transposed = layer.origin() && layer.origin()->transposed;
    const Matrix stored = transposed ? Matrix(layer.weights().transpose()) : layer.weights();
    if (info.shape.size() != 2 || info.shape[0] != stored.rows() ||
        info.shape[1] != stored.cols()) {
      throw DimensionError("shape drift for '" + layer.name() + "': file has " +
                           shape_str(info.shape) + ", edited layer stores as [" +
                           std::to_string(stored.rows()) + "," + std::to_string(stored.cols()) +
                           "]");
    }
    out.overwrite(layer.name(), row_major_values(stored));
  }
  return out;
}

TensorFile merge_tensors(const TensorFile& patch, const TensorFile& base) {
  TensorFile out = base;
  for (const auto& [name, info] : patch.tensors()) {
    const auto& target = base.info(name);
    if (target.dtype != info.dtype || target.shape != info.shape) {
      throw DimensionError("tensor '" + name + "' is " + info.dtype + shape_str(info.shape) +
                           " in the patch but " + target.dtype + shape_str(target.shape) +
                           " in the base file");
    }
    out.overwrite_raw(name, patch.bytes(name));
  }
  return out;
}

TensorFile layers_to_tensor_file(const AttentionLayerSet& layers) {
  TensorFile file;
  for (const auto& layer : layers) {
    const bool transposed = layer.origin() && layer.origin()->transposed;
    const std::string dtype = layer.origin() ? layer.origin()->dtype : "F32";
    const Matrix stored = transposed ? Matrix(layer.weights().transpose()) : layer.weights();
    file.add_tensor(layer.name(), dtype, {stored.rows(), stored.cols()}, row_major_values(stored));
  }
  return file;
}

ModelStats model_stats(const TensorFile& file, const SelectionPattern& pattern) {
  ModelStats stats;
  for (const auto& [name, info] : file.tensors()) {
    const auto n = info.element_count();
    stats.total_params += n;
    if (pattern.classify(name)) {
      stats.selected_params += n;
      ++stats.selected_tensors;
    }
  }
  stats.fraction = stats.total_params
                       ? static_cast<double>(stats.selected_params) /
                             static_cast<double>(stats.total_params)
                       : 0.0;
  return stats;
}

Embedding embedding_from_file(const TensorFile& file, const std::string& label,
                              Eigen::Index max_tokens) {
  if (!file.contains(label)) throw SelectionError("no embedding labelled '" + label + "'");
  const auto& info = file.info(label);
  Matrix data;
  if (info.shape.size() == 1) {
    data = file.matrix(label);
  } else if (info.shape.size() == 2) {
    data = file.matrix(label).transpose();
  } else {
    throw FormatError(FormatErrorCode::InvalidValue,
                      "embedding '" + label + "' has shape " + shape_str(info.shape) +
                          ", expected [tokens, d] or [d]");
  }
  if (max_tokens > 0 && data.cols() > max_tokens) data = data.leftCols(max_tokens).eval();
  return Embedding(std::move(data), label);
}

TensorFile embeddings_to_tensor_file(const std::vector<Embedding>& embeddings,
                                     const std::string& dtype, bool pooled_as_vector) {
  TensorFile file;
  for (const auto& e : embeddings) {
    const Matrix stored = e.data().transpose();  // tokens x d
    if (pooled_as_vector && e.tokens() == 1) {
      file.add_tensor(e.label(), dtype, {e.dim()}, row_major_values(stored));
    } else {
      file.add_tensor(e.label(), dtype, {e.tokens(), e.dim()}, row_major_values(stored));
    }
  }
  return file;
}

}  // namespace rece
