#pragma once

#include "rece/types.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace rece {

class TensorFile;

/// Deterministic random inputs for tests, benchmarks and the certification
/// suite. All draws come from one std::mt19937_64.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

  Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double scale = 1.0);
  Embedding embedding(Eigen::Index dim, Eigen::Index tokens, std::string label = {});
  ProjectionMatrix projection(std::string name, ProjKind kind, Eigen::Index out,
                              Eigen::Index dim);
  /// `count` layers alternating K and V, output dims drawn from [min_out, max_out].
  AttentionLayerSet layer_set(std::size_t count, Eigen::Index dim, Eigen::Index min_out,
                              Eigen::Index max_out);

  int uniform_int(int lo, int hi);  // inclusive
  double uniform(double lo, double hi);
  template <typename T>
  const T& pick(const std::vector<T>& values) {
    return values[static_cast<std::size_t>(uniform_int(0, static_cast<int>(values.size()) - 1))];
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Cross-attention output widths of an SD v1.x U-Net, in block order
/// (down 0-2, mid, up 1-3); 16 attention blocks, each with one K and one V.
const std::vector<Eigen::Index>& sd_cross_attention_widths();

/// Tensor names for SD-style cross-attention projections.
std::string sd_attention_prefix(std::size_t block);

/// A checkpoint with SD-shaped random K/V weights (f32, scaled like a trained
/// projection) plus self-attention query weights that must pass through
/// edits untouched. Deterministic in `seed`.
TensorFile make_synthetic_checkpoint(std::uint64_t seed, Eigen::Index embed_dim = 768,
                                     double width_scale = 1.0);

/// Embedding table for the synthetic checkpoint: "concept", "empty_text",
/// "preserve" and "probe", each pooled ([dim]).
TensorFile make_synthetic_embeddings(std::uint64_t seed, Eigen::Index embed_dim = 768);

}  // namespace rece
