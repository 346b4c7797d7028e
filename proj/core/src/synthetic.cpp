#include "rece/synthetic.hpp"

#include "rece/checkpoint_io.hpp"

#include <cmath>

namespace rece {

Matrix RandomSource::gaussian(Eigen::Index rows, Eigen::Index cols, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  // Fill in a fixed (column-major) order so results do not depend on Eigen internals.
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(engine_);
  }
  return m;
}

Embedding RandomSource::embedding(Eigen::Index dim, Eigen::Index tokens, std::string label) {
  return Embedding(gaussian(dim, tokens), std::move(label));
}

ProjectionMatrix RandomSource::projection(std::string name, ProjKind kind, Eigen::Index out,
                                          Eigen::Index dim) {
  return ProjectionMatrix(std::move(name), kind, gaussian(out, dim));
}

AttentionLayerSet RandomSource::layer_set(std::size_t count, Eigen::Index dim,
                                          Eigen::Index min_out, Eigen::Index max_out) {
  std::vector<ProjectionMatrix> layers;
  layers.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::Index out = uniform_int(static_cast<int>(min_out), static_cast<int>(max_out));
    const ProjKind kind = i % 2 == 0 ? ProjKind::Key : ProjKind::Value;
    layers.push_back(projection("layer" + std::to_string(i / 2) + (kind == ProjKind::Key ? ".to_k" : ".to_v"),
                                kind, out, dim));
  }
  return AttentionLayerSet(std::move(layers));
}

int RandomSource::uniform_int(int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(engine_);
}

double RandomSource::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

const std::vector<Eigen::Index>& sd_cross_attention_widths() {
  static const std::vector<Eigen::Index> widths{
      320, 320, 640, 640, 1280, 1280,  // down blocks 0-2, two attentions each
      1280,                            // mid block
      1280, 1280, 1280,                // up block 1
      640, 640, 640,                   // up block 2
      320, 320, 320,                   // up block 3
  };
  return widths;
}

std::string sd_attention_prefix(std::size_t block) {
  static const std::vector<std::string> prefixes{
      "down_blocks.0.attentions.0", "down_blocks.0.attentions.1", "down_blocks.1.attentions.0",
      "down_blocks.1.attentions.1", "down_blocks.2.attentions.0", "down_blocks.2.attentions.1",
      "mid_block.attentions.0",     "up_blocks.1.attentions.0",   "up_blocks.1.attentions.1",
      "up_blocks.1.attentions.2",   "up_blocks.2.attentions.0",   "up_blocks.2.attentions.1",
      "up_blocks.2.attentions.2",   "up_blocks.3.attentions.0",   "up_blocks.3.attentions.1",
      "up_blocks.3.attentions.2",
  };
  return prefixes.at(block) + ".transformer_blocks.0";
}

TensorFile make_synthetic_checkpoint(std::uint64_t seed, Eigen::Index embed_dim,
                                     double width_scale) {
  RandomSource rng(seed);
  TensorFile file;
  const auto& widths = sd_cross_attention_widths();
  for (std::size_t b = 0; b < widths.size(); ++b) {
    const auto out = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::lround(static_cast<double>(widths[b]) * width_scale)));
    const std::string prefix = sd_attention_prefix(b);
    const double scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    for (const char* suffix : {".attn2.to_k.weight", ".attn2.to_v.weight"}) {
      const Matrix w = rng.gaussian(out, embed_dim, scale);
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = w;
      file.add_tensor(prefix + suffix, "F32", {out, embed_dim}, {r.data(), static_cast<std::size_t>(r.size())});
    }
    // Pass-through tensors that a cross-attention edit must leave alone.
    const Matrix q = rng.gaussian(out, out, 1.0 / std::sqrt(static_cast<double>(out)));
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rq = q;
    file.add_tensor(prefix + ".attn1.to_q.weight", "F32", {out, out},
                    {rq.data(), static_cast<std::size_t>(rq.size())});
    const Matrix bias = rng.gaussian(out, 1, 0.01);
    file.add_tensor(prefix + ".attn2.to_out.0.bias", "F32", {out},
                    {bias.data(), static_cast<std::size_t>(bias.size())});
  }
  file.set_metadata({{"format", "pt"}, {"generator", "rece synthetic"}});
  return file;
}

TensorFile make_synthetic_embeddings(std::uint64_t seed, Eigen::Index embed_dim) {
  RandomSource rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Embedding> embeddings;
  for (const char* label : {"concept", "empty_text", "preserve", "probe"}) {
    embeddings.push_back(rng.embedding(embed_dim, 1, label));
  }
  return embeddings_to_tensor_file(embeddings);
}

}  // namespace rece
