#include "alttext/vision.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "alttext/binio.hpp"
#include "alttext/error.hpp"

namespace alttext::vision {

namespace {
constexpr int kToyPixels = kToySide * kToySide;
}

ToyEncoder::ToyEncoder(std::uint64_t seed)
    : projection_(static_cast<std::size_t>(kEmbeddingDim) * kToyPixels) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& w : projection_) w = normal(rng);
}

ImageEmbedding ToyEncoder::encode(const Raster& image, std::string image_id) const {
  const auto gray = square_gray(image, kToySide);
  std::vector<double> acc(kEmbeddingDim, 0.0);
  double sumsq = 0.0;
  for (int r = 0; r < kEmbeddingDim; ++r) {
    const double* row = projection_.data() + static_cast<std::size_t>(r) * kToyPixels;
    double s = 0.0;
    for (int c = 0; c < kToyPixels; ++c) s += row[c] * (gray[c] / 255.0);
    acc[r] = s;
    sumsq += s * s;
  }
  const double norm = std::sqrt(sumsq);
  ImageEmbedding e;
  e.image_id = std::move(image_id);
  e.vec.resize(kEmbeddingDim);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    // an all-black image projects to zero; give it a fixed unit direction
    e.vec[0] = 1.0F;
    return e;
  }
  for (int r = 0; r < kEmbeddingDim; ++r) e.vec[r] = static_cast<float>(acc[r] / norm);
  return e;
}

ImageEmbedding toy_encode(const Raster& image, std::uint64_t seed, std::string image_id) {
  return ToyEncoder(seed).encode(image, std::move(image_id));
}

void normalize(std::vector<float>& v) {
  double sumsq = 0.0;
  for (float x : v) sumsq += double{x} * x;
  const double norm = std::sqrt(sumsq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(Errc::NonFiniteActivation, "embedding cannot be normalized");
  }
  for (auto& x : v) x = static_cast<float>(x / norm);
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "dot of unequal lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double{a[i]} * b[i];
  return s;
}

const std::string& nearest_neighbor(const ImageEmbedding& query,
                                    std::span<const ImageEmbedding> index) {
  if (index.empty()) throw Error(Errc::EmptyIndex, "nearest neighbour over an empty index");
  const ImageEmbedding* best = nullptr;
  double best_score = 0.0;
  for (const auto& cand : index) {
    const double s = dot(query.vec, cand.vec);
    if (best == nullptr || s > best_score || (s == best_score && cand.image_id < best->image_id)) {
      best = &cand;
      best_score = s;
    }
  }
  return best->image_id;
}

void save_embeddings(const EmbeddingMap& embeddings, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  binio::write_magic(out, "ATTE");
  binio::write_u32(out, static_cast<std::uint32_t>(embeddings.size()));
  binio::write_u32(out, kEmbeddingDim);
  for (const auto& [id, e] : embeddings) {
    if (e.vec.size() != kEmbeddingDim) throw Error(Errc::DimensionMismatch, id);
    binio::write_short_string(out, id);
    for (float x : e.vec) binio::write_f32(out, x);
  }
  if (!out) throw Error(Errc::Io, "failed writing " + path.string());
}

EmbeddingMap load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  binio::expect_magic(in, "ATTE");
  const std::uint32_t count = binio::read_u32(in);
  const std::uint32_t dim = binio::read_u32(in);
  if (dim != kEmbeddingDim) {
    throw Error(Errc::DimensionMismatch, "embedding dim " + std::to_string(dim) + ", expected " +
                                             std::to_string(kEmbeddingDim));
  }
  EmbeddingMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    ImageEmbedding e;
    e.image_id = binio::read_short_string(in);
    e.vec.resize(dim);
    for (auto& x : e.vec) x = binio::read_f32(in);
    normalize(e.vec);
    if (out.count(e.image_id)) throw Error(Errc::DuplicateId, e.image_id);
    out.emplace(e.image_id, std::move(e));
  }
  return out;
}

}  // namespace alttext::vision
