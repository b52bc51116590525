#pragma once

// Frozen image-embedding interface: a seeded random-projection toy encoder,
// the ATTE embedding file format and dot-product nearest-neighbour lookup.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "alttext/raster.hpp"

namespace alttext::vision {

inline constexpr int kEmbeddingDim = 512;
inline constexpr int kToySide = 16;

struct ImageEmbedding {
  std::string image_id;
  std::vector<float> vec;  // unit L2 norm
};

using EmbeddingMap = std::map<std::string, ImageEmbedding>;

/// Deterministic toy encoder. Pixels of the 16x16 grayscale square (same
/// resampling as the dedup thumbnail) are scaled to [0,1] and projected by a
/// seed-derived 512x256 standard-normal matrix, then L2-normalized.
class ToyEncoder {
 public:
  explicit ToyEncoder(std::uint64_t seed);
  ImageEmbedding encode(const Raster& image, std::string image_id) const;

 private:
  std::vector<double> projection_;  // row-major kEmbeddingDim x kToySide^2
};

ImageEmbedding toy_encode(const Raster& image, std::uint64_t seed, std::string image_id = {});

/// Normalizes in place; throws Error(NonFiniteActivation) on zero or
/// non-finite vectors.
void normalize(std::vector<float>& v);

double dot(std::span<const float> a, std::span<const float> b);

/// Argmax dot product; ties go to the smallest image_id.
/// Throws Error(EmptyIndex) for an empty index.
const std::string& nearest_neighbor(const ImageEmbedding& query,
                                    std::span<const ImageEmbedding> index);

void save_embeddings(const EmbeddingMap& embeddings, const std::filesystem::path& path);
/// Vectors are re-normalized on load. Errors: BadMagic, DuplicateId,
/// DimensionMismatch.
EmbeddingMap load_embeddings(const std::filesystem::path& path);

}  // namespace alttext::vision
