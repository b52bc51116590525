#pragma once

// Exact alt-text and visual near-duplicate removal. Visual matching compares
// 32x32 grayscale thumbnails pixel by pixel and clusters by single linkage;
// each cluster keeps its oldest member.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "alttext/corpus.hpp"
#include "alttext/raster.hpp"

namespace alttext::dedup {

inline constexpr int kThumbSide = 32;
inline constexpr int kThumbPixels = kThumbSide * kThumbSide;

struct Thumbnail {
  std::string image_id;
  std::array<std::uint8_t, kThumbPixels> pixels{};
  std::int64_t created_at = 0;
  bool operator==(const Thumbnail&) const = default;
};

Thumbnail thumbnail(const Raster& image, std::string image_id, std::int64_t created_at);

/// Number of positions where |a - b| > tolerance.
int pixel_diff(const Thumbnail& a, const Thumbnail& b, int tolerance = 0);

struct ClusterOptions {
  int threshold = 100;  // pairs join when pixel_diff < threshold
  int tolerance = 0;    // per-pixel tolerance passed to pixel_diff
  /// Skip pairs whose intensity-sum lower bound already reaches the
  /// threshold. The bound never under-counts, so results are unchanged.
  bool prefilter = true;
};

struct ClusterSet {
  std::vector<std::vector<std::string>> clusters;
  std::vector<std::string> survivors;  // survivors[i] belongs to clusters[i]
  std::vector<std::vector<std::size_t>> member_indices;
  std::vector<std::size_t> survivor_indices;
  std::size_t exact_diffs = 0;  // pairs that reached the full pixel comparison
};

/// Connected components of {(i, j) : pixel_diff(i, j) < threshold}. Clusters
/// are ordered by their first member's input position; members keep input
/// order. Survivor = minimum created_at, ties by smallest image_id.
ClusterSet cluster_images(std::span<const Thumbnail> thumbs, const ClusterOptions& options = {});

/// Keeps the oldest sample (ties: smallest image_id) per byte-identical
/// alt-text; survivors stay in input order.
std::vector<corpus::Sample> dedup_exact_alt(const std::vector<corpus::Sample>& samples);

/// dedup_exact_alt followed by visual clustering over the remaining samples.
/// Throws Error(MissingThumbnail) when a sample has no thumbnail.
std::vector<corpus::Sample> dedup_visual(
    const std::vector<corpus::Sample>& samples,
    const std::unordered_map<std::string, Thumbnail>& thumbnails,
    const ClusterOptions& options = {});

void save_thumbnails(const std::vector<Thumbnail>& thumbs, const std::filesystem::path& path);
std::vector<Thumbnail> load_thumbnails(const std::filesystem::path& path);

}  // namespace alttext::dedup
