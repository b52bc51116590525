#include "alttext/dedup.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <tuple>

#include "alttext/binio.hpp"
#include "alttext/error.hpp"

namespace alttext::dedup {

Thumbnail thumbnail(const Raster& image, std::string image_id, std::int64_t created_at) {
  if (!image.valid()) throw Error(Errc::UndecodableImage, "image '" + image_id + "' is empty");
  Thumbnail t;
  t.image_id = std::move(image_id);
  t.created_at = created_at;
  const auto gray = square_gray(image, kThumbSide);
  std::copy(gray.begin(), gray.end(), t.pixels.begin());
  return t;
}

int pixel_diff(const Thumbnail& a, const Thumbnail& b, int tolerance) {
  int count = 0;
  for (int i = 0; i < kThumbPixels; ++i) {
    count += std::abs(int{a.pixels[i]} - int{b.pixels[i]}) > tolerance;
  }
  return count;
}

namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // smaller index becomes the root so results do not depend on merge order
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

constexpr int kRegionSide = 8;
constexpr int kRegions = (kThumbSide / kRegionSide) * (kThumbSide / kRegionSide);
constexpr int kRegionPixels = kRegionSide * kRegionSide;

struct IntensityProfile {
  long total = 0;
  std::array<long, kRegions> region{};
};

IntensityProfile profile(const Thumbnail& t) {
  IntensityProfile p;
  constexpr int per_row = kThumbSide / kRegionSide;
  for (int y = 0; y < kThumbSide; ++y) {
    for (int x = 0; x < kThumbSide; ++x) {
      const int v = t.pixels[y * kThumbSide + x];
      p.region[(y / kRegionSide) * per_row + x / kRegionSide] += v;
      p.total += v;
    }
  }
  return p;
}

// Smallest number of pixels with |diff| > tolerance that can explain a sum
// difference of `delta` over `pixels` positions.
long min_differing(long delta, int pixels, int tolerance) {
  const long excess = std::labs(delta) - static_cast<long>(pixels) * tolerance;
  if (excess <= 0) return 0;
  const long per_pixel = 255 - tolerance;
  return (excess + per_pixel - 1) / per_pixel;
}

}  // namespace

ClusterSet cluster_images(std::span<const Thumbnail> thumbs, const ClusterOptions& options) {
  if (options.threshold < 1) throw Error(Errc::InvalidArgument, "threshold must be >= 1");
  const int tol = std::clamp(options.tolerance, 0, 255);
  const std::size_t n = thumbs.size();
  UnionFind uf(n);
  ClusterSet out;

  if (options.prefilter && tol < 255) {
    std::vector<IntensityProfile> prof(n);
    for (std::size_t i = 0; i < n; ++i) prof[i] = profile(thumbs[i]);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return prof[a].total < prof[b].total; });
    // A pair below threshold differs in at most threshold-1 pixels, which
    // bounds how far apart the image totals can be.
    const long max_d = std::min(options.threshold - 1, kThumbPixels);
    const long window = (255L - tol) * max_d + static_cast<long>(tol) * kThumbPixels;
    for (std::size_t a = 0; a < n; ++a) {
      const std::size_t i = order[a];
      for (std::size_t b = a + 1; b < n; ++b) {
        const std::size_t j = order[b];
        if (prof[j].total - prof[i].total > window) break;
        long bound = 0;
        for (int r = 0; r < kRegions && bound < options.threshold; ++r) {
          bound += min_differing(prof[i].region[r] - prof[j].region[r], kRegionPixels, tol);
        }
        if (bound >= options.threshold) continue;
        ++out.exact_diffs;
        if (pixel_diff(thumbs[i], thumbs[j], tol) < options.threshold) uf.unite(i, j);
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        ++out.exact_diffs;
        if (pixel_diff(thumbs[i], thumbs[j], tol) < options.threshold) uf.unite(i, j);
      }
    }
  }

  std::vector<std::size_t> slot(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = uf.find(i);
    if (slot[root] == n) {
      slot[root] = out.member_indices.size();
      out.member_indices.emplace_back();
    }
    out.member_indices[slot[root]].push_back(i);
  }
  for (const auto& members : out.member_indices) {
    std::vector<std::string> ids;
    std::size_t best = members.front();
    for (std::size_t m : members) {
      ids.push_back(thumbs[m].image_id);
      if (std::tie(thumbs[m].created_at, thumbs[m].image_id) <
          std::tie(thumbs[best].created_at, thumbs[best].image_id)) {
        best = m;
      }
    }
    out.clusters.push_back(std::move(ids));
    out.survivors.push_back(thumbs[best].image_id);
    out.survivor_indices.push_back(best);
  }
  return out;
}

std::vector<corpus::Sample> dedup_exact_alt(const std::vector<corpus::Sample>& samples) {
  std::unordered_map<std::string, std::size_t> best;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto [it, inserted] = best.try_emplace(samples[i].alt_text, i);
    if (inserted) continue;
    const auto& cur = samples[it->second];
    if (std::tie(samples[i].created_at, samples[i].image_id) <
        std::tie(cur.created_at, cur.image_id)) {
      it->second = i;
    }
  }
  std::vector<corpus::Sample> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (best.at(samples[i].alt_text) == i) out.push_back(samples[i]);
  }
  return out;
}

std::vector<corpus::Sample> dedup_visual(
    const std::vector<corpus::Sample>& samples,
    const std::unordered_map<std::string, Thumbnail>& thumbnails,
    const ClusterOptions& options) {
  const auto distinct = dedup_exact_alt(samples);
  std::vector<Thumbnail> thumbs;
  thumbs.reserve(distinct.size());
  for (const auto& s : distinct) {
    auto it = thumbnails.find(s.image_id);
    if (it == thumbnails.end()) throw Error(Errc::MissingThumbnail, s.image_id);
    Thumbnail t = it->second;
    t.created_at = s.created_at;
    thumbs.push_back(std::move(t));
  }
  const auto clusters = cluster_images(thumbs, options);
  std::vector<bool> keep(distinct.size(), false);
  for (std::size_t idx : clusters.survivor_indices) keep[idx] = true;
  std::vector<corpus::Sample> out;
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    if (keep[i]) out.push_back(distinct[i]);
  }
  return out;
}

void save_thumbnails(const std::vector<Thumbnail>& thumbs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  binio::write_magic(out, "ATTH");
  binio::write_u32(out, static_cast<std::uint32_t>(thumbs.size()));
  for (const auto& t : thumbs) {
    binio::write_short_string(out, t.image_id);
    binio::write_u64(out, static_cast<std::uint64_t>(t.created_at));
    out.write(reinterpret_cast<const char*>(t.pixels.data()), kThumbPixels);
  }
  if (!out) throw Error(Errc::Io, "failed writing " + path.string());
}

std::vector<Thumbnail> load_thumbnails(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  binio::expect_magic(in, "ATTH");
  const std::uint32_t count = binio::read_u32(in);
  std::vector<Thumbnail> out(count);
  for (auto& t : out) {
    t.image_id = binio::read_short_string(in);
    t.created_at = static_cast<std::int64_t>(binio::read_u64(in));
    binio::read_bytes(in, t.pixels.data(), kThumbPixels);
  }
  return out;
}

}  // namespace alttext::dedup
