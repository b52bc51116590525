#pragma once

// Synthetic stacking data, retrieval and copy baselines, example assembly,
// caption generation and experiment runs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "alttext/captioner.hpp"
#include "alttext/corpus.hpp"
#include "alttext/decoding.hpp"
#include "alttext/metrics.hpp"
#include "alttext/predictions.hpp"
#include "alttext/raster.hpp"
#include "alttext/tokenizer.hpp"
#include "alttext/vision.hpp"

namespace alttext::harness {

struct SynthSpec {
  int n_samples = 2000;
  int n_classes = 8;
  int n_attrs = 8;
  std::uint64_t seed = 0;
  int image_size = 64;  // multiple of 4
  int noise = 24;       // uniform per-pixel jitter in [-noise, noise]
  void validate() const;  // throws Error(InvalidArgument)
};

struct SynthSample {
  int image_class = 0;
  int attribute = 0;
};

struct SynthData {
  std::vector<corpus::Sample> samples;  // one image per tweet
  std::vector<Raster> images;           // parallel to samples
  std::vector<SynthSample> labels;      // parallel to samples
  std::vector<std::string> class_words;
  std::vector<std::string> attr_words;
};

/// The image shows only a class glyph (a 4x4 block pattern); the tweet
/// mentions only the attribute word; the alt-text names both.
SynthData synth_dataset(const SynthSpec& spec);

/// Writes `dir/images/<image_id>.pgm` and `dir/corpus.jsonl`; sample paths
/// are stored relative to `dir`.
void write_synth(const SynthData& data, const std::filesystem::path& dir);

/// Resolves a sample path against `image_root` unless it is absolute.
std::filesystem::path resolve_image(const corpus::Sample& s, const std::filesystem::path& image_root);

vision::EmbeddingMap embed_toy(const std::vector<corpus::Sample>& samples,
                               const std::filesystem::path& image_root, std::uint64_t seed);

/// Seeded derangement of tweet texts (no sample keeps its own tweet when
/// there are at least two samples).
std::vector<std::string> shuffled_tweets(const std::vector<corpus::Sample>& samples, std::uint64_t seed);

/// Tweet texts the given variant conditions on: RandText swaps in a
/// deranged tweet, every other variant keeps the sample's own.
std::vector<std::string> conditioning_tweets(const std::vector<corpus::Sample>& samples,
                                             captioner::Variant variant, std::uint64_t seed);

/// Vocabulary over the tweet and alt-text tokens of `samples`.
Vocab build_vocab(const std::vector<corpus::Sample>& samples, int max_size);

/// Examples borrow embedding storage from `embeddings`, which must outlive
/// them. Throws Error(MissingEmbedding).
std::vector<captioner::Example> build_examples(const std::vector<corpus::Sample>& samples,
                                               const vision::EmbeddingMap& embeddings,
                                               const Vocab& vocab, captioner::Variant variant,
                                               std::uint64_t seed);

std::vector<Prediction> generate(const captioner::ModelState& state, const Vocab& vocab,
                                 const std::vector<corpus::Sample>& samples,
                                 const vision::EmbeddingMap& embeddings,
                                 const decoding::DecodeConfig& decode, std::uint64_t seed);

/// Alt-text of the training sample whose image embedding has the largest
/// dot product with the test image's. Throws Error(MissingEmbedding).
std::vector<Prediction> baseline_nearest_neighbor(const std::vector<corpus::Sample>& test,
                                                  const std::vector<corpus::Sample>& train,
                                                  const vision::EmbeddingMap& embeddings);
std::vector<Prediction> baseline_copy_tweet(const std::vector<corpus::Sample>& test);

struct RunConfig {
  std::filesystem::path corpus;  // samples to caption (also the references)
  std::filesystem::path embeddings;
  std::filesystem::path checkpoint;
  std::filesystem::path vocab;
  std::filesystem::path predictions;
  std::filesystem::path report;
  std::string system = "Ours";
  decoding::DecodeConfig decode;
  std::uint64_t seed = 0;
};

/// FNV-1a over a canonical rendering of the config and the checkpoint bytes.
std::uint64_t config_hash(const RunConfig& config);

/// Generates, writes predictions, evaluates and writes a one-row report
/// whose header records the config hash. Inputs are only read.
metrics::MetricReport run_experiment(const RunConfig& config);

/// Header lines shared by every report this toolkit writes.
std::vector<std::string> report_notes(std::uint64_t hash);

}  // namespace alttext::harness
