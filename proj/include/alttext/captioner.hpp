#pragma once

// Multimodal prefix captioner. A tanh MLP maps the frozen image embedding to
// k rows in word-embedding space; those rows, the embedded tweet and the
// embedded alt-text (after BOS) form one sequence for a pre-LN causal
// transformer with tied input/output embeddings. Everything runs in double.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "alttext/tokenizer.hpp"

namespace alttext::captioner {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
using PrefixMatrix = Matrix;  // k x d_model

enum class Variant { TextAndImage, ImageOnly, TextOnly, RandText };

std::string_view variant_name(Variant v) noexcept;  // text_image, image_only, ...
Variant parse_variant(std::string_view name);       // throws Error(InvalidArgument)

inline bool uses_image(Variant v) { return v != Variant::TextOnly; }
inline bool uses_tweet(Variant v) { return v != Variant::ImageOnly; }

struct ModelConfig {
  int k = 10;
  int d_enc = 512;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int vocab_size = 0;
  int max_seq_len = 0;  // 0 selects min_seq_len()
  Variant variant = Variant::TextAndImage;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  int mapper_hidden() const noexcept { return (d_enc + k * d_model) / 2; }
  /// Room for the prefix, 150 tweet tokens, BOS, 150 alt tokens and EOS.
  int min_seq_len() const noexcept { return k + 150 + 150 + 2; }
  int seq_len() const noexcept { return max_seq_len > 0 ? max_seq_len : min_seq_len(); }
  void validate() const;  // throws Error(InvalidArgument)
  bool operator==(const ModelConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const noexcept { return static_cast<std::size_t>(rows) * cols; }
};

/// Parameter tensors in declaration order; the checkpoint writes them in
/// exactly this order.
std::vector<TensorInfo> tensor_table(const ModelConfig& config);
std::size_t parameter_count(const ModelConfig& config);

struct ModelState {
  ModelConfig config;
  std::vector<double> params;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::uint64_t step = 0;

  bool operator==(const ModelState&) const = default;
};

/// normal(0, 0.02) weights, zero biases, unit layer-norm gains, seeded by
/// config.seed.
ModelState init_state(const ModelConfig& config);

void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

/// Forward through the mapping network, reshaped row-major to k x d_model.
/// Throws Error(DimensionMismatch) when the embedding is not d_enc long.
PrefixMatrix map_prefix(const ModelState& state, std::span<const float> embedding);

struct SequenceInput {
  Matrix embedded;                 // T x d_model, positions already added
  int prefix_rows = 0;             // leading rows that came from the mapper
  std::vector<TokenId> token_ids;  // ids of the remaining T - prefix_rows rows
  std::vector<TokenId> targets;    // next-token target per position (kPad when unmasked)
  std::vector<std::uint8_t> mask;  // 1 exactly on alt-text and EOS targets
  int length() const noexcept { return static_cast<int>(embedded.rows()); }
};

/// Lays out [prefix] + [tweet] + [BOS, alt...]. The prefix is dropped for
/// TextOnly and the tweet for ImageOnly; RandText is laid out like
/// TextAndImage with whatever tweet the caller passes. Targets are alt ids
/// followed by EOS, one step ahead. Throws Error(SequenceTooLong).
SequenceInput build_input(const ModelState& state, const PrefixMatrix* prefix,
                          std::span<const TokenId> tweet_ids, std::span<const TokenId> alt_ids);

/// Logits for every position (T x vocab_size).
/// Throws Error(NonFiniteActivation).
Matrix forward(const ModelState& state, const SequenceInput& input);

/// Logits of the final position only.
RowVector forward_last(const ModelState& state, const SequenceInput& input);

/// Mean of -log softmax(logits)[target] over masked positions (nats/token).
/// Throws Error(EmptyMask).
double loss(const Matrix& logits, std::span<const TokenId> targets,
            std::span<const std::uint8_t> mask);

/// One training/evaluation item. The embedding is borrowed read-only.
struct Example {
  std::span<const float> image;
  std::vector<TokenId> tweet;
  std::vector<TokenId> alt;
  /// Optional per-position override of the layout mask (length T).
  std::vector<std::uint8_t> loss_mask;
};

SequenceInput build_example_input(const ModelState& state, const Example& ex);

struct NllSum {
  double nll = 0.0;
  long tokens = 0;
  double mean() const noexcept { return tokens ? nll / static_cast<double>(tokens) : 0.0; }
};

/// Teacher-forced NLL summed over the example's masked positions.
NllSum example_nll(const ModelState& state, const Example& ex);

/// Mean masked-token NLL over the batch and its gradient w.r.t. every
/// parameter (written to `grad`, resized as needed). `dropout_seed` drives
/// the dropout masks when config.dropout > 0.
NllSum loss_and_gradient(const ModelState& state, std::span<const Example> batch,
                         std::vector<double>& grad, std::uint64_t dropout_seed = 0);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::string worst_tensor;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the analytic gradient of the example loss with five-point central
/// differences for every parameter; relative error is
/// |a - n| / max(1e-6, |a| + |n|).
GradCheckResult grad_check(const ModelState& state, const Example& ex, double epsilon = 1e-3);

/// Conditioning for autoregressive generation: the mapped prefix is computed
/// once and reused for every step.
class CaptionContext {
 public:
  CaptionContext(const ModelState& state, std::span<const float> image,
                 std::vector<TokenId> tweet);
  /// Next-token logits after BOS + `generated`.
  std::vector<double> next_logits(std::span<const TokenId> generated) const;
  /// Longest alt continuation that still fits in max_seq_len.
  int max_generated() const noexcept;

 private:
  const ModelState* state_;
  PrefixMatrix prefix_;
  bool has_prefix_;
  std::vector<TokenId> tweet_;
};

}  // namespace alttext::captioner
