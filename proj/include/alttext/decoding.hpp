#pragma once

// Greedy and beam-search decoding over any next-token scorer, with
// token-level trigram blocking and metric-based reranking.

#include <functional>
#include <string>
#include <span>
#include <string_view>
#include <vector>

#include "alttext/tokenizer.hpp"

namespace alttext::decoding {

struct Candidate {
  std::vector<TokenId> ids;  // ends with EOS unless max_len was reached
  double score = 0.0;        // summed log-probabilities (nats)
  int beam_rank = 0;
};

enum class Method { Greedy, BeamSearch };
enum class Rerank { None, RougeL, Bleu };

struct DecodeConfig {
  Method method = Method::BeamSearch;
  int beam_size = 5;
  bool block_trigrams = false;
  int max_len = 150;  // generated tokens, EOS included
  Rerank rerank = Rerank::None;
  bool allow_unk = false;
  /// Finished hypotheses are ranked by score / len^length_penalty; 0 keeps
  /// raw cumulative log-probability.
  double length_penalty = 0.0;
  void validate() const;
};

Method parse_method(std::string_view name);
Rerank parse_rerank(std::string_view name);
std::string method_label(const DecodeConfig& config);  // "Greedy", "BS (NR)", ...

/// Next-token logits given the tokens generated so far (BOS excluded).
using NextLogits = std::function<std::vector<double>(std::span<const TokenId>)>;

/// Sets to -inf every token w for which (h[-2], h[-1], w) already occurs in
/// the hypothesis. Hypotheses shorter than two tokens are left alone.
void block_trigrams(std::span<const TokenId> hypothesis, std::vector<double>& logits);

/// Masked log-softmax used at every step: PAD and BOS (and UNK unless
/// allowed) are never generated; blocking applies when configured.
std::vector<double> step_log_probs(std::span<const TokenId> hypothesis, std::vector<double> logits,
                                   const DecodeConfig& config);

Candidate greedy(const NextLogits& model, const DecodeConfig& config);

/// Length-unnormalized beam search. Each step keeps the beam_size best
/// expansions (ties: lexicographically smaller id sequence); those ending in
/// EOS or at max_len are set aside and compete on their final score.
/// Returns at most beam_size candidates sorted by score, beam_rank 0..n-1.
std::vector<Candidate> beam_search(const NextLogits& model, const DecodeConfig& config);

/// Argmax of metric(candidate text, tweet text); ties go to the lowest
/// beam_rank. Throws Error(EmptyCandidates).
Candidate rerank(std::span<const Candidate> candidates, std::string_view tweet_text,
                 Rerank metric, const Vocab& vocab);

/// Greedy or beam search followed by the configured reranker.
Candidate decode(const NextLogits& model, const DecodeConfig& config, std::string_view tweet_text,
                 const Vocab& vocab);

}  // namespace alttext::decoding
