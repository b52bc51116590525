#pragma once

// Single-reference caption metrics over lowercased whitespace tokens:
// corpus BLEU@4, exact-match METEOR, ROUGE-L and CIDEr, plus the x100
// report rows.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "alttext/corpus.hpp"
#include "alttext/predictions.hpp"

namespace alttext::metrics {

using Tokens = std::vector<std::string>;

struct EvalPair {
  Tokens candidate;
  Tokens reference;
};

EvalPair make_pair(std::string_view candidate, std::string_view reference);

/// Corpus BLEU: pooled clipped n-gram precisions (n = 1..4), uniform
/// geometric mean, brevity penalty exp(min(0, 1 - r/c)). Zero when any
/// pooled precision is zero. Throws Error(EmptyCorpus).
double bleu4(std::span<const EvalPair> pairs);
double sentence_bleu4(const Tokens& candidate, const Tokens& reference);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
/// F = (1 + b^2) P R / (R + b^2 P) with P = LCS/|c|, R = LCS/|r|.
double rouge_l(const Tokens& candidate, const Tokens& reference, double beta = 1.2);

struct AlignedPair {
  std::size_t cand = 0;
  std::size_t ref = 0;
  auto operator<=>(const AlignedPair&) const = default;
};

struct MeteorAlignment {
  std::vector<AlignedPair> pairs;  // sorted by candidate position
  std::size_t crossings = 0;
  std::size_t chunks = 0;
};

/// Maximal one-to-one exact unigram alignment with the fewest crossings;
/// remaining ties go to the lexicographically smallest pair list.
MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference);
std::size_t count_chunks(const std::vector<AlignedPair>& sorted_pairs);
/// Fmean = 10PR / (R + 9P), penalty = 0.5 (chunks/m)^3.
double meteor(const Tokens& candidate, const Tokens& reference);

/// Per-pair CIDEr (0..10) with IDF = log(N / (1 + reference document
/// frequency)) taken from the pairs' references. Throws
/// Error(CorpusTooSmall) for fewer than two pairs.
std::vector<double> cider_per_pair(std::span<const EvalPair> pairs);
double cider(std::span<const EvalPair> pairs);

struct MetricReport {
  double bleu4 = 0.0;
  double meteor = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  std::size_t pairs = 0;

  /// raw x 100 rounded to three decimals
  static double display(double raw);
};

MetricReport score(std::span<const EvalPair> pairs);

/// Pairs every prediction with the reference alt-text sharing its
/// (tweet_id, image_id). Throws Error(MissingReference).
std::vector<EvalPair> pair_with_references(const std::vector<Prediction>& predictions,
                                           const std::vector<corpus::Sample>& references);
MetricReport evaluate(const std::vector<Prediction>& predictions,
                      const std::vector<corpus::Sample>& references);

struct ReportRow {
  std::string system;
  std::string decoding;
  MetricReport metrics;
};

/// TSV with '#' header lines carrying `notes` (e.g. the config hash).
void write_report_tsv(const std::vector<ReportRow>& rows, const std::vector<std::string>& notes,
                      std::ostream& out);
std::string format_report_table(const std::vector<ReportRow>& rows);

}  // namespace alttext::metrics
