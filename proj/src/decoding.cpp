#include "alttext/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "alttext/error.hpp"
#include "alttext/metrics.hpp"
#include "alttext/text.hpp"

namespace alttext::decoding {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Hypothesis {
  std::vector<TokenId> ids;
  double score = 0.0;
};

// Higher score first, then the lexicographically smaller sequence.
bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.ids < b.ids;
}

double ranking_score(const Hypothesis& h, double length_penalty) {
  if (length_penalty == 0.0 || h.ids.empty()) return h.score;
  return h.score / std::pow(static_cast<double>(h.ids.size()), length_penalty);
}

}  // namespace

void DecodeConfig::validate() const {
  if (beam_size < 1) throw Error(Errc::InvalidArgument, "beam_size must be >= 1");
  if (max_len < 1) throw Error(Errc::InvalidArgument, "max_len must be >= 1");
}

Method parse_method(std::string_view name) {
  if (name == "greedy") return Method::Greedy;
  if (name == "beam") return Method::BeamSearch;
  throw Error(Errc::InvalidArgument, "unknown decoding method '" + std::string(name) + "'");
}

Rerank parse_rerank(std::string_view name) {
  if (name == "none") return Rerank::None;
  if (name == "rougel") return Rerank::RougeL;
  if (name == "bleu") return Rerank::Bleu;
  throw Error(Errc::InvalidArgument, "unknown reranker '" + std::string(name) + "'");
}

std::string method_label(const DecodeConfig& config) {
  std::string label = config.method == Method::Greedy ? "Greedy" : "BS";
  if (config.block_trigrams) label += " (NR)";
  if (config.rerank == Rerank::RougeL) label += " + RR";
  if (config.rerank == Rerank::Bleu) label += " + BLEU RR";
  return label;
}

void block_trigrams(std::span<const TokenId> h, std::vector<double>& logits) {
  const std::size_t n = h.size();
  if (n < 2) return;
  const TokenId a = h[n - 2], b = h[n - 1];
  for (std::size_t i = 0; i + 2 < n; ++i) {
    if (h[i] == a && h[i + 1] == b) {
      const auto w = static_cast<std::size_t>(h[i + 2]);
      if (w < logits.size()) logits[w] = kNegInf;
    }
  }
}

std::vector<double> step_log_probs(std::span<const TokenId> hypothesis, std::vector<double> logits,
                                   const DecodeConfig& config) {
  for (TokenId banned : {kPad, kBos}) {
    if (static_cast<std::size_t>(banned) < logits.size()) logits[static_cast<std::size_t>(banned)] = kNegInf;
  }
  if (!config.allow_unk && static_cast<std::size_t>(kUnk) < logits.size()) logits[kUnk] = kNegInf;
  if (config.block_trigrams) block_trigrams(hypothesis, logits);

  double mx = kNegInf;
  for (double v : logits) {
    if (std::isnan(v)) throw Error(Errc::NonFiniteActivation, "NaN logit during decoding");
    mx = std::max(mx, v);
  }
  if (mx == kNegInf) throw Error(Errc::NonFiniteActivation, "every token is masked");
  double sum = 0.0;
  for (double v : logits) sum += v == kNegInf ? 0.0 : std::exp(v - mx);
  const double log_z = mx + std::log(sum);
  for (double& v : logits) v = v == kNegInf ? kNegInf : v - log_z;
  return logits;
}

Candidate greedy(const NextLogits& model, const DecodeConfig& config) {
  config.validate();
  Candidate out;
  while (static_cast<int>(out.ids.size()) < config.max_len) {
    const auto lp = step_log_probs(out.ids, model(out.ids), config);
    // max_element returns the first maximum, i.e. the smallest id on ties
    const auto best = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    out.ids.push_back(best);
    out.score += lp[static_cast<std::size_t>(best)];
    if (best == kEos) break;
  }
  return out;
}

std::vector<Candidate> beam_search(const NextLogits& model, const DecodeConfig& config) {
  config.validate();
  const auto beam = static_cast<std::size_t>(config.beam_size);
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;

  for (int step = 0; step < config.max_len && !live.empty(); ++step) {
    std::vector<Hypothesis> expansions;
    for (const auto& hyp : live) {
      const auto lp = step_log_probs(hyp.ids, model(hyp.ids), config);
      // Only a hypothesis' own top-`beam` tokens can survive the global cut.
      std::vector<TokenId> toks;
      for (std::size_t t = 0; t < lp.size(); ++t) {
        if (lp[t] != kNegInf) toks.push_back(static_cast<TokenId>(t));
      }
      const std::size_t keep = std::min(beam, toks.size());
      std::partial_sort(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(keep), toks.end(),
                        [&](TokenId a, TokenId b) {
                          const auto ia = static_cast<std::size_t>(a);
                          const auto ib = static_cast<std::size_t>(b);
                          return lp[ia] != lp[ib] ? lp[ia] > lp[ib] : a < b;
                        });
      for (std::size_t i = 0; i < keep; ++i) {
        Hypothesis next{hyp.ids, hyp.score + lp[static_cast<std::size_t>(toks[i])]};
        next.ids.push_back(toks[i]);
        expansions.push_back(std::move(next));
      }
    }
    std::sort(expansions.begin(), expansions.end(), better);
    if (expansions.size() > beam) expansions.resize(beam);

    live.clear();
    for (auto& h : expansions) {
      const bool done = h.ids.back() == kEos || static_cast<int>(h.ids.size()) >= config.max_len;
      (done ? finished : live).push_back(std::move(h));
    }

    // Scores never increase, so once `beam` finished hypotheses beat every
    // live one strictly, nothing can change the final ordering.
    if (config.length_penalty == 0.0 && finished.size() >= beam && !live.empty()) {
      std::sort(finished.begin(), finished.end(), better);
      double best_live = kNegInf;
      for (const auto& h : live) best_live = std::max(best_live, h.score);
      if (finished[beam - 1].score > best_live) live.clear();
    }
  }
  for (auto& h : live) finished.push_back(std::move(h));

  const double lp = config.length_penalty;
  std::sort(finished.begin(), finished.end(), [lp](const Hypothesis& a, const Hypothesis& b) {
    const double sa = ranking_score(a, lp), sb = ranking_score(b, lp);
    if (sa != sb) return sa > sb;
    return a.ids < b.ids;
  });
  if (finished.size() > beam) finished.resize(beam);
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < finished.size(); ++i) {
    out.push_back(Candidate{std::move(finished[i].ids), finished[i].score, static_cast<int>(i)});
  }
  return out;
}

Candidate rerank(std::span<const Candidate> candidates, std::string_view tweet_text, Rerank metric,
                 const Vocab& vocab) {
  if (candidates.empty()) throw Error(Errc::EmptyCandidates, "nothing to rerank");
  if (metric == Rerank::None) {
    return *std::min_element(candidates.begin(), candidates.end(),
                             [](const Candidate& a, const Candidate& b) { return a.beam_rank < b.beam_rank; });
  }
  const auto tweet = text::metric_tokens(tweet_text);
  const Candidate* best = nullptr;
  double best_score = 0.0;
  for (const auto& c : candidates) {
    const auto toks = text::metric_tokens(vocab.decode(c.ids));
    const double s = metric == Rerank::RougeL ? metrics::rouge_l(toks, tweet)
                                              : metrics::sentence_bleu4(toks, tweet);
    if (best == nullptr || s > best_score || (s == best_score && c.beam_rank < best->beam_rank)) {
      best = &c;
      best_score = s;
    }
  }
  return *best;
}

Candidate decode(const NextLogits& model, const DecodeConfig& config, std::string_view tweet_text,
                 const Vocab& vocab) {
  if (config.method == Method::Greedy) return greedy(model, config);
  const auto beams = beam_search(model, config);
  return rerank(beams, tweet_text, config.rerank, vocab);
}

}  // namespace alttext::decoding
