#include "alttext/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "alttext/error.hpp"
#include "alttext/text.hpp"

namespace alttext::metrics {

namespace {

using NgramCounts = std::map<std::vector<std::string>, double>;

NgramCounts ngrams(const Tokens& toks, std::size_t n) {
  NgramCounts out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                 toks.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
  }
  return out;
}

double bleu_from_stats(const double (&match)[4], const double (&total)[4], double c, double r) {
  if (c == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (match[n] == 0.0 || total[n] == 0.0) return 0.0;
    log_sum += std::log(match[n] / total[n]);
  }
  const double bp = std::exp(std::min(0.0, 1.0 - r / c));
  return bp * std::exp(log_sum / 4.0);
}

void accumulate_bleu(const EvalPair& p, double (&match)[4], double (&total)[4]) {
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cand = ngrams(p.candidate, n);
    const auto ref = ngrams(p.reference, n);
    for (const auto& [g, cnt] : cand) {
      total[n - 1] += cnt;
      const auto it = ref.find(g);
      if (it != ref.end()) match[n - 1] += std::min(cnt, it->second);
    }
  }
}

std::size_t count_crossings(const std::vector<AlignedPair>& pairs) {
  std::size_t x = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const bool a = pairs[i].cand < pairs[j].cand;
      const bool b = pairs[i].ref < pairs[j].ref;
      if (a != b) ++x;
    }
  }
  return x;
}

// All size-k subsets of {0..n-1} in lexicographic order.
std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur(k);
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    out.push_back(cur);
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

constexpr double kMaxAlignmentSearch = 20000.0;

struct TypeSlots {
  std::vector<std::size_t> cand_pos;
  std::vector<std::size_t> ref_pos;
  std::size_t m = 0;
};

}  // namespace

EvalPair make_pair(std::string_view candidate, std::string_view reference) {
  return EvalPair{text::metric_tokens(candidate), text::metric_tokens(reference)};
}

double bleu4(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw Error(Errc::EmptyCorpus, "BLEU over zero pairs");
  double match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double c = 0.0, r = 0.0;
  for (const auto& p : pairs) {
    accumulate_bleu(p, match, total);
    c += static_cast<double>(p.candidate.size());
    r += static_cast<double>(p.reference.size());
  }
  return bleu_from_stats(match, total, c, r);
}

double sentence_bleu4(const Tokens& candidate, const Tokens& reference) {
  const EvalPair p{candidate, reference};
  return bleu4(std::span<const EvalPair>(&p, 1));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference, double beta) {
  const std::size_t lcs = lcs_length(candidate, reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

std::size_t count_chunks(const std::vector<AlignedPair>& sorted_pairs) {
  if (sorted_pairs.empty()) return 0;
  std::size_t chunks = 1;
  for (std::size_t i = 1; i < sorted_pairs.size(); ++i) {
    const auto& a = sorted_pairs[i - 1];
    const auto& b = sorted_pairs[i];
    if (!(b.cand == a.cand + 1 && b.ref == a.ref + 1)) ++chunks;
  }
  return chunks;
}

MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference) {
  std::map<std::string, TypeSlots> types;
  for (std::size_t i = 0; i < candidate.size(); ++i) types[candidate[i]].cand_pos.push_back(i);
  for (std::size_t j = 0; j < reference.size(); ++j) {
    auto it = types.find(reference[j]);
    if (it != types.end()) it->second.ref_pos.push_back(j);
  }
  std::vector<TypeSlots> shared;
  double search = 1.0;
  for (auto& [word, slots] : types) {
    slots.m = std::min(slots.cand_pos.size(), slots.ref_pos.size());
    if (slots.m == 0) continue;
    search *= binomial(slots.cand_pos.size(), slots.m) * binomial(slots.ref_pos.size(), slots.m);
    shared.push_back(slots);
  }

  MeteorAlignment best;
  if (shared.empty()) return best;

  if (search > kMaxAlignmentSearch) {
    // Leftmost-greedy fallback for pathological repetition.
    std::vector<bool> used(reference.size(), false);
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      for (std::size_t j = 0; j < reference.size(); ++j) {
        if (!used[j] && candidate[i] == reference[j]) {
          used[j] = true;
          best.pairs.push_back({i, j});
          break;
        }
      }
    }
  } else {
    // Per type, every choice of matched candidate and reference positions;
    // within a type the chosen positions are paired in order.
    std::vector<std::vector<std::vector<AlignedPair>>> options;
    for (const auto& s : shared) {
      std::vector<std::vector<AlignedPair>> opts;
      for (const auto& ci : combinations(s.cand_pos.size(), s.m)) {
        for (const auto& rj : combinations(s.ref_pos.size(), s.m)) {
          std::vector<AlignedPair> o;
          for (std::size_t t = 0; t < s.m; ++t) o.push_back({s.cand_pos[ci[t]], s.ref_pos[rj[t]]});
          opts.push_back(std::move(o));
        }
      }
      options.push_back(std::move(opts));
    }
    std::vector<std::size_t> idx(options.size(), 0);
    bool have = false;
    while (true) {
      std::vector<AlignedPair> pairs;
      for (std::size_t t = 0; t < options.size(); ++t) {
        const auto& o = options[t][idx[t]];
        pairs.insert(pairs.end(), o.begin(), o.end());
      }
      std::sort(pairs.begin(), pairs.end());
      const std::size_t x = count_crossings(pairs);
      if (!have || x < best.crossings || (x == best.crossings && pairs < best.pairs)) {
        best.pairs = std::move(pairs);
        best.crossings = x;
        have = true;
      }
      std::size_t t = 0;
      while (t < idx.size() && ++idx[t] == options[t].size()) idx[t++] = 0;
      if (t == idx.size()) break;
    }
  }
  std::sort(best.pairs.begin(), best.pairs.end());
  best.crossings = count_crossings(best.pairs);
  best.chunks = count_chunks(best.pairs);
  return best;
}

double meteor(const Tokens& candidate, const Tokens& reference) {
  const auto al = meteor_align(candidate, reference);
  const auto m = static_cast<double>(al.pairs.size());
  if (m == 0.0) return 0.0;
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(al.chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return fmean * (1.0 - penalty);
}

std::vector<double> cider_per_pair(std::span<const EvalPair> pairs) {
  if (pairs.size() < 2) throw Error(Errc::CorpusTooSmall, "CIDEr needs at least two pairs");
  const auto n_docs = static_cast<double>(pairs.size());
  std::vector<double> scores(pairs.size(), 0.0);
  for (std::size_t n = 1; n <= 4; ++n) {
    std::vector<NgramCounts> cand(pairs.size()), ref(pairs.size());
    std::map<std::vector<std::string>, double> df;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      cand[i] = ngrams(pairs[i].candidate, n);
      ref[i] = ngrams(pairs[i].reference, n);
      for (const auto& [g, cnt] : ref[i]) df[g] += 1.0;
    }
    const auto idf = [&](const std::vector<std::string>& g) {
      const auto it = df.find(g);
      return std::log(n_docs / (1.0 + (it == df.end() ? 0.0 : it->second)));
    };
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      double dotp = 0.0, nc = 0.0, nr = 0.0;
      for (const auto& [g, cnt] : cand[i]) {
        const double w = cnt * idf(g);
        nc += w * w;
        const auto it = ref[i].find(g);
        if (it != ref[i].end()) dotp += w * it->second * idf(g);
      }
      for (const auto& [g, cnt] : ref[i]) {
        const double w = cnt * idf(g);
        nr += w * w;
      }
      if (nc > 0.0 && nr > 0.0) scores[i] += 10.0 * dotp / (std::sqrt(nc) * std::sqrt(nr)) / 4.0;
    }
  }
  return scores;
}

double cider(std::span<const EvalPair> pairs) {
  const auto per = cider_per_pair(pairs);
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

double MetricReport::display(double raw) { return std::round(raw * 100.0 * 1000.0) / 1000.0; }

MetricReport score(std::span<const EvalPair> pairs) {
  MetricReport rep;
  rep.pairs = pairs.size();
  rep.bleu4 = bleu4(pairs);
  double m = 0.0, r = 0.0;
  for (const auto& p : pairs) {
    m += meteor(p.candidate, p.reference);
    r += rouge_l(p.candidate, p.reference);
  }
  rep.meteor = m / static_cast<double>(pairs.size());
  rep.rouge_l = r / static_cast<double>(pairs.size());
  rep.cider = cider(pairs);
  return rep;
}

std::vector<EvalPair> pair_with_references(const std::vector<Prediction>& predictions,
                                           const std::vector<corpus::Sample>& references) {
  std::map<std::pair<std::string, std::string>, const corpus::Sample*> index;
  for (const auto& s : references) index.emplace(std::make_pair(s.tweet_id, s.image_id), &s);
  std::vector<EvalPair> out;
  out.reserve(predictions.size());
  for (const auto& p : predictions) {
    const auto it = index.find({p.tweet_id, p.image_id});
    if (it == index.end()) {
      throw Error(Errc::MissingReference, "no reference for " + p.tweet_id + "/" + p.image_id);
    }
    out.push_back(metrics::make_pair(p.caption, it->second->alt_text));
  }
  return out;
}

MetricReport evaluate(const std::vector<Prediction>& predictions,
                      const std::vector<corpus::Sample>& references) {
  const auto pairs = pair_with_references(predictions, references);
  return score(pairs);
}

namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::vector<std::string> row_cells(const ReportRow& r) {
  return {r.system,
          r.decoding,
          fixed3(MetricReport::display(r.metrics.bleu4)),
          fixed3(MetricReport::display(r.metrics.meteor)),
          fixed3(MetricReport::display(r.metrics.rouge_l)),
          fixed3(MetricReport::display(r.metrics.cider)),
          std::to_string(r.metrics.pairs)};
}

const std::vector<std::string> kHeader = {"system", "decoding", "BLEU@4", "METEOR", "ROUGE-L", "CIDEr", "pairs"};

}  // namespace

void write_report_tsv(const std::vector<ReportRow>& rows, const std::vector<std::string>& notes,
                      std::ostream& out) {
  for (const auto& n : notes) out << "# " << n << '\n';
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "\t" : "") << cells[i];
    out << '\n';
  };
  line(kHeader);
  for (const auto& r : rows) line(row_cells(r));
}

std::string format_report_table(const std::vector<ReportRow>& rows) {
  std::vector<std::vector<std::string>> table{kHeader};
  for (const auto& r : rows) table.push_back(row_cells(r));
  std::vector<std::size_t> width(kHeader.size(), 0);
  for (const auto& row : table) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream os;
  for (const auto& row : table) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << "  ";
      // text columns left-aligned, numbers right-aligned
      if (i < 2) os << std::left; else os << std::right;
      os << std::setw(static_cast<int>(width[i])) << row[i];
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace alttext::metrics
