#include <doctest.h>

#include <cmath>
#include <sstream>

#include "alttext/error.hpp"
#include "alttext/metrics.hpp"
#include "oracles.hpp"

using namespace alttext;
using namespace alttext::metrics;

namespace {

std::vector<EvalPair> pairs_of(const std::vector<std::pair<std::string, std::string>>& raw) {
  std::vector<EvalPair> out;
  for (const auto& [c, r] : raw) out.push_back(metrics::make_pair(c, r));
  return out;
}

double meteor_s(const std::string& c, const std::string& r) {
  const auto p = metrics::make_pair(c, r);
  return meteor(p.candidate, p.reference);
}

double rouge_s(const std::string& c, const std::string& r, double beta = 1.2) {
  const auto p = metrics::make_pair(c, r);
  return rouge_l(p.candidate, p.reference, beta);
}

}  // namespace

TEST_CASE("bleu4") {
  const auto same = pairs_of({{"a b c d e", "a b c d e"}, {"the cat sat on it", "the cat sat on it"}});
  CHECK(bleu4(same) == doctest::Approx(1.0));
  CHECK(bleu4(pairs_of({{"x y z w", "a b c d"}})) == 0.0);
  // clipped precisions 5/6, 3/5, 2/4, 1/3; c = 6, r = 7
  const double expect = std::exp(1.0 - 7.0 / 6.0) * std::pow(5.0 / 6 * 3.0 / 5 * 2.0 / 4 * 1.0 / 3, 0.25);
  CHECK(std::abs(bleu4(pairs_of({{"the cat sat on the mat", "the cat sat on a mat there"}})) - expect) < 1e-12);
  CHECK_THROWS_AS(bleu4(std::vector<EvalPair>{}), Error);
  CHECK(bleu4(pairs_of({{"", "a b c d"}})) == 0.0);
}

TEST_CASE("rouge_l") {
  CHECK(rouge_s("a b c d e", "a b c d e") == doctest::Approx(1.0));
  CHECK(std::abs(rouge_s("a c d", "a b c d") - 2.44 * 0.75 / (0.75 + 1.44)) < 1e-12);
  CHECK(rouge_s("x y", "a b") == 0.0);
  // beta limits: large beta tends to recall, small beta to precision
  CHECK(std::abs(rouge_s("a c d", "a b c d", 100.0) - 0.75) < 1e-3);
  CHECK(std::abs(rouge_s("a c d e f", "a b c d", 0.01) - 3.0 / 5.0) < 1e-3);
  CHECK(rouge_s("b a", "a b") < rouge_s("a b", "a b"));
}

TEST_CASE("meteor") {
  CHECK(std::abs(meteor_s("a b c d e", "a b c d e") - (1.0 - 0.5 / 125.0)) < 1e-12);
  CHECK(meteor_s("x y", "a b") == 0.0);
  CHECK(std::abs(meteor_s("b a", "a b") - 0.5) < 1e-12);
  // m = 4, P = 1, R = 0.8, chunks = 2
  const double fmean = 10 * 0.8 / (0.8 + 9);
  CHECK(std::abs(meteor_s("a b c d", "a b x c d") - fmean * (1 - 0.5 * 0.125)) < 1e-12);
  const auto al = meteor_align(oracle::toks("the cat the"), oracle::toks("the the cat"));
  CHECK(al.pairs.size() == 3);
  CHECK(al.crossings == 1);
}

TEST_CASE("cider") {
  // idf of every reference unigram is log(3/2); pair 2's vectors are
  // (a: 1, c: 2) and (c: 1, d: 1) in idf units, cosine 2/sqrt(10)
  const auto p = pairs_of({{"a b", "a b"}, {"c c a", "c d"}, {"b d", "e f"}});
  const auto per = cider_per_pair(p);
  CHECK(std::abs(per[0] - 5.0) < 1e-12);
  CHECK(std::abs(per[1] - 5.0 / std::sqrt(10.0)) < 1e-12);
  CHECK(per[2] == 0.0);
  CHECK(std::abs(cider(p) - (5.0 + 5.0 / std::sqrt(10.0)) / 3.0) < 1e-12);
  const auto same = pairs_of({{"one two three four", "one two three four"}, {"five six seven eight", "five six seven eight"}, {"nine ten eleven twelve", "nine ten eleven twelve"}});
  for (double s : cider_per_pair(same)) CHECK(s == doctest::Approx(10.0));
  CHECK_THROWS_AS(cider(pairs_of({{"a", "a"}})), Error);
}

TEST_CASE("report and evaluate") {
  CHECK(MetricReport::display(0.0182649) == 1.826);
  CHECK(MetricReport::display(1.0) == 100.0);
  const std::vector<corpus::Sample> refs{
      {"t1", "i1", "", 0, "tw", "a red barn at sunset"},
      {"t2", "i2", "", 0, "tw", "two dogs playing in snow"},
      {"t3", "i3", "", 0, "tw", "a bowl of ripe fruit"},
  };
  std::vector<Prediction> preds;
  for (const auto& r : refs) preds.push_back(Prediction{r.tweet_id, r.image_id, r.alt_text, 0.0, 0});
  const auto rep = evaluate(preds, refs);
  CHECK(MetricReport::display(rep.bleu4) == 100.0);
  CHECK(MetricReport::display(rep.rouge_l) == 100.0);
  CHECK(MetricReport::display(rep.cider) == 1000.0);
  CHECK(rep.meteor == doctest::Approx(1.0 - 0.5 / 125.0));
  preds[0].image_id = "other";
  CHECK_THROWS_AS(evaluate(preds, refs), Error);

  std::ostringstream os;
  write_report_tsv({ReportRow{"Ours", "BS", rep}}, {"config_hash=1"}, os);
  CHECK(os.str() == "# config_hash=1\nsystem\tdecoding\tBLEU@4\tMETEOR\tROUGE-L\tCIDEr\tpairs\n"
                    "Ours\tBS\t100.000\t99.600\t100.000\t1000.000\t3\n");
  CHECK(format_report_table({ReportRow{"Ours", "BS", rep}}).find("1000.000") != std::string::npos);
}
