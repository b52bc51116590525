#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "alttext/config_file.hpp"
#include "alttext/error.hpp"
#include "alttext/harness.hpp"
#include "alttext/text.hpp"

using namespace alttext;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("alttext_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

vision::EmbeddingMap embed(const harness::SynthData& d, std::uint64_t seed) {
  vision::ToyEncoder enc(seed);
  vision::EmbeddingMap m;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    m.emplace(d.samples[i].image_id, enc.encode(d.images[i], d.samples[i].image_id));
  }
  return m;
}

}  // namespace

TEST_CASE("synthetic data") {
  harness::SynthSpec spec;
  spec.n_samples = 4;
  spec.n_classes = 2;
  spec.n_attrs = 2;
  spec.seed = 7;
  const auto a = harness::synth_dataset(spec);
  const auto b = harness::synth_dataset(spec);
  CHECK(a.samples == b.samples);
  for (std::size_t i = 0; i < a.images.size(); ++i) CHECK(encode_pnm(a.images[i]) == encode_pnm(b.images[i]));

  const auto d1 = scratch("synth1"), d2 = scratch("synth2");
  harness::write_synth(a, d1);
  harness::write_synth(b, d2);
  CHECK(slurp(d1 / "corpus.jsonl") == slurp(d2 / "corpus.jsonl"));
  CHECK(slurp(d1 / a.samples[0].path) == slurp(d2 / a.samples[0].path));
  fs::remove_all(d1);
  fs::remove_all(d2);

  spec.n_samples = 200;
  spec.n_classes = 8;
  spec.n_attrs = 8;
  const auto big = harness::synth_dataset(spec);
  for (std::size_t i = 0; i < big.samples.size(); ++i) {
    const auto toks = text::split(big.samples[i].alt_text);
    int cls = 0, attr = 0;
    for (const auto& t : toks) {
      cls += std::count(big.class_words.begin(), big.class_words.end(), t) > 0;
      attr += std::count(big.attr_words.begin(), big.attr_words.end(), t) > 0;
    }
    CHECK(cls == 1);
    CHECK(attr == 1);
    const auto tweet = text::split(big.samples[i].tweet_text);
    for (const auto& w : big.class_words) CHECK(std::count(tweet.begin(), tweet.end(), w) == 0);
    CHECK(std::count(tweet.begin(), tweet.end(), big.attr_words[static_cast<std::size_t>(big.labels[i].attribute)]) == 1);
  }

  // same-class images are closer than any cross-class pair
  const auto emb = embed(big, 3);
  double worst_same = 2, best_cross = -2;
  for (std::size_t i = 0; i < 100; ++i) {
    for (std::size_t j = i + 1; j < 100; ++j) {
      const double d = vision::dot(emb.at(big.samples[i].image_id).vec, emb.at(big.samples[j].image_id).vec);
      if (big.labels[i].image_class == big.labels[j].image_class) worst_same = std::min(worst_same, d);
      else best_cross = std::max(best_cross, d);
    }
  }
  CHECK(worst_same > best_cross);

  spec.n_classes = 1;
  CHECK_THROWS_AS(harness::synth_dataset(spec), Error);
}

TEST_CASE("tweet shuffling is a seeded derangement") {
  harness::SynthSpec spec;
  spec.n_samples = 50;
  spec.seed = 1;
  auto d = harness::synth_dataset(spec);
  for (std::size_t i = 0; i < d.samples.size(); ++i) d.samples[i].tweet_text = "tweet " + std::to_string(i);
  const auto s = harness::shuffled_tweets(d.samples, 9);
  CHECK(s == harness::shuffled_tweets(d.samples, 9));
  std::multiset<std::string> orig, perm(s.begin(), s.end());
  for (std::size_t i = 0; i < s.size(); ++i) {
    orig.insert(d.samples[i].tweet_text);
    CHECK(s[i] != d.samples[i].tweet_text);
  }
  CHECK(orig == perm);
}

TEST_CASE("baselines") {
  harness::SynthSpec spec;
  spec.n_samples = 120;
  spec.seed = 4;
  const auto d = harness::synth_dataset(spec);
  const auto emb = embed(d, 5);
  const std::vector<corpus::Sample> train(d.samples.begin(), d.samples.begin() + 70);
  std::vector<corpus::Sample> test(d.samples.begin() + 70, d.samples.end());

  const auto nn = harness::baseline_nearest_neighbor(test, train, emb);
  REQUIRE(nn.size() == test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    // exhaustive scan, ties to the smallest image id
    const auto& q = emb.at(test[i].image_id).vec;
    const corpus::Sample* best = nullptr;
    double best_s = -3;
    for (const auto& t : train) {
      const double s = vision::dot(q, emb.at(t.image_id).vec);
      if (s > best_s || (s == best_s && t.image_id < best->image_id)) {
        best_s = s;
        best = &t;
      }
    }
    CHECK(nn[i].caption == best->alt_text);
    CHECK(nn[i].tweet_id == test[i].tweet_id);
  }
  // a test image that is a train image gets that sample's alt-text
  auto twin = train[3];
  twin.tweet_id = "twin";
  twin.alt_text = "unused";
  const auto own = harness::baseline_nearest_neighbor({twin}, train, emb);
  CHECK(own[0].caption == train[3].alt_text);

  auto ghost = test[0];
  ghost.image_id = "ghost";
  CHECK_THROWS_AS(harness::baseline_nearest_neighbor({ghost}, train, emb), Error);

  const auto copy = harness::baseline_copy_tweet(test);
  CHECK(copy[0].caption == test[0].tweet_text);
  CHECK(metrics::evaluate(copy, test).bleu4 < 1.0);
  const std::vector<corpus::Sample> hello{{"t", "i", "", 0, "hello world four tokens", "x"}};
  CHECK(harness::baseline_copy_tweet(hello)[0].caption == "hello world four tokens");
}

TEST_CASE("predictions file") {
  const std::vector<Prediction> p{{"t1", "i1", "a b c", -1.25, 0}, {"t2", "i2", "", -0.1, 3}};
  std::stringstream ss;
  write_predictions(p, ss);
  CHECK(read_predictions(ss) == p);
  std::istringstream bad("tweet_id\timage_id\tcaption\tscore\tbeam_rank\nt\ti\tc\tnotanumber\t0\n");
  CHECK_THROWS_AS(read_predictions(bad), Error);
}

TEST_CASE("config file") {
  std::istringstream in(
      "# toy model\n[model]\nd_model = 32\nn_layers = 1 # inline\nvariant = \"image_only\"\n"
      "[train]\nlr = 0.003\nbatch_size = 16\nverbose = true\nvocab_size = 500\n");
  captioner::ModelConfig m;
  captioner::TrainHyper h;
  int vocab = 0;
  config::apply(config::parse(in), m, h, &vocab);
  CHECK(m.d_model == 32);
  CHECK(m.n_layers == 1);
  CHECK(m.variant == captioner::Variant::ImageOnly);
  CHECK(h.lr == 0.003);
  CHECK(h.batch_size == 16);
  CHECK(h.verbose);
  CHECK(vocab == 500);
  std::istringstream unknown("colour = 3\n");
  CHECK_THROWS_AS(config::apply(config::parse(unknown), m, h), Error);
  std::istringstream junk("just words\n");
  CHECK_THROWS_AS(config::parse(junk), Error);
}

TEST_CASE("run_experiment") {
  const auto dir = scratch("experiment");
  harness::SynthSpec spec;
  spec.n_samples = 12;
  spec.seed = 2;
  const auto d = harness::synth_dataset(spec);
  harness::write_synth(d, dir);
  vision::save_embeddings(harness::embed_toy(d.samples, dir, 1), dir / "emb.atte");
  const Vocab vocab = harness::build_vocab(d.samples, 100);
  vocab.save(dir / "vocab.txt");

  std::vector<std::string> rows;
  for (auto v : {captioner::Variant::TextAndImage, captioner::Variant::ImageOnly, captioner::Variant::TextOnly}) {
    captioner::ModelConfig c;
    c.d_model = 16;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_ff = 32;
    c.vocab_size = vocab.size();
    c.variant = v;
    const auto ckpt = dir / (std::string(captioner::variant_name(v)) + ".attm");
    captioner::save_checkpoint(captioner::init_state(c), ckpt);
    const auto before = slurp(ckpt);

    harness::RunConfig rc;
    rc.corpus = dir / "corpus.jsonl";
    rc.embeddings = dir / "emb.atte";
    rc.checkpoint = ckpt;
    rc.vocab = dir / "vocab.txt";
    rc.decode.max_len = 8;
    rc.system = std::string(captioner::variant_name(v));
    rc.predictions = dir / "a.tsv";
    rc.report = dir / "a_report.tsv";
    harness::run_experiment(rc);
    rc.predictions = dir / "b.tsv";
    rc.report = dir / "b_report.tsv";
    harness::run_experiment(rc);
    CHECK(slurp(dir / "a.tsv") == slurp(dir / "b.tsv"));
    CHECK(slurp(dir / "a_report.tsv") == slurp(dir / "b_report.tsv"));
    CHECK(slurp(ckpt) == before);
    const auto report = slurp(dir / "a_report.tsv");
    CHECK(report.rfind("# config_hash=", 0) == 0);
    rows.push_back(report.substr(report.rfind('\n', report.size() - 2) + 1));
  }
  CHECK(rows.size() == 3);
  CHECK(rows[0].rfind("text_image\tBS\t", 0) == 0);
  CHECK(rows[1].rfind("image_only\t", 0) == 0);

  harness::RunConfig missing;
  missing.corpus = dir / "nope.jsonl";
  CHECK_THROWS_AS(harness::run_experiment(missing), Error);
  fs::remove_all(dir);
}
