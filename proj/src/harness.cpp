#include "alttext/harness.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "alttext/error.hpp"
#include "alttext/text.hpp"

namespace alttext::harness {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kClassWords = {
    "checker", "stripe", "cross",  "ring",  "zigzag", "dot",   "grid",  "wave",
    "spiral",  "star",   "arrow",  "block", "diamond", "bar",  "frame", "corner"};

const std::vector<std::string> kAttrWords = {
    "rain",  "music",  "coffee",  "soccer", "travel", "garden",   "winter", "cooking",
    "books", "ocean",  "chess",   "birthday", "science", "autumn", "painting", "hiking"};

const std::vector<std::string> kTweetTemplates = {
    "so excited about {} today",
    "thinking about {} again this week",
    "new post on {} is up",
    "who else loves {} right now",
    "sharing some {} vibes with everyone",
};

std::string fill(const std::string& tmpl, const std::string& word) {
  std::string out = tmpl;
  out.replace(out.find("{}"), 2, word);
  return out;
}

std::string word_for(const std::vector<std::string>& list, const char* stem, int i) {
  if (i < static_cast<int>(list.size())) return list[static_cast<std::size_t>(i)];
  return stem + std::to_string(i);
}

// Distinct 4x4 block masks with 5..11 lit blocks, kept far apart in Hamming
// distance so the toy encoder separates classes.
std::vector<std::uint16_t> glyph_masks(int n, std::mt19937_64& rng) {
  std::vector<std::uint16_t> masks;
  std::uniform_int_distribution<int> bits(0, 0xFFFF);
  int min_dist = 5;
  int tries = 0;
  while (static_cast<int>(masks.size()) < n) {
    const auto m = static_cast<std::uint16_t>(bits(rng));
    const int pop = std::popcount(m);
    bool ok = pop >= 5 && pop <= 11;
    for (auto other : masks) {
      if (std::popcount(static_cast<unsigned>(m ^ other)) < min_dist) ok = false;
    }
    if (ok) {
      masks.push_back(m);
    } else if (++tries > 20000 && min_dist > 1) {
      --min_dist;
      tries = 0;
    }
  }
  return masks;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_samples < 1) throw Error(Errc::InvalidArgument, "synth needs n_samples >= 1");
  if (n_classes < 2 || n_attrs < 2) throw Error(Errc::InvalidArgument, "synth needs >= 2 classes and attrs");
  if (n_classes > 4096) throw Error(Errc::InvalidArgument, "too many glyph classes");
  if (image_size < 4 || image_size % 4 != 0) throw Error(Errc::InvalidArgument, "image_size must be a multiple of 4");
  if (noise < 0 || noise > 100) throw Error(Errc::InvalidArgument, "noise must be in [0, 100]");
}

SynthData synth_dataset(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SynthData data;
  for (int c = 0; c < spec.n_classes; ++c) data.class_words.push_back(word_for(kClassWords, "shape", c));
  for (int a = 0; a < spec.n_attrs; ++a) data.attr_words.push_back(word_for(kAttrWords, "topic", a));
  const auto masks = glyph_masks(spec.n_classes, rng);

  std::uniform_int_distribution<int> pick_class(0, spec.n_classes - 1);
  std::uniform_int_distribution<int> pick_attr(0, spec.n_attrs - 1);
  std::uniform_int_distribution<std::size_t> pick_tmpl(0, kTweetTemplates.size() - 1);
  std::uniform_int_distribution<int> jitter(-spec.noise, spec.noise);
  const int block = spec.image_size / 4;

  for (int i = 0; i < spec.n_samples; ++i) {
    SynthSample label{pick_class(rng), pick_attr(rng)};
    const std::string& cls = data.class_words[static_cast<std::size_t>(label.image_class)];
    const std::string& attr = data.attr_words[static_cast<std::size_t>(label.attribute)];
    char id[32];
    std::snprintf(id, sizeof id, "%06d", i);

    corpus::Sample s;
    s.tweet_id = std::string("t") + id;
    s.image_id = std::string("i") + id;
    s.path = "images/" + s.image_id + ".pgm";
    s.created_at = 1600000000 + i;
    s.tweet_text = fill(kTweetTemplates[pick_tmpl(rng)], attr);
    s.alt_text = "a " + cls + " pattern about " + attr;

    Raster img(spec.image_size, spec.image_size, 1);
    const auto mask = masks[static_cast<std::size_t>(label.image_class)];
    for (int y = 0; y < spec.image_size; ++y) {
      for (int x = 0; x < spec.image_size; ++x) {
        const int bit = (y / block) * 4 + x / block;
        const int base = (mask >> bit) & 1 ? 220 : 35;
        img.at(x, y) = static_cast<std::uint8_t>(std::clamp(base + jitter(rng), 0, 255));
      }
    }
    data.samples.push_back(std::move(s));
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }
  return data;
}

void write_synth(const SynthData& data, const fs::path& dir) {
  fs::create_directories(dir / "images");
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    save_pnm(data.images[i], dir / data.samples[i].path);
  }
  corpus::save_samples(data.samples, (dir / "corpus.jsonl").string());
}

fs::path resolve_image(const corpus::Sample& s, const fs::path& image_root) {
  const fs::path p(s.path);
  return p.is_absolute() ? p : image_root / p;
}

vision::EmbeddingMap embed_toy(const std::vector<corpus::Sample>& samples, const fs::path& image_root,
                               std::uint64_t seed) {
  const vision::ToyEncoder encoder(seed);
  vision::EmbeddingMap out;
  for (const auto& s : samples) {
    if (out.count(s.image_id)) continue;
    out.emplace(s.image_id, encoder.encode(load_pnm(resolve_image(s, image_root)), s.image_id));
  }
  return out;
}

std::vector<std::string> shuffled_tweets(const std::vector<corpus::Sample>& samples, std::uint64_t seed) {
  const std::size_t n = samples.size();
  std::vector<std::string> out(n);
  if (n < 2) {
    for (std::size_t i = 0; i < n; ++i) out[i] = samples[i].tweet_text;
    return out;
  }
  // A random cyclic shift over a shuffled order is a derangement.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < n; ++i) out[order[i]] = samples[order[(i + 1) % n]].tweet_text;
  return out;
}

std::vector<std::string> conditioning_tweets(const std::vector<corpus::Sample>& samples,
                                             captioner::Variant variant, std::uint64_t seed) {
  if (variant == captioner::Variant::RandText) return shuffled_tweets(samples, seed);
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.tweet_text);
  return out;
}

Vocab build_vocab(const std::vector<corpus::Sample>& samples, int max_size) {
  std::vector<std::string> texts;
  for (const auto& s : samples) {
    texts.push_back(s.tweet_text);
    texts.push_back(s.alt_text);
  }
  return Vocab::build(texts, max_size);
}

namespace {

std::vector<TokenId> encode_cropped(const Vocab& vocab, std::string_view text) {
  auto ids = vocab.encode(text);
  if (ids.size() > static_cast<std::size_t>(corpus::kMaxTokens)) ids.resize(corpus::kMaxTokens);
  return ids;
}

std::span<const float> image_of(const corpus::Sample& s, const vision::EmbeddingMap& embeddings,
                                bool required) {
  const auto it = embeddings.find(s.image_id);
  if (it == embeddings.end()) {
    if (!required) return {};
    throw Error(Errc::MissingEmbedding, "no embedding for image " + s.image_id);
  }
  return it->second.vec;
}

}  // namespace

std::vector<captioner::Example> build_examples(const std::vector<corpus::Sample>& samples,
                                               const vision::EmbeddingMap& embeddings, const Vocab& vocab,
                                               captioner::Variant variant, std::uint64_t seed) {
  const auto tweets = conditioning_tweets(samples, variant, seed);
  const bool need_image = captioner::uses_image(variant);
  std::vector<captioner::Example> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    captioner::Example ex;
    ex.image = image_of(samples[i], embeddings, need_image);
    ex.tweet = encode_cropped(vocab, tweets[i]);
    ex.alt = encode_cropped(vocab, samples[i].alt_text);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Prediction> generate(const captioner::ModelState& state, const Vocab& vocab,
                                 const std::vector<corpus::Sample>& samples,
                                 const vision::EmbeddingMap& embeddings, const decoding::DecodeConfig& decode,
                                 std::uint64_t seed) {
  decode.validate();
  if (state.config.vocab_size != vocab.size()) {
    throw Error(Errc::DimensionMismatch, "checkpoint vocabulary size differs from the vocabulary file");
  }
  const auto variant = state.config.variant;
  const auto tweets = conditioning_tweets(samples, variant, seed);
  std::vector<Prediction> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const captioner::CaptionContext ctx(state, image_of(samples[i], embeddings, captioner::uses_image(variant)),
                                        encode_cropped(vocab, tweets[i]));
    decoding::DecodeConfig dc = decode;
    dc.max_len = std::min(dc.max_len, ctx.max_generated());
    const decoding::NextLogits model = [&ctx](std::span<const TokenId> g) { return ctx.next_logits(g); };
    const auto best = decoding::decode(model, dc, tweets[i], vocab);
    out.push_back(Prediction{samples[i].tweet_id, samples[i].image_id, vocab.decode(best.ids), best.score,
                             best.beam_rank});
  }
  return out;
}

std::vector<Prediction> baseline_nearest_neighbor(const std::vector<corpus::Sample>& test,
                                                  const std::vector<corpus::Sample>& train,
                                                  const vision::EmbeddingMap& embeddings) {
  std::vector<vision::ImageEmbedding> index;
  std::map<std::string, const corpus::Sample*> by_image;
  for (const auto& s : train) {
    const auto it = embeddings.find(s.image_id);
    if (it == embeddings.end()) throw Error(Errc::MissingEmbedding, "no embedding for image " + s.image_id);
    if (by_image.emplace(s.image_id, &s).second) index.push_back(it->second);
  }
  std::vector<Prediction> out;
  out.reserve(test.size());
  for (const auto& s : test) {
    const auto it = embeddings.find(s.image_id);
    if (it == embeddings.end()) throw Error(Errc::MissingEmbedding, "no embedding for image " + s.image_id);
    const auto& match = vision::nearest_neighbor(it->second, index);
    out.push_back(Prediction{s.tweet_id, s.image_id, by_image.at(match)->alt_text, 0.0, 0});
  }
  return out;
}

std::vector<Prediction> baseline_copy_tweet(const std::vector<corpus::Sample>& test) {
  std::vector<Prediction> out;
  out.reserve(test.size());
  for (const auto& s : test) out.push_back(Prediction{s.tweet_id, s.image_id, s.tweet_text, 0.0, 0});
  return out;
}

namespace {

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::uint64_t config_hash(const RunConfig& c) {
  std::ostringstream os;
  os << "corpus=" << c.corpus.string() << "\nembeddings=" << c.embeddings.string()
     << "\ncheckpoint=" << c.checkpoint.string() << "\nvocab=" << c.vocab.string() << "\nsystem=" << c.system
     << "\nmethod=" << decoding::method_label(c.decode) << "\nbeam=" << c.decode.beam_size
     << "\nmax_len=" << c.decode.max_len << "\nallow_unk=" << c.decode.allow_unk
     << "\nlength_penalty=" << c.decode.length_penalty << "\nseed=" << c.seed << "\ncheckpoint_bytes=";
  const std::string canon = os.str() + file_bytes(c.checkpoint);
  return text::fnv1a64(canon);
}

std::vector<std::string> report_notes(std::uint64_t hash) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "config_hash=%016llx", static_cast<unsigned long long>(hash));
  return {buf, "values are raw scores x100",
          "METEOR uses exact unigram matches only (no stemming or synonyms)",
          "CIDEr idf = log(N / (1 + reference document frequency)) over the evaluated references"};
}

metrics::MetricReport run_experiment(const RunConfig& config) {
  for (const auto& p : {config.corpus, config.checkpoint, config.vocab}) {
    if (!fs::exists(p)) throw Error(Errc::Io, "missing input " + p.string());
  }
  const auto samples = corpus::load_samples(config.corpus.string());
  const auto state = captioner::load_checkpoint(config.checkpoint);
  const auto vocab = Vocab::load(config.vocab);
  vision::EmbeddingMap embeddings;
  if (captioner::uses_image(state.config.variant)) embeddings = vision::load_embeddings(config.embeddings);

  const auto preds = generate(state, vocab, samples, embeddings, config.decode, config.seed);
  save_predictions(preds, config.predictions.string());
  const auto report = metrics::evaluate(preds, samples);

  std::ofstream out(config.report, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + config.report.string());
  metrics::write_report_tsv({metrics::ReportRow{config.system, decoding::method_label(config.decode), report}},
                            report_notes(config_hash(config)), out);
  return report;
}

}  // namespace alttext::harness
