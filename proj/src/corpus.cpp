#include "alttext/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "alttext/error.hpp"
#include "alttext/text.hpp"

namespace alttext::corpus {

using json = nlohmann::ordered_json;

namespace {

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(Errc::MalformedRecord, std::string("missing field '") + key + "'");
  }
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) {
    throw Error(Errc::MalformedRecord, std::string("field '") + key + "' is not a string");
  }
  return v.get<std::string>();
}

}  // namespace

RawRecord parse_record_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedRecord, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::MalformedRecord, "record is not a JSON object");

  RawRecord rec;
  rec.tweet_id = require_string(j, "tweet_id");
  if (rec.tweet_id.empty()) throw Error(Errc::MalformedRecord, "empty tweet_id");
  const json& created = require(j, "created_at");
  if (!created.is_number_integer()) {
    throw Error(Errc::MalformedRecord, "field 'created_at' is not an integer");
  }
  rec.created_at = created.get<std::int64_t>();
  rec.tweet_text = require_string(j, "text");

  const json& images = require(j, "images");
  if (!images.is_array()) throw Error(Errc::MalformedRecord, "field 'images' is not an array");
  std::set<std::string> seen_ids;
  for (const json& im : images) {
    if (!im.is_object()) throw Error(Errc::MalformedRecord, "image entry is not an object");
    RawImage img;
    img.image_id = require_string(im, "image_id");
    img.path = require_string(im, "path");
    img.alt_text = require_string(im, "alt_text");
    if (img.image_id.empty()) throw Error(Errc::MalformedRecord, "empty image_id");
    if (!seen_ids.insert(img.image_id).second) {
      throw Error(Errc::MalformedRecord, "duplicate image_id '" + img.image_id + "'");
    }
    if (auto it = im.find("person_spans"); it != im.end()) {
      if (!it->is_array()) throw Error(Errc::MalformedRecord, "person_spans is not an array");
      for (const json& sp : *it) {
        if (!sp.is_array() || sp.size() != 2 || !sp[0].is_number_unsigned() ||
            !sp[1].is_number_unsigned()) {
          throw Error(Errc::MalformedRecord, "person span must be [start, end]");
        }
        ByteSpan span{sp[0].get<std::size_t>(), sp[1].get<std::size_t>()};
        if (!(span.start < span.end && span.end <= img.alt_text.size())) {
          throw Error(Errc::MalformedRecord, "person span out of bounds");
        }
        img.person_spans.push_back(span);
      }
      std::sort(img.person_spans.begin(), img.person_spans.end(),
                [](const ByteSpan& a, const ByteSpan& b) { return a.start < b.start; });
      for (std::size_t k = 1; k < img.person_spans.size(); ++k) {
        if (img.person_spans[k].start < img.person_spans[k - 1].end) {
          throw Error(Errc::MalformedRecord, "overlapping person spans");
        }
      }
    }
    rec.images.push_back(std::move(img));
  }
  return rec;
}

std::string serialize_record(const RawRecord& record) {
  json j;
  j["tweet_id"] = record.tweet_id;
  j["created_at"] = record.created_at;
  j["text"] = record.tweet_text;
  json images = json::array();
  for (const auto& img : record.images) {
    json im;
    im["image_id"] = img.image_id;
    im["path"] = img.path;
    im["alt_text"] = img.alt_text;
    json spans = json::array();
    for (const auto& s : img.person_spans) spans.push_back({s.start, s.end});
    im["person_spans"] = std::move(spans);
    images.push_back(std::move(im));
  }
  j["images"] = std::move(images);
  return j.dump();
}

ParseResult parse_records(std::istream& in) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      result.records.push_back(parse_record_line(line));
    } catch (const Error& e) {
      result.errors.push_back({line_no, e.what()});
    }
  }
  if (in.bad()) throw Error(Errc::Io, "failed reading record stream");
  return result;
}

std::string_view reject_reason_name(RejectReason r) noexcept {
  switch (r) {
    case RejectReason::IdenticalToTweet: return "IdenticalToTweet";
    case RejectReason::Placeholder: return "Placeholder";
    case RejectReason::ContainsUrl: return "ContainsUrl";
    case RejectReason::ContainsHandle: return "ContainsHandle";
    case RejectReason::ContainsHashtag: return "ContainsHashtag";
    case RejectReason::TooShort: return "TooShort";
  }
  return "Unknown";
}

std::string redact_person_names(std::string_view text, const std::vector<ByteSpan>& spans) {
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].start >= spans[i].end || spans[i].end > text.size()) {
      throw Error(Errc::SpanOutOfBounds, "span [" + std::to_string(spans[i].start) + "," +
                                             std::to_string(spans[i].end) + ") outside text");
    }
    if (i > 0 && spans[i].start < spans[i - 1].end) {
      throw Error(Errc::OverlappingSpans, "spans must be sorted and disjoint");
    }
  }
  std::string out(text);
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    out.replace(it->start, it->end - it->start, "person");
  }
  return out;
}

std::string crop_tokens(std::string_view text, int max_tokens) {
  auto toks = text::split_view(text);
  if (max_tokens >= 1 && toks.size() > static_cast<std::size_t>(max_tokens)) {
    toks.resize(static_cast<std::size_t>(max_tokens));
  }
  return text::join(std::span<const std::string_view>(toks));
}

std::string strip_leading_phrases(std::string_view alt, const FilterConfig& config) {
  std::vector<std::string_view> phrases(config.strip_phrases.begin(), config.strip_phrases.end());
  std::stable_sort(phrases.begin(), phrases.end(),
                   [](auto a, auto b) { return a.size() > b.size(); });
  std::string_view rest = text::trim_left(alt);
  bool stripped = true;
  while (stripped) {
    stripped = false;
    for (auto p : phrases) {
      if (p.empty()) continue;
      if (text::istarts_with(rest, p) &&
          (rest.size() == p.size() || text::is_space(rest[p.size()]))) {
        rest = text::trim_left(rest.substr(p.size()));
        stripped = true;
        break;
      }
    }
  }
  return std::string(rest);
}

FilterOutcome filter_sample(const RawRecord& raw, std::size_t image_index,
                            const FilterConfig& config) {
  if (image_index >= raw.images.size()) {
    throw Error(Errc::InvalidArgument, "image index out of range");
  }
  const RawImage& img = raw.images[image_index];

  const std::string redacted = redact_person_names(img.alt_text, img.person_spans);
  const std::string alt = crop_tokens(strip_leading_phrases(redacted, config), config.max_tokens);
  const std::string tweet = crop_tokens(raw.tweet_text, config.max_tokens);

  const std::string alt_lower = text::to_lower(alt);
  if (alt_lower == text::to_lower(tweet)) return Reject{RejectReason::IdenticalToTweet};
  if (std::find(config.placeholders.begin(), config.placeholders.end(), alt_lower) !=
      config.placeholders.end()) {
    return Reject{RejectReason::Placeholder};
  }
  const auto toks = text::split_view(alt);
  auto any_token = [&](auto pred) { return std::any_of(toks.begin(), toks.end(), pred); };
  if (any_token([](std::string_view t) {
        return text::istarts_with(t, "http://") || text::istarts_with(t, "https://");
      })) {
    return Reject{RejectReason::ContainsUrl};
  }
  if (any_token([](std::string_view t) { return t.front() == '@'; })) {
    return Reject{RejectReason::ContainsHandle};
  }
  if (any_token([](std::string_view t) { return t.front() == '#'; })) {
    return Reject{RejectReason::ContainsHashtag};
  }
  if (toks.size() < static_cast<std::size_t>(config.min_tokens)) {
    return Reject{RejectReason::TooShort};
  }

  Sample s;
  s.tweet_id = raw.tweet_id;
  s.image_id = img.image_id;
  s.path = img.path;
  s.created_at = raw.created_at;
  s.tweet_text = tweet;
  s.alt_text = alt;
  return s;
}

CorpusSplit split_corpus(const std::vector<Sample>& samples,
                         const std::array<double, 3>& ratios, std::uint64_t seed) {
  if (samples.empty()) throw Error(Errc::EmptyCorpus, "no samples to split");
  for (double r : ratios) {
    if (!(r > 0.0)) throw Error(Errc::InvalidArgument, "split ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw Error(Errc::InvalidArgument, "split ratios must sum to 1");
  }

  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.tweet_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const auto n = static_cast<long long>(ids.size());
  long long n_train = std::llround(ratios[0] * static_cast<double>(n));
  long long n_val = std::llround(ratios[1] * static_cast<double>(n));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);

  std::unordered_map<std::string, int> bucket;
  for (long long i = 0; i < n; ++i) {
    bucket[ids[static_cast<std::size_t>(i)]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  }
  CorpusSplit out;
  for (const auto& s : samples) {
    switch (bucket.at(s.tweet_id)) {
      case 0: out.train.push_back(s); break;
      case 1: out.val.push_back(s); break;
      default: out.test.push_back(s); break;
    }
  }
  return out;
}

std::vector<Sample> samples_from_records(const std::vector<RawRecord>& records) {
  std::vector<Sample> out;
  for (const auto& r : records) {
    for (const auto& img : r.images) {
      out.push_back(Sample{r.tweet_id, img.image_id, img.path, r.created_at, r.tweet_text,
                           img.alt_text});
    }
  }
  return out;
}

std::vector<RawRecord> records_from_samples(const std::vector<Sample>& samples) {
  std::vector<RawRecord> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& s : samples) {
    auto [it, inserted] = index.try_emplace(s.tweet_id, out.size());
    if (inserted) out.push_back(RawRecord{s.tweet_id, s.created_at, s.tweet_text, {}});
    out[it->second].images.push_back(RawImage{s.image_id, s.path, s.alt_text, {}});
  }
  return out;
}

std::vector<Sample> load_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open corpus " + path);
  auto parsed = parse_records(in);
  if (!parsed.errors.empty()) {
    const auto& e = parsed.errors.front();
    throw Error(Errc::MalformedRecord,
                path + ":" + std::to_string(e.line_no) + ": " + e.reason);
  }
  return samples_from_records(parsed.records);
}

void save_samples(const std::vector<Sample>& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write corpus " + path);
  for (const auto& rec : records_from_samples(samples)) out << serialize_record(rec) << '\n';
}

IngestResult ingest(std::istream& in, const FilterConfig& config) {
  auto parsed = parse_records(in);
  IngestResult result;
  result.malformed = std::move(parsed.errors);
  for (const auto& rec : parsed.records) {
    for (std::size_t i = 0; i < rec.images.size(); ++i) {
      auto outcome = filter_sample(rec, i, config);
      if (auto* s = std::get_if<Sample>(&outcome)) {
        result.accepted.push_back(std::move(*s));
      } else {
        result.rejected.push_back(
            {rec.tweet_id, rec.images[i].image_id, std::get<Reject>(outcome).reason});
      }
    }
  }
  return result;
}

void write_reject_log(const IngestResult& result, std::ostream& out) {
  out << "tweet_id\timage_id\treason\n";
  for (const auto& r : result.rejected) {
    out << r.tweet_id << '\t' << r.image_id << '\t' << reject_reason_name(r.reason) << '\n';
  }
}

}  // namespace alttext::corpus
