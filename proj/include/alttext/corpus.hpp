#pragma once

// Tweet/image/alt-text records: parsing, filtering, name redaction, token
// cropping and tweet-grouped splitting.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace alttext::corpus {

inline constexpr int kMaxTokens = 150;

struct ByteSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const ByteSpan&) const = default;
};

struct RawImage {
  std::string image_id;
  std::string path;
  std::string alt_text;
  std::vector<ByteSpan> person_spans;
};

struct RawRecord {
  std::string tweet_id;
  std::int64_t created_at = 0;
  std::string tweet_text;
  std::vector<RawImage> images;
};

struct Sample {
  std::string tweet_id;
  std::string image_id;
  std::string path;
  std::int64_t created_at = 0;
  std::string tweet_text;
  std::string alt_text;
  bool operator==(const Sample&) const = default;
};

struct CorpusSplit {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

struct MalformedRecord {
  std::size_t line_no = 0;  // 1-based
  std::string reason;
};

struct ParseResult {
  std::vector<RawRecord> records;
  std::vector<MalformedRecord> errors;
};

/// One JSON object per line. Blank lines are skipped; malformed lines are
/// collected with their line number. A failing stream throws Error(Io).
ParseResult parse_records(std::istream& in);
RawRecord parse_record_line(std::string_view line);  // throws Error(MalformedRecord)
std::string serialize_record(const RawRecord& record);

enum class RejectReason {
  IdenticalToTweet,
  Placeholder,
  ContainsUrl,
  ContainsHandle,
  ContainsHashtag,
  TooShort,
};
std::string_view reject_reason_name(RejectReason r) noexcept;

struct FilterConfig {
  /// Matched case-insensitively at the start of the alt-text, longest first,
  /// and only when followed by whitespace or the end of the text.
  std::vector<std::string> strip_phrases = {"an image of", "a photo of", "image of",
                                            "photo of", "picture of"};
  /// Compared against the lowercased, whitespace-normalized alt-text.
  std::vector<std::string> placeholders = {"", "image", "photo", "picture", "pic",
                                           "img", "alt", "alt text", "screenshot"};
  int min_tokens = 4;
  int max_tokens = kMaxTokens;
};

struct Reject {
  RejectReason reason;
};
using FilterOutcome = std::variant<Sample, Reject>;

/// Redacts person spans, strips leading phrases, crops both texts and then
/// applies the rejection rules in RejectReason order; the first failure wins.
FilterOutcome filter_sample(const RawRecord& raw, std::size_t image_index,
                            const FilterConfig& config = {});

std::string strip_leading_phrases(std::string_view alt, const FilterConfig& config);

/// Replaces each byte span with "person". Spans must be sorted, in bounds and
/// non-overlapping (Error SpanOutOfBounds / OverlappingSpans otherwise).
std::string redact_person_names(std::string_view text, const std::vector<ByteSpan>& spans);

/// First `max_tokens` whitespace tokens joined by single spaces.
std::string crop_tokens(std::string_view text, int max_tokens = kMaxTokens);

/// Groups by tweet_id: distinct ids are sorted, shuffled with `seed`, and cut
/// at round(ratio * n_ids). Sample order within each split follows the input.
CorpusSplit split_corpus(const std::vector<Sample>& samples,
                         const std::array<double, 3>& ratios, std::uint64_t seed);

/// Every image of every record as an unfiltered Sample (used to reload a
/// curated corpus file).
std::vector<Sample> samples_from_records(const std::vector<RawRecord>& records);
/// Regroups samples into records, one per tweet, in first-appearance order.
std::vector<RawRecord> records_from_samples(const std::vector<Sample>& samples);

std::vector<Sample> load_samples(const std::string& path);
void save_samples(const std::vector<Sample>& samples, const std::string& path);

struct IngestResult {
  std::vector<Sample> accepted;
  struct Rejected {
    std::string tweet_id;
    std::string image_id;
    RejectReason reason;
  };
  std::vector<Rejected> rejected;
  std::vector<MalformedRecord> malformed;
};

IngestResult ingest(std::istream& in, const FilterConfig& config = {});
void write_reject_log(const IngestResult& result, std::ostream& out);

}  // namespace alttext::corpus
