#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace alttext {

enum class Errc {
  // data errors
  Io,
  MalformedRecord,
  SpanOutOfBounds,
  OverlappingSpans,
  EmptyCorpus,
  UndecodableImage,
  MissingThumbnail,
  UnknownId,
  BadMagic,
  DuplicateId,
  DimensionMismatch,
  EmptyIndex,
  SequenceTooLong,
  EmptyDataset,
  EmptyCandidates,
  CorpusTooSmall,
  MissingReference,
  MissingEmbedding,
  InvalidArgument,
  // numeric failures
  NonFiniteActivation,
  EmptyMask,
  DivergedLoss,
};

enum class ErrorCategory { Usage, Data, Numeric };

std::string_view errc_name(Errc code) noexcept;
ErrorCategory errc_category(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code) {}

  Errc code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return errc_category(code_); }

 private:
  Errc code_;
};

}  // namespace alttext
