#pragma once

// Flat TOML-style configuration: `key = value` lines, `#` comments and
// optional `[section]` headers (ignored; keys must be unique overall).
// Values are bare numbers, true/false, or double-quoted strings.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "alttext/captioner.hpp"
#include "alttext/train.hpp"

namespace alttext::config {

using KeyValues = std::map<std::string, std::string>;

KeyValues parse(std::istream& in);  // throws Error(InvalidArgument) with the line number
KeyValues load(const std::filesystem::path& path);

/// Copies recognized keys into the structs. Keys not recognized by either
/// are reported as Error(InvalidArgument).
void apply(const KeyValues& kv, captioner::ModelConfig& model, captioner::TrainHyper& hyper,
           int* vocab_limit = nullptr);

}  // namespace alttext::config
