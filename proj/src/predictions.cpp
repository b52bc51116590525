#include "alttext/predictions.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "alttext/error.hpp"
#include "alttext/text.hpp"

namespace alttext {

namespace {
constexpr const char* kHeader = "tweet_id\timage_id\tcaption\tscore\tbeam_rank";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}
}  // namespace

void write_predictions(const std::vector<Prediction>& predictions, std::ostream& out) {
  out << kHeader << '\n';
  char buf[64];
  for (const auto& p : predictions) {
    std::snprintf(buf, sizeof buf, "%.17g", p.score);
    out << p.tweet_id << '\t' << p.image_id << '\t' << text::normalize_whitespace(p.caption) << '\t' << buf
        << '\t' << p.beam_rank << '\n';
  }
}

void save_predictions(const std::vector<Prediction>& predictions, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  write_predictions(predictions, out);
  if (!out) throw Error(Errc::Io, "write failed: " + path);
}

std::vector<Prediction> read_predictions(std::istream& in) {
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line == kHeader) continue;
    if (line.empty()) continue;
    const auto cells = split_tabs(line);
    if (cells.size() != 5) {
      throw Error(Errc::MalformedRecord, "predictions line " + std::to_string(lineno) + ": expected 5 columns");
    }
    Prediction p{cells[0], cells[1], cells[2], 0.0, 0};
    try {
      std::size_t used = 0;
      p.score = std::stod(cells[3], &used);
      if (used != cells[3].size()) throw std::invalid_argument("score");
      p.beam_rank = std::stoi(cells[4], &used);
      if (used != cells[4].size()) throw std::invalid_argument("beam_rank");
    } catch (const std::logic_error&) {
      throw Error(Errc::MalformedRecord, "predictions line " + std::to_string(lineno) + ": bad number");
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Prediction> load_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path);
  return read_predictions(in);
}

}  // namespace alttext
