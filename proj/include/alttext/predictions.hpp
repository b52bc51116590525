#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace alttext {

/// One row of a predictions TSV: tweet_id, image_id, caption, score, beam_rank.
struct Prediction {
  std::string tweet_id;
  std::string image_id;
  std::string caption;
  double score = 0.0;
  int beam_rank = 0;
  bool operator==(const Prediction&) const = default;
};

void write_predictions(const std::vector<Prediction>& predictions, std::ostream& out);
void save_predictions(const std::vector<Prediction>& predictions, const std::string& path);
std::vector<Prediction> read_predictions(std::istream& in);
std::vector<Prediction> load_predictions(const std::string& path);

}  // namespace alttext
