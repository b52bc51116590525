// alttext: command-line front end for corpus curation, training, decoding
// and evaluation.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "alttext/captioner.hpp"
#include "alttext/config_file.hpp"
#include "alttext/corpus.hpp"
#include "alttext/dedup.hpp"
#include "alttext/error.hpp"
#include "alttext/harness.hpp"
#include "alttext/metrics.hpp"
#include "alttext/predictions.hpp"
#include "alttext/text.hpp"
#include "alttext/train.hpp"
#include "alttext/vision.hpp"

namespace fs = std::filesystem;
using namespace alttext;

namespace {

fs::path parent_or_dot(const std::string& file) {
  const fs::path p = fs::path(file).parent_path();
  return p.empty() ? fs::path(".") : p;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string default_vocab(const std::string& checkpoint) { return checkpoint + ".vocab"; }

std::array<double, 3> parse_ratios(const std::string& s) {
  std::array<double, 3> r{};
  std::stringstream ss(s);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i >= 3) break;
    try {
      r[i++] = std::stod(part);
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "bad ratio '" + part + "'");
    }
  }
  if (i != 3 || ss.rdbuf()->in_avail() > 0) throw Error(Errc::InvalidArgument, "--ratios needs three comma-separated values");
  return r;
}

vision::EmbeddingMap import_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read " + path);
  vision::EmbeddingMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    vision::ImageEmbedding e;
    try {
      const auto j = nlohmann::json::parse(line);
      e.image_id = j.at("image_id").get<std::string>();
      e.vec = j.at("embedding").get<std::vector<float>>();
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::MalformedRecord, "embedding line " + std::to_string(lineno) + ": " + ex.what());
    }
    if (e.vec.size() != static_cast<std::size_t>(vision::kEmbeddingDim)) {
      throw Error(Errc::DimensionMismatch, "embedding line " + std::to_string(lineno) + " is not 512-d");
    }
    vision::normalize(e.vec);
    const std::string id = e.image_id;
    if (!out.emplace(id, std::move(e)).second) throw Error(Errc::DuplicateId, "duplicate embedding for " + id);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-conditioned alt-text toolkit"};
  app.require_subcommand(1);

  // ingest
  std::string ingest_in, ingest_out, ingest_rejects;
  auto* ingest = app.add_subcommand("ingest", "Filter raw tweet records into a corpus");
  ingest->add_option("--in", ingest_in, "raw JSONL")->required();
  ingest->add_option("--out", ingest_out, "accepted corpus JSONL")->required();
  ingest->add_option("--rejects", ingest_rejects, "reject log TSV")->required();

  // dedup
  std::string dd_corpus, dd_images, dd_out, dd_thumbs;
  int dd_threshold = 100, dd_tolerance = 0;
  auto* dedup_cmd = app.add_subcommand("dedup", "Remove exact alt-text and near-duplicate images");
  dedup_cmd->add_option("--corpus", dd_corpus)->required();
  dedup_cmd->add_option("--images", dd_images, "image root (default: corpus directory)");
  dedup_cmd->add_option("--threshold", dd_threshold, "join when pixel diff < threshold");
  dedup_cmd->add_option("--tolerance", dd_tolerance, "per-pixel tolerance");
  dedup_cmd->add_option("--thumbs", dd_thumbs, "also write thumbnails (ATTH)");
  dedup_cmd->add_option("--out", dd_out)->required();

  // split
  std::string sp_corpus, sp_out, sp_ratios = "0.89,0.055,0.055";
  std::uint64_t sp_seed = 0;
  auto* split_cmd = app.add_subcommand("split", "Split a corpus by tweet into train/val/test");
  split_cmd->add_option("--corpus", sp_corpus)->required();
  split_cmd->add_option("--ratios", sp_ratios);
  split_cmd->add_option("--seed", sp_seed);
  split_cmd->add_option("--out-dir", sp_out)->required();

  // synth
  harness::SynthSpec sy;
  std::string sy_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic glyph/keyword corpus");
  synth->add_option("--n", sy.n_samples);
  synth->add_option("--classes", sy.n_classes);
  synth->add_option("--attrs", sy.n_attrs);
  synth->add_option("--seed", sy.seed);
  synth->add_option("--image-size", sy.image_size);
  synth->add_option("--noise", sy.noise);
  synth->add_option("--out", sy_out, "output directory")->required();

  // embed
  std::string em_corpus, em_images, em_import, em_out;
  bool em_toy = false;
  std::uint64_t em_seed = 0;
  auto* embed = app.add_subcommand("embed", "Compute or import 512-d image embeddings");
  auto* toy_flag = embed->add_flag("--toy", em_toy, "seeded random-projection encoder");
  auto* import_opt = embed->add_option("--import", em_import, "JSONL of {image_id, embedding}");
  toy_flag->excludes(import_opt);
  embed->add_option("--corpus", em_corpus, "corpus whose images to encode (--toy)");
  embed->add_option("--images", em_images, "image root (default: corpus directory)");
  embed->add_option("--seed", em_seed);
  embed->add_option("--out", em_out)->required();

  // train
  std::string tr_variant = "text_image", tr_config, tr_train, tr_val, tr_emb, tr_out, tr_log, tr_vocab;
  std::uint64_t tr_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train the prefix captioner");
  train_cmd->add_option("--variant", tr_variant)->check(CLI::IsMember({"text_image", "image_only", "text_only", "rand_text"}));
  train_cmd->add_option("--config", tr_config, "TOML-style key = value file");
  train_cmd->add_option("--train", tr_train)->required();
  train_cmd->add_option("--val", tr_val)->required();
  train_cmd->add_option("--embeddings", tr_emb);
  train_cmd->add_option("--seed", tr_seed, "overrides the config seed");
  train_cmd->add_option("--out", tr_out, "checkpoint path")->required();
  train_cmd->add_option("--vocab", tr_vocab, "vocabulary path (default: <out>.vocab)");
  train_cmd->add_option("--log", tr_log, "training log CSV");

  // generate
  std::string ge_ckpt, ge_vocab, ge_corpus, ge_emb, ge_out, ge_method = "beam", ge_rerank = "none";
  decoding::DecodeConfig ge_dc;
  std::uint64_t ge_seed = 0;
  auto* gen = app.add_subcommand("generate", "Decode captions for a corpus");
  gen->add_option("--checkpoint", ge_ckpt)->required();
  gen->add_option("--vocab", ge_vocab);
  gen->add_option("--corpus", ge_corpus)->required();
  gen->add_option("--embeddings", ge_emb);
  gen->add_option("--method", ge_method)->check(CLI::IsMember({"greedy", "beam"}));
  gen->add_option("--beam", ge_dc.beam_size);
  gen->add_flag("--block-trigrams", ge_dc.block_trigrams);
  gen->add_option("--rerank", ge_rerank)->check(CLI::IsMember({"none", "rougel", "bleu"}));
  gen->add_option("--max-len", ge_dc.max_len);
  gen->add_option("--seed", ge_seed, "seed for rand_text tweet shuffling");
  gen->add_option("--out", ge_out)->required();

  // evaluate
  std::string ev_pred, ev_ref, ev_out, ev_system = "system", ev_decoding = "-";
  auto* eval = app.add_subcommand("evaluate", "Score predictions against reference alt-text");
  eval->add_option("--pred", ev_pred)->required();
  eval->add_option("--ref", ev_ref)->required();
  eval->add_option("--out", ev_out, "report TSV");
  eval->add_option("--system", ev_system);
  eval->add_option("--decoding", ev_decoding);

  // baseline
  std::string bl_kind, bl_test, bl_train, bl_emb, bl_out;
  auto* base = app.add_subcommand("baseline", "Nearest-neighbour or copy-tweet predictions");
  base->add_option("--kind", bl_kind)->required()->check(CLI::IsMember({"nn", "copy"}));
  base->add_option("--test", bl_test)->required();
  base->add_option("--train", bl_train);
  base->add_option("--embeddings", bl_emb);
  base->add_option("--out", bl_out)->required();

  // experiment
  harness::RunConfig rc;
  std::string rc_method = "beam", rc_rerank = "none";
  auto* exp = app.add_subcommand("experiment", "Generate, evaluate and write a hashed report");
  exp->add_option("--corpus", rc.corpus)->required();
  exp->add_option("--embeddings", rc.embeddings);
  exp->add_option("--checkpoint", rc.checkpoint)->required();
  exp->add_option("--vocab", rc.vocab);
  exp->add_option("--pred", rc.predictions)->required();
  exp->add_option("--report", rc.report)->required();
  exp->add_option("--system", rc.system);
  exp->add_option("--method", rc_method)->check(CLI::IsMember({"greedy", "beam"}));
  exp->add_option("--beam", rc.decode.beam_size);
  exp->add_flag("--block-trigrams", rc.decode.block_trigrams);
  exp->add_option("--rerank", rc_rerank)->check(CLI::IsMember({"none", "rougel", "bleu"}));
  exp->add_option("--max-len", rc.decode.max_len);
  exp->add_option("--seed", rc.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_code = app.exit(e);
    return rc_code == 0 ? 0 : 1;
  }

  try {
    if (*ingest) {
      std::ifstream in(ingest_in);
      if (!in) throw Error(Errc::Io, "cannot read " + ingest_in);
      const auto result = corpus::ingest(in);
      for (const auto& m : result.malformed) {
        std::cerr << ingest_in << ":" << m.line_no << ": malformed record: " << m.reason << "\n";
      }
      corpus::save_samples(result.accepted, ingest_out);
      std::ofstream rej(ingest_rejects);
      if (!rej) throw Error(Errc::Io, "cannot write " + ingest_rejects);
      corpus::write_reject_log(result, rej);
      std::cout << "accepted " << result.accepted.size() << ", rejected " << result.rejected.size()
                << ", malformed " << result.malformed.size() << "\n";
    } else if (*dedup_cmd) {
      const auto samples = corpus::load_samples(dd_corpus);
      const fs::path root = dd_images.empty() ? parent_or_dot(dd_corpus) : fs::path(dd_images);
      std::unordered_map<std::string, dedup::Thumbnail> thumbs;
      std::vector<dedup::Thumbnail> thumb_list;
      for (const auto& s : samples) {
        if (thumbs.count(s.image_id)) continue;
        auto t = dedup::thumbnail(load_pnm(harness::resolve_image(s, root)), s.image_id, s.created_at);
        thumb_list.push_back(t);
        thumbs.emplace(s.image_id, std::move(t));
      }
      if (!dd_thumbs.empty()) dedup::save_thumbnails(thumb_list, dd_thumbs);
      dedup::ClusterOptions opt;
      opt.threshold = dd_threshold;
      opt.tolerance = dd_tolerance;
      const auto kept = dedup::dedup_visual(samples, thumbs, opt);
      corpus::save_samples(kept, dd_out);
      std::cout << "kept " << kept.size() << " of " << samples.size() << "\n";
    } else if (*split_cmd) {
      const auto samples = corpus::load_samples(sp_corpus);
      const auto parts = corpus::split_corpus(samples, parse_ratios(sp_ratios), sp_seed);
      const fs::path dir(sp_out);
      fs::create_directories(dir);
      corpus::save_samples(parts.train, (dir / "train.jsonl").string());
      corpus::save_samples(parts.val, (dir / "val.jsonl").string());
      corpus::save_samples(parts.test, (dir / "test.jsonl").string());
      std::cout << "train " << parts.train.size() << ", val " << parts.val.size() << ", test "
                << parts.test.size() << "\n";
    } else if (*synth) {
      const auto data = harness::synth_dataset(sy);
      harness::write_synth(data, sy_out);
      std::cout << "wrote " << data.samples.size() << " samples to " << sy_out << "\n";
    } else if (*embed) {
      vision::EmbeddingMap emb;
      if (em_toy) {
        if (em_corpus.empty()) throw Error(Errc::InvalidArgument, "--toy needs --corpus");
        const auto samples = corpus::load_samples(em_corpus);
        const fs::path root = em_images.empty() ? parent_or_dot(em_corpus) : fs::path(em_images);
        emb = harness::embed_toy(samples, root, em_seed);
      } else if (!em_import.empty()) {
        emb = import_embeddings(em_import);
      } else {
        throw Error(Errc::InvalidArgument, "embed needs --toy or --import");
      }
      vision::save_embeddings(emb, em_out);
      std::cout << "wrote " << emb.size() << " embeddings\n";
    } else if (*train_cmd) {
      captioner::ModelConfig mc;
      captioner::TrainHyper hy;
      int vocab_limit = 10000;
      if (!tr_config.empty()) config::apply(config::load(tr_config), mc, hy, &vocab_limit);
      mc.variant = captioner::parse_variant(tr_variant);
      if (train_cmd->count("--seed")) mc.seed = hy.seed = tr_seed;
      const auto train_s = corpus::load_samples(tr_train);
      const auto val_s = corpus::load_samples(tr_val);
      vision::EmbeddingMap emb;
      if (captioner::uses_image(mc.variant)) {
        if (tr_emb.empty()) throw Error(Errc::InvalidArgument, "this variant needs --embeddings");
        emb = vision::load_embeddings(tr_emb);
      }
      const Vocab vocab = harness::build_vocab(train_s, vocab_limit);
      mc.vocab_size = vocab.size();
      const auto train_x = harness::build_examples(train_s, emb, vocab, mc.variant, mc.seed);
      const auto val_x = harness::build_examples(val_s, emb, vocab, mc.variant, mc.seed + 1);
      const auto result = captioner::train(mc, train_x, val_x, hy);
      captioner::save_checkpoint(result.best, tr_out);
      vocab.save(tr_vocab.empty() ? default_vocab(tr_out) : tr_vocab);
      if (!tr_log.empty()) {
        std::ofstream log(tr_log);
        if (!log) throw Error(Errc::Io, "cannot write " + tr_log);
        captioner::write_training_log(result.log, log);
      }
      std::printf("best epoch %d, val nll %.6f\n", result.best_epoch, result.best_val_nll);
    } else if (*gen) {
      ge_dc.method = decoding::parse_method(ge_method);
      ge_dc.rerank = decoding::parse_rerank(ge_rerank);
      const auto state = captioner::load_checkpoint(ge_ckpt);
      const auto vocab = Vocab::load(ge_vocab.empty() ? default_vocab(ge_ckpt) : ge_vocab);
      const auto samples = corpus::load_samples(ge_corpus);
      vision::EmbeddingMap emb;
      if (captioner::uses_image(state.config.variant)) {
        if (ge_emb.empty()) throw Error(Errc::InvalidArgument, "this checkpoint needs --embeddings");
        emb = vision::load_embeddings(ge_emb);
      }
      const auto preds = harness::generate(state, vocab, samples, emb, ge_dc, ge_seed);
      save_predictions(preds, ge_out);
      std::cout << "wrote " << preds.size() << " predictions\n";
    } else if (*eval) {
      const auto preds = load_predictions(ev_pred);
      const auto refs = corpus::load_samples(ev_ref);
      const auto report = metrics::evaluate(preds, refs);
      const std::vector<metrics::ReportRow> rows{{ev_system, ev_decoding, report}};
      if (!ev_out.empty()) {
        std::ofstream out(ev_out, std::ios::binary);
        if (!out) throw Error(Errc::Io, "cannot write " + ev_out);
        metrics::write_report_tsv(rows, harness::report_notes(text::fnv1a64(read_file(ev_pred) + read_file(ev_ref))), out);
      }
      std::cout << metrics::format_report_table(rows);
    } else if (*base) {
      const auto test = corpus::load_samples(bl_test);
      std::vector<Prediction> preds;
      if (bl_kind == "copy") {
        preds = harness::baseline_copy_tweet(test);
      } else {
        if (bl_train.empty() || bl_emb.empty()) throw Error(Errc::InvalidArgument, "nn needs --train and --embeddings");
        preds = harness::baseline_nearest_neighbor(test, corpus::load_samples(bl_train), vision::load_embeddings(bl_emb));
      }
      save_predictions(preds, bl_out);
      std::cout << "wrote " << preds.size() << " predictions\n";
    } else if (*exp) {
      rc.decode.method = decoding::parse_method(rc_method);
      rc.decode.rerank = decoding::parse_rerank(rc_rerank);
      if (rc.vocab.empty()) rc.vocab = default_vocab(rc.checkpoint.string());
      const auto report = harness::run_experiment(rc);
      std::cout << metrics::format_report_table({{rc.system, decoding::method_label(rc.decode), report}});
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.category()) {
      case ErrorCategory::Usage: return 1;
      case ErrorCategory::Data: return 2;
      case ErrorCategory::Numeric: return 3;
    }
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
