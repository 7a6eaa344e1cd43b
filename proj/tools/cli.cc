// Copyright 2026 The cmfront Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cmfront/pipeline.h"

namespace cmfront::cli {

namespace fs = std::filesystem;

namespace {

const char kIndexHeader[] = "utt_id\tfeature_path\tlabel\tsubset";
const char kIndexName[] = "features.tsv";

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;  // section.key=value
  std::optional<uint64_t> seed;
  int jobs = 1;
  std::string out;
};

Config load_config(const Globals &g) {
  Config cfg = g.config_path.empty() ? Config{} : Config::load(g.config_path);
  for (const auto &kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  cfg.check_known(known_config_keys());
  return cfg;
}

const std::string &require_out(const Globals &g) {
  if (g.out.empty()) throw UsageError("--out is required for this command");
  fs::create_directories(g.out);
  return g.out;
}

std::string pct(double eer) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f%%", 100.0 * eer);
  return buf;
}

LengthConfig length_from_config(const Config &cfg) {
  LengthConfig l;
  l.min_seconds = cfg.get_double("features.min_seconds", l.min_seconds);
  l.max_seconds = cfg.get_double("features.max_seconds", l.max_seconds);
  l.eval_seconds = cfg.get_double("features.eval_seconds", l.eval_seconds);
  return l;
}

// Front-end options shared by featurize and score.
struct FrontendFlags {
  std::string token = "baseline";
  std::string bwe_kind;
  std::string extender_path;
  bool vad = false;
  bool no_augment = false;
  std::string codec = "clean";

  void add_to(CLI::App *cmd) {
    cmd->add_option("--frontend", token, "baseline, band_trim@F, lowpass@F or lowpass_bwe@F")
        ->capture_default_str();
    cmd->add_option("--bwe-kind", bwe_kind, "replicate or linear_regressor");
    cmd->add_option("--extender", extender_path, "trained extender for lowpass_bwe");
    cmd->add_flag("--vad", vad, "trim silence before the front-end");
    cmd->add_flag("--no-augment", no_augment, "disable train-subset augmentation");
    cmd->add_option("--codec", codec, "eval-subset channel: clean, g711_mulaw, bandlimit")
        ->capture_default_str();
  }

  FrontendConfig frontend(const Config &cfg) const {
    FrontendConfig f = FrontendConfig::parse(token);
    f.bwe_kind = parse_bwe_kind(
        bwe_kind.empty() ? cfg.get("plan.bwe_kind", "linear_regressor") : bwe_kind);
    f.filter_order = cfg.get_int("filter.order", kFrontendFilterOrder);
    f.ripple_db = cfg.get_double("filter.ripple_db", kFrontendRippleDb);
    f.vad = vad;
    f.augment = !no_augment && cfg.get_bool("augment.enabled", true);
    f.augment_config = augment_from_config(cfg);
    f.validate();
    return f;
  }

  CodecProfile codec_profile(const Config &cfg) const {
    CodecProfile p = CodecProfile::parse(codec);
    p.cutoff_hz = cfg.get_double("plan.bandlimit_cutoff_hz", p.cutoff_hz);
    p.noise_floor_db = cfg.get_double("plan.bandlimit_noise_floor_db", p.noise_floor_db);
    return p;
  }

  // Loads the extender when the front-end needs one.
  std::optional<BweExtender> extender(const FrontendConfig &f) const {
    if (!extender_path.empty()) {
      if (f.kind != FrontendKind::kLowpassBwe)
        throw UsageError("--extender only applies to lowpass_bwe");
      return load_extender(extender_path);
    }
    if (f.kind == FrontendKind::kLowpassBwe && f.bwe_kind == BweKind::kLinearRegressor)
      throw UsageError("lowpass_bwe with linear_regressor needs --extender (see bwe-train)");
    return std::nullopt;
  }
};

std::string manifest_path(const std::string &flag, const Config &cfg) {
  std::string m = flag.empty() ? cfg.get("corpus.manifest", "") : flag;
  if (m.empty()) throw UsageError("no manifest given (--manifest or corpus.manifest)");
  return m;
}

std::vector<Subset> parse_subsets(const std::string &list) {
  std::vector<Subset> out;
  for (const auto &s : split_list(list)) out.push_back(parse_subset(s));
  if (out.empty()) throw UsageError("--subsets is empty");
  return out;
}

// ---- feature index --------------------------------------------------------

struct IndexEntry {
  std::string utt_id;
  std::string path;  // relative to the index directory
  Label label;
  Subset subset;
};

std::vector<IndexEntry> read_index(const std::string &dir) {
  const std::string path = (fs::path(dir) / kIndexName).string();
  std::ifstream in(path);
  if (!in) throw DataError("missing feature index " + path);
  std::vector<IndexEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != kIndexHeader) throw DataError(path + ": unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, '\t');) f.push_back(tok);
    if (f.size() != 4) throw DataError(path + ":" + std::to_string(lineno) + ": expected 4 fields");
    try {
      out.push_back({f[0], f[1], parse_label(f[2]), parse_subset(f[3])});
    } catch (const UsageError &e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// Reads every feature file of one subset and checks that all share one
// feature dimension.
FeatureSet load_features(const std::string &dir, const std::vector<IndexEntry> &index, Subset s,
                         std::string *first_file = nullptr) {
  FeatureSet set;
  std::string ref_file;
  std::size_t ref_dim = 0;
  for (const auto &e : index) {
    if (e.subset != s) continue;
    const std::string file = (fs::path(dir) / e.path).string();
    const FbankMatrix fb = read_fbank(file);
    if (ref_file.empty()) {
      ref_file = file;
      ref_dim = fb.rows;
    } else if (fb.rows != ref_dim) {
      throw DataError("feature dimension mismatch: " + ref_file + " has " + std::to_string(ref_dim) +
                      " bands but " + file + " has " + std::to_string(fb.rows));
    }
    set.ids.push_back(e.utt_id);
    set.items.push_back({to_frames(fb), e.label});
  }
  if (first_file) *first_file = ref_file;
  return set;
}

// ---- commands -------------------------------------------------------------

int cmd_synth(const Globals &g, std::ostream &out) {
  const Config cfg = load_config(g);
  CorpusSpec spec = corpus_from_config(cfg);
  if (g.seed) spec.seed = *g.seed;
  const auto dir = require_out(g);
  const auto utts = generate_corpus(spec);
  const std::string manifest = write_corpus(utts, dir);
  std::map<std::pair<Subset, Label>, int> counts;
  for (const auto &u : utts) ++counts[{u.subset, u.label}];
  out << "wrote " << utts.size() << " utterances, manifest " << manifest << "\n";
  for (Subset s : {Subset::kTrain, Subset::kDev, Subset::kEval})
    out << "  " << subset_name(s) << ": " << counts[{s, Label::kBonafide}] << " bonafide, "
        << counts[{s, Label::kSpoof}] << " spoof\n";
  return 0;
}

int cmd_featurize(const Globals &g, const std::string &manifest_flag, const FrontendFlags &ff,
                  const std::string &subsets, const std::string &dump_sos, std::ostream &out,
                  std::ostream &err) {
  const Config cfg = load_config(g);
  const FrontendConfig frontend = ff.frontend(cfg);
  const auto extender = ff.extender(frontend);
  const Corpus corpus = Corpus::open(manifest_path(manifest_flag, cfg));
  const auto dir = require_out(g);

  if (!dump_sos.empty()) {
    if (frontend.kind != FrontendKind::kLowpass && frontend.kind != FrontendKind::kLowpassBwe)
      throw UsageError("--dump-sos needs a low-pass front-end");
    std::ofstream sos(dump_sos);
    if (!sos) throw DataError("cannot write " + dump_sos);
    sos << format_sos(design_cheby1(frontend.filter_spec()));
  }

  FeaturizeOptions opts;
  opts.seed = g.seed.value_or(1);
  opts.extender = extender ? &*extender : nullptr;
  opts.codec = ff.codec_profile(cfg);
  opts.length = length_from_config(cfg);

  fs::create_directories(fs::path(dir) / "fbank");
  std::ostringstream index;
  index << kIndexHeader << "\n";
  std::ostringstream skipped;
  std::size_t written = 0, n_skipped = 0;
  for (Subset s : parse_subsets(subsets)) {
    for (const auto *e : corpus.subset(s)) {
      FbankMatrix fb;
      try {
        fb = featurize(corpus.load(*e), e->utt_id, s, frontend, opts);
      } catch (const DataError &ex) {
        if (!is_all_silence(ex)) throw DataError(e->utt_id + ": " + ex.what());
        err << "skipping " << e->utt_id << ": " << ex.what() << "\n";
        skipped << e->utt_id << "\t" << ex.what() << "\n";
        ++n_skipped;
        continue;
      }
      const std::string rel = "fbank/" + e->utt_id + ".fbnk";
      write_fbank(fb, (fs::path(dir) / rel).string());
      index << e->utt_id << "\t" << rel << "\t" << label_name(e->label) << "\t" << subset_name(s)
            << "\n";
      ++written;
    }
  }
  std::ofstream(fs::path(dir) / kIndexName) << index.str();
  std::ofstream(fs::path(dir) / "skipped.tsv") << skipped.str();
  out << "front-end " << frontend.label() << (frontend.vad ? " +vad" : "") << ": wrote " << written
      << " feature files of dimension " << frontend.feature_dim() << ", skipped " << n_skipped
      << "\n";
  return 0;
}

int cmd_train(const Globals &g, const std::string &features_dir, std::ostream &out) {
  const Config cfg = load_config(g);
  TrainConfig tc = train_from_config(cfg);
  if (g.seed) tc.seed = *g.seed;
  const auto index = read_index(features_dir);
  std::string train_file, dev_file;
  FeatureSet train_set = load_features(features_dir, index, Subset::kTrain, &train_file);
  FeatureSet dev_set = load_features(features_dir, index, Subset::kDev, &dev_file);
  if (train_set.items.empty()) throw DataError(features_dir + ": no train-subset features");
  if (!dev_set.items.empty() && dev_set.items[0].frames.rows() != train_set.items[0].frames.rows())
    throw DataError("feature dimension mismatch: " + train_file + " has " +
                    std::to_string(train_set.items[0].frames.rows()) + " bands but " + dev_file +
                    " has " + std::to_string(dev_set.items[0].frames.rows()));
  const auto dir = require_out(g);
  const auto result = train(std::move(train_set.items), std::move(dev_set.items), tc);
  save_model(result.model, (fs::path(dir) / "model.asp").string());
  std::ofstream(fs::path(dir) / "train_log.tsv") << format_training_log(result.log);
  const auto &best = result.log.at(result.best_epoch - 1);
  out << "trained " << result.log.size() << " epochs; best epoch " << result.best_epoch
      << " dev loss " << best.dev_loss << "\n";
  return 0;
}

int cmd_score(const Globals &g, const std::string &model_path, const std::string &features_dir,
              const std::string &manifest_flag, const FrontendFlags &ff, std::ostream &out) {
  const Config cfg = load_config(g);
  const AspModel model = load_model(model_path);
  FeatureSet eval;
  std::string source;
  if (!features_dir.empty()) {
    if (!manifest_flag.empty()) throw UsageError("give either --features or --manifest, not both");
    eval = load_features(features_dir, read_index(features_dir), Subset::kEval, &source);
  } else {
    const FrontendConfig frontend = ff.frontend(cfg);
    const auto extender = ff.extender(frontend);
    FeaturizeOptions opts;
    opts.seed = g.seed.value_or(1);
    opts.extender = extender ? &*extender : nullptr;
    opts.codec = ff.codec_profile(cfg);
    opts.length = length_from_config(cfg);
    const Corpus corpus = Corpus::open(manifest_path(manifest_flag, cfg));
    eval = featurize_subset(corpus, Subset::kEval, frontend, opts);
    source = "front-end " + frontend.label();
  }
  if (eval.items.empty()) throw DataError("no eval-subset features to score");
  if (eval.items[0].frames.rows() != model.feat_dim)
    throw DataError("model expects " + std::to_string(model.feat_dim) + " bands but " + source +
                    " has " + std::to_string(eval.items[0].frames.rows()));
  const ScoreSet scores = score_features(model, eval);
  const auto dir = require_out(g);
  write_scores(scores, (fs::path(dir) / "scores.tsv").string());
  out << "scored " << scores.records.size() << " utterances";
  if (scores.count(Label::kBonafide) && scores.count(Label::kSpoof))
    out << ", EER " << pct(compute_eer(scores).eer);
  out << "\n";
  return 0;
}

int cmd_eer(const std::string &scores_path, const std::string &det_path, std::ostream &out) {
  const ScoreSet scores = read_scores(scores_path);
  const EerResult r = compute_eer(scores);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "EER %s threshold %.9g bonafide %zu spoof %zu\n",
                pct(r.eer).c_str(), r.threshold, r.n_bonafide, r.n_spoof);
  out << buf;
  if (!det_path.empty()) {
    const auto b = scores.scores(Label::kBonafide);
    const auto s = scores.scores(Label::kSpoof);
    std::ofstream det(det_path);
    if (!det) throw DataError("cannot write " + det_path);
    det << format_det_csv(det_points(b, s));
  }
  return 0;
}

int cmd_bwe_train(const Globals &g, const std::string &manifest_flag, double fraction,
                  std::optional<double> lambda, std::ostream &out) {
  const Config cfg = load_config(g);
  const Corpus corpus = Corpus::open(manifest_path(manifest_flag, cfg));
  FrontendConfig f;
  f.kind = FrontendKind::kLowpassBwe;
  f.fraction = fraction;
  f.filter_order = cfg.get_int("filter.order", kFrontendFilterOrder);
  f.ripple_db = cfg.get_double("filter.ripple_db", kFrontendRippleDb);
  f.augment = false;
  f.validate();
  const double lam = lambda.value_or(cfg.get_double("plan.ridge_lambda", kDefaultRidgeLambda));
  const auto dir = require_out(g);
  const BweExtender ext = train_extender(corpus, f, lam);
  save_extender(ext, (fs::path(dir) / "extender.bwe").string());
  out << "trained linear regressor at fraction " << fraction << "\n";

  // Held-out quality on the dev subset, against the replication baseline.
  double lsd_reg = 0.0, lsd_rep = 0.0;
  std::size_t n = 0;
  const CutoffFraction cf(fraction);
  for (const auto *e : corpus.subset(Subset::kDev)) {
    const auto wide = corpus.load(*e);
    const auto narrow = lowpass_frontend(wide, cf, f.filter_order, f.ripple_db);
    lsd_reg += measure_quality(extend(narrow, ext), wide, cf).lsd_db;
    lsd_rep += measure_quality(extend_replicate(narrow, cf), wide, cf).lsd_db;
    ++n;
  }
  if (n > 0) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "dev high-band LSD over %zu utterances: regressor %.3f dB, replicate %.3f dB\n",
                  n, lsd_reg / n, lsd_rep / n);
    out << buf;
  }
  return 0;
}

int cmd_sweep(const Globals &g, const std::string &manifest_flag, std::ostream &out,
              std::ostream &err) {
  const Config cfg = load_config(g);
  ExperimentPlan plan = plan_from_config(cfg);
  if (!manifest_flag.empty()) plan.manifest = manifest_flag;
  if (g.seed) plan.seeds = {*g.seed};
  const auto dir = require_out(g);
  const SweepResult r = run_sweep(plan, dir, g.jobs, &err);
  out << r.table;
  out << "cells: " << r.computed << " computed, " << r.cached << " cached, " << r.failed
      << " failed\n";
  return r.failed > 0 ? static_cast<int>(ErrorKind::kData) : 0;
}

}  // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Codec-robust anti-spoofing front-ends: corpus synthesis, features, training, "
               "scoring and sweeps."};
  app.name(args.empty() ? "cmfront" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "INI-style configuration file");
  app.add_option("--set", g.overrides, "override a config key, section.key=value (repeatable)");
  auto *seed_opt = app.add_option("--seed", seed_value, "master seed");
  app.add_option("--jobs", g.jobs, "parallel sweep groups")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output directory");

  auto *synth = app.add_subcommand("synth", "generate the synthetic corpus");

  std::string manifest, subsets = "train,dev,eval", dump_sos;
  FrontendFlags ff;
  auto *featurize = app.add_subcommand("featurize", "write one feature file per utterance");
  featurize->add_option("--manifest", manifest, "corpus manifest");
  ff.add_to(featurize);
  featurize->add_option("--subsets", subsets, "subsets to process")->capture_default_str();
  featurize->add_option("--dump-sos", dump_sos, "write the low-pass SOS coefficients here");

  std::string features_dir;
  auto *train_cmd = app.add_subcommand("train", "train the classifier on a feature directory");
  train_cmd->add_option("--features", features_dir, "directory written by featurize")->required();

  std::string model_path, score_features_dir, score_manifest;
  FrontendFlags score_ff;
  auto *score_cmd = app.add_subcommand("score", "score the eval subset");
  score_cmd->add_option("--model", model_path, "trained model")->required();
  score_cmd->add_option("--features", score_features_dir, "feature directory");
  score_cmd->add_option("--manifest", score_manifest, "corpus manifest (featurize on the fly)");
  score_ff.add_to(score_cmd);

  std::string scores_path, det_path;
  auto *eer_cmd = app.add_subcommand("eer", "equal error rate of a score file");
  eer_cmd->add_option("scores", scores_path, "score TSV")->required();
  eer_cmd->add_option("--det", det_path, "also write DET points as CSV");

  std::string bwe_manifest;
  double fraction = 0.5;
  std::optional<double> lambda;
  auto *bwe_cmd = app.add_subcommand("bwe-train", "fit the linear bandwidth extender");
  bwe_cmd->add_option("--manifest", bwe_manifest, "corpus manifest");
  bwe_cmd->add_option("--fraction", fraction, "cutoff as a fraction of Nyquist")
      ->capture_default_str();
  bwe_cmd->add_option("--lambda", lambda, "ridge penalty");

  std::string sweep_manifest;
  auto *sweep = app.add_subcommand("sweep", "run a plan: front-ends x seeds x codecs");
  sweep->add_option("--manifest", sweep_manifest, "corpus manifest (overrides corpus.manifest)");

  std::vector<const char *> argv;
  for (const auto &a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kUsage);
  }
  if (seed_opt->count()) g.seed = seed_value;

  try {
    if (synth->parsed()) return cmd_synth(g, out);
    if (featurize->parsed()) return cmd_featurize(g, manifest, ff, subsets, dump_sos, out, err);
    if (train_cmd->parsed()) return cmd_train(g, features_dir, out);
    if (score_cmd->parsed())
      return cmd_score(g, model_path, score_features_dir, score_manifest, score_ff, out);
    if (eer_cmd->parsed()) return cmd_eer(scores_path, det_path, out);
    if (bwe_cmd->parsed()) return cmd_bwe_train(g, bwe_manifest, fraction, lambda, out);
    if (sweep->parsed()) return cmd_sweep(g, sweep_manifest, out, err);
  } catch (const Error &e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error &e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kData);
  } catch (const std::exception &e) {
    err << "internal error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kInternal);
  }
  return static_cast<int>(ErrorKind::kUsage);
}

}  // namespace cmfront::cli
