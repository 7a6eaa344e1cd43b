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

#include "cmfront/pipeline.h"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace cmfront {

namespace fs = std::filesystem;

namespace {

const MelFilterbank &default_bank() {
  static const MelFilterbank bank = build_mel_filterbank();
  return bank;
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string read_text(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Write to a temporary name and rename, so a crash never leaves a truncated
// cache entry behind.
void write_atomic(const std::string &path, const std::string &bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp);
    out << bytes;
    if (!out) throw DataError("write failed for " + tmp);
  }
  fs::rename(tmp, path);
}

void round_to_float(FbankMatrix &m) {
  for (double &v : m.values) v = static_cast<double>(static_cast<float>(v));
}

std::string filter_desc(const FrontendConfig &f) {
  return std::to_string(f.filter_order) + "," + num(f.ripple_db);
}

std::string augment_desc(const FrontendConfig &f) {
  const AugmentConfig &a = f.augment_config;
  if (!f.augment) return "none";
  return num(a.apply_probability) + "," + num(a.snr_min_db) + "," + num(a.snr_max_db) + "," +
         num(a.rt60_min_s) + "," + num(a.rt60_max_s) + "," + std::to_string(a.seed);
}

std::string train_desc(const TrainConfig &t) {
  const LrSchedule &s = t.schedule;
  const AdamConfig &a = t.adam;
  return std::to_string(t.batch_size) + "," + std::to_string(t.epochs) + "," +
         std::to_string(t.attn_dim) + "," + num(t.dev_fraction) + "," + num(s.base_lr) + "," +
         std::to_string(s.warmup_epochs) + "," + std::to_string(s.plateau_patience) + "," +
         num(s.plateau_factor) + "," + num(s.min_lr) + "," + num(s.threshold) + "," +
         num(a.beta1) + "," + num(a.beta2) + "," + num(a.epsilon) + "," + num(a.weight_decay);
}

std::string length_desc(const LengthConfig &l) {
  return num(l.min_seconds) + "," + num(l.max_seconds) + "," + num(l.eval_seconds);
}

std::string codec_desc(const CodecProfile &c) {
  std::string d = c.name();
  if (c.kind == CodecKind::kG711Mulaw) d += "," + num(c.mu);
  if (c.kind == CodecKind::kBandlimit) d += "," + num(c.cutoff_hz) + "," + num(c.noise_floor_db);
  return d;
}

bool needs_regressor(const FrontendConfig &f) {
  return f.kind == FrontendKind::kLowpassBwe && f.bwe_kind == BweKind::kLinearRegressor;
}

}  // namespace

// ---- front-ends -----------------------------------------------------------

const char *frontend_kind_name(FrontendKind kind) {
  switch (kind) {
    case FrontendKind::kBaseline: return "baseline";
    case FrontendKind::kBandTrim: return "band_trim";
    case FrontendKind::kLowpass: return "lowpass";
    case FrontendKind::kLowpassBwe: return "lowpass_bwe";
  }
  return "?";
}

FrontendKind parse_frontend_kind(const std::string &token) {
  if (token == "baseline") return FrontendKind::kBaseline;
  if (token == "band_trim") return FrontendKind::kBandTrim;
  if (token == "lowpass") return FrontendKind::kLowpass;
  if (token == "lowpass_bwe") return FrontendKind::kLowpassBwe;
  throw UsageError("unknown front-end '" + token + "'");
}

std::string FrontendConfig::label() const {
  if (kind == FrontendKind::kBaseline) return "baseline";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "@%g", fraction);
  return frontend_kind_name(kind) + std::string(buf);
}

FrontendConfig FrontendConfig::parse(const std::string &token) {
  FrontendConfig f;
  const auto at = token.find('@');
  f.kind = parse_frontend_kind(trim(token.substr(0, at)));
  if (at != std::string::npos) {
    const std::string frac = trim(token.substr(at + 1));
    char *end = nullptr;
    f.fraction = std::strtod(frac.c_str(), &end);
    if (frac.empty() || *end != '\0') throw UsageError("bad cutoff fraction in '" + token + "'");
  }
  f.validate();
  return f;
}

void FrontendConfig::validate() const {
  if (kind != FrontendKind::kBaseline) {
    CutoffFraction checked(fraction);
    if (!(fraction < 1.0)) throw UsageError(label() + ": cutoff fraction must be below 1");
  }
  if (augment) augment_config.validate();
  if (kind == FrontendKind::kLowpass || kind == FrontendKind::kLowpassBwe) filter_spec().validate();
}

FilterSpec FrontendConfig::filter_spec(int sample_rate) const {
  FilterSpec spec;
  spec.order = filter_order;
  spec.ripple_db = ripple_db;
  spec.cutoff_hz = CutoffFraction(fraction).hz(sample_rate);
  spec.sample_rate = sample_rate;
  return spec;
}

std::size_t FrontendConfig::feature_dim() const {
  if (kind == FrontendKind::kBandTrim) return trim_index(CutoffFraction(fraction)).n_low;
  return default_bank().n_mels;
}

AudioBuffer apply_frontend(const AudioBuffer &audio, const FrontendConfig &frontend,
                           const BweExtender *extender) {
  switch (frontend.kind) {
    case FrontendKind::kBaseline:
    case FrontendKind::kBandTrim:
      return audio;
    case FrontendKind::kLowpass:
      return lowpass_frontend(audio, CutoffFraction(frontend.fraction), frontend.filter_order,
                              frontend.ripple_db);
    case FrontendKind::kLowpassBwe: {
      const CutoffFraction fraction(frontend.fraction);
      const auto narrow =
          lowpass_frontend(audio, fraction, frontend.filter_order, frontend.ripple_db);
      if (!extender) {
        if (frontend.bwe_kind == BweKind::kReplicate) return extend_replicate(narrow, fraction);
        throw UsageError("lowpass_bwe with a linear regressor needs a trained extender");
      }
      if (extender->kind != frontend.bwe_kind || extender->fraction != frontend.fraction)
        throw UsageError("extender (" + std::string(bwe_kind_name(extender->kind)) + " @" +
                         num(extender->fraction) + ") does not match front-end " + frontend.label());
      return extend(narrow, *extender);
    }
  }
  throw InvariantError("unhandled front-end kind");
}

bool is_all_silence(const Error &e) {
  return e.kind() == ErrorKind::kData && std::string(e.what()) == "all-silence utterance";
}

FbankMatrix featurize(const AudioBuffer &audio, const std::string &utt_id, Subset subset,
                      const FrontendConfig &frontend, const FeaturizeOptions &options) {
  const uint64_t id_hash = hash_id(utt_id);
  AudioBuffer x = audio;
  if (subset == Subset::kEval && options.codec.kind != CodecKind::kClean)
    x = apply_codec(x, options.codec, derive_seed(0xC0DEC, id_hash));
  if (frontend.vad) x = vad_trim(x).trimmed;
  if (subset == Subset::kTrain && frontend.augment)
    x = augment(x, frontend.augment_config,
                derive_seed(derive_seed(options.seed, 1) ^ frontend.augment_config.seed, id_hash));
  x = apply_frontend(x, frontend, options.extender);

  FbankMatrix fb = fbank(x, default_bank());
  if (frontend.kind == FrontendKind::kBandTrim)
    fb = trim_bands(fb, trim_index(CutoffFraction(frontend.fraction)));
  Rng rng(derive_seed(derive_seed(options.seed, 2), id_hash));
  fb = normalize_length(fb, subset == Subset::kTrain ? LengthMode::kTrain : LengthMode::kEval, rng,
                        options.length);
  round_to_float(fb);
  return fb;
}

// ---- corpus ---------------------------------------------------------------

Corpus Corpus::open(const std::string &manifest_path) {
  Corpus c;
  const std::string text = read_text(manifest_path);
  c.entries = parse_manifest(text, manifest_path);
  c.root = fs::path(manifest_path).parent_path().string();
  c.fingerprint = hash_id(text);
  return c;
}

AudioBuffer Corpus::load(const ManifestEntry &entry) const {
  const fs::path path = fs::path(root) / entry.wav_path;
  AudioBuffer audio = read_wav(path.string());
  if (audio.sample_rate != 16000)
    throw DataError(path.string() + ": expected 16 kHz audio, got " +
                    std::to_string(audio.sample_rate) + " Hz");
  return audio;
}

std::vector<const ManifestEntry *> Corpus::subset(Subset s) const {
  std::vector<const ManifestEntry *> out;
  for (const auto &e : entries)
    if (e.subset == s) out.push_back(&e);
  return out;
}

std::string write_corpus(const std::vector<Utterance> &utts, const std::string &dir) {
  fs::create_directories(fs::path(dir) / "wav");
  std::vector<ManifestEntry> entries;
  for (const auto &u : utts) {
    const std::string rel = "wav/" + u.id + ".wav";
    write_wav(u.audio, (fs::path(dir) / rel).string());
    entries.push_back({u.id, rel, u.label, u.subset});
  }
  const std::string manifest = (fs::path(dir) / "manifest.tsv").string();
  write_manifest(entries, manifest);
  return manifest;
}

BweExtender train_extender(const Corpus &corpus, const FrontendConfig &frontend,
                           double ridge_lambda) {
  const CutoffFraction fraction(frontend.fraction);
  RegressorTrainer trainer(fraction);
  for (const auto *e : corpus.subset(Subset::kTrain)) {
    const auto wide = corpus.load(*e);
    trainer.add(lowpass_frontend(wide, fraction, frontend.filter_order, frontend.ripple_db), wide);
  }
  return trainer.finish(ridge_lambda);
}

FeatureSet featurize_subset(const Corpus &corpus, Subset subset, const FrontendConfig &frontend,
                            const FeaturizeOptions &options) {
  FeatureSet out;
  for (const auto *e : corpus.subset(subset)) {
    FbankMatrix fb;
    try {
      fb = featurize(corpus.load(*e), e->utt_id, subset, frontend, options);
    } catch (const DataError &err) {
      if (is_all_silence(err)) {
        out.skipped.push_back(e->utt_id);
        continue;
      }
      throw DataError(e->utt_id + ": " + err.what());
    }
    out.ids.push_back(e->utt_id);
    out.items.push_back({to_frames(fb), e->label});
  }
  return out;
}

ScoreSet score_features(const AspModel &model, const FeatureSet &features) {
  ScoreSet set;
  for (std::size_t i = 0; i < features.items.size(); ++i)
    set.records.push_back(
        {features.ids[i], features.items[i].label, score(model, features.items[i].frames)});
  return set;
}

// ---- configuration --------------------------------------------------------

const std::set<std::string> &known_config_keys() {
  static const std::set<std::string> keys = {
      "corpus.manifest", "corpus.n_bonafide", "corpus.n_spoof", "corpus.train_weight",
      "corpus.dev_weight", "corpus.eval_weight", "corpus.duration_min", "corpus.duration_max",
      "corpus.silence_pad_min", "corpus.silence_pad_max", "corpus.low_band_db",
      "corpus.high_band_db", "corpus.strength_min", "corpus.strength_max", "corpus.seed",
      "train.preset", "train.batch_size", "train.epochs", "train.attn_dim", "train.dev_fraction",
      "train.base_lr", "train.warmup_epochs", "train.patience", "train.factor", "train.min_lr",
      "train.threshold", "train.weight_decay", "train.beta1", "train.beta2", "train.epsilon",
      "augment.enabled", "augment.apply_probability", "augment.snr_min", "augment.snr_max",
      "augment.rt60_min", "augment.rt60_max", "augment.seed",
      "features.min_seconds", "features.max_seconds", "features.eval_seconds",
      "plan.frontends", "plan.fractions", "plan.seeds", "plan.codecs", "plan.vad",
      "plan.bwe_kind", "plan.ridge_lambda", "plan.bandlimit_cutoff_hz",
      "plan.bandlimit_noise_floor_db", "filter.order", "filter.ripple_db"};
  return keys;
}

CorpusSpec corpus_from_config(const Config &cfg) {
  CorpusSpec s;
  s.n_bonafide = cfg.get_int("corpus.n_bonafide", s.n_bonafide);
  s.n_spoof = cfg.get_int("corpus.n_spoof", s.n_spoof);
  s.train_weight = cfg.get_double("corpus.train_weight", s.train_weight);
  s.dev_weight = cfg.get_double("corpus.dev_weight", s.dev_weight);
  s.eval_weight = cfg.get_double("corpus.eval_weight", s.eval_weight);
  s.duration_min_s = cfg.get_double("corpus.duration_min", s.duration_min_s);
  s.duration_max_s = cfg.get_double("corpus.duration_max", s.duration_max_s);
  s.silence_pad_min_s = cfg.get_double("corpus.silence_pad_min", s.silence_pad_min_s);
  s.silence_pad_max_s = cfg.get_double("corpus.silence_pad_max", s.silence_pad_max_s);
  s.artifacts.low_band_db = cfg.get_double("corpus.low_band_db", s.artifacts.low_band_db);
  s.artifacts.high_band_db = cfg.get_double("corpus.high_band_db", s.artifacts.high_band_db);
  s.artifacts.strength_min = cfg.get_double("corpus.strength_min", s.artifacts.strength_min);
  s.artifacts.strength_max = cfg.get_double("corpus.strength_max", s.artifacts.strength_max);
  s.seed = cfg.get_u64("corpus.seed", s.seed);
  s.validate();
  return s;
}

TrainConfig train_from_config(const Config &cfg) {
  const std::string preset = cfg.get("train.preset", "desk");
  TrainConfig t;
  if (preset == "full") t = TrainConfig::full_scale();
  else if (preset != "desk") throw UsageError("train.preset must be desk or full");
  t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
  t.epochs = cfg.get_int("train.epochs", t.epochs);
  t.attn_dim = cfg.get_int("train.attn_dim", t.attn_dim);
  t.dev_fraction = cfg.get_double("train.dev_fraction", t.dev_fraction);
  t.schedule.base_lr = cfg.get_double("train.base_lr", t.schedule.base_lr);
  t.schedule.warmup_epochs = cfg.get_int("train.warmup_epochs", t.schedule.warmup_epochs);
  t.schedule.plateau_patience = cfg.get_int("train.patience", t.schedule.plateau_patience);
  t.schedule.plateau_factor = cfg.get_double("train.factor", t.schedule.plateau_factor);
  t.schedule.min_lr = cfg.get_double("train.min_lr", t.schedule.min_lr);
  t.schedule.threshold = cfg.get_double("train.threshold", t.schedule.threshold);
  t.adam.weight_decay = cfg.get_double("train.weight_decay", t.adam.weight_decay);
  t.adam.beta1 = cfg.get_double("train.beta1", t.adam.beta1);
  t.adam.beta2 = cfg.get_double("train.beta2", t.adam.beta2);
  t.adam.epsilon = cfg.get_double("train.epsilon", t.adam.epsilon);
  if (t.batch_size < 1 || t.epochs < 1 || t.attn_dim < 1)
    throw UsageError("train: batch_size, epochs and attn_dim must be positive");
  if (t.schedule.warmup_epochs < 1 || !(t.schedule.base_lr > 0.0) || !(t.schedule.min_lr > 0.0))
    throw UsageError("train: learning-rate settings must be positive");
  return t;
}

AugmentConfig augment_from_config(const Config &cfg) {
  AugmentConfig a;
  a.apply_probability = cfg.get_double("augment.apply_probability", a.apply_probability);
  a.snr_min_db = cfg.get_double("augment.snr_min", a.snr_min_db);
  a.snr_max_db = cfg.get_double("augment.snr_max", a.snr_max_db);
  a.rt60_min_s = cfg.get_double("augment.rt60_min", a.rt60_min_s);
  a.rt60_max_s = cfg.get_double("augment.rt60_max", a.rt60_max_s);
  a.seed = cfg.get_u64("augment.seed", a.seed);
  a.validate();
  return a;
}

void ExperimentPlan::validate() const {
  if (frontends.empty()) throw UsageError("plan has no front-ends");
  if (seeds.empty()) throw UsageError("plan has no seeds");
  if (codecs.empty()) throw UsageError("plan has no codecs");
  if (vad_modes.empty()) throw UsageError("plan has no VAD modes");
  if (manifest.empty()) throw UsageError("plan has no corpus manifest");
  for (const auto &f : frontends) f.validate();
}

ExperimentPlan plan_from_config(const Config &cfg) {
  cfg.check_known(known_config_keys());
  ExperimentPlan plan;
  plan.manifest = cfg.get("corpus.manifest", "");
  plan.train = train_from_config(cfg);
  plan.length.min_seconds = cfg.get_double("features.min_seconds", plan.length.min_seconds);
  plan.length.max_seconds = cfg.get_double("features.max_seconds", plan.length.max_seconds);
  plan.length.eval_seconds = cfg.get_double("features.eval_seconds", plan.length.eval_seconds);
  plan.ridge_lambda = cfg.get_double("plan.ridge_lambda", plan.ridge_lambda);

  const AugmentConfig augment = augment_from_config(cfg);
  const bool augment_on = cfg.get_bool("augment.enabled", true);
  const BweKind bwe = parse_bwe_kind(cfg.get("plan.bwe_kind", "linear_regressor"));
  const int filter_order = cfg.get_int("filter.order", kFrontendFilterOrder);
  const double ripple_db = cfg.get_double("filter.ripple_db", kFrontendRippleDb);

  std::vector<double> fractions;
  for (const auto &f : cfg.get_list("plan.fractions", {"0.2", "0.3", "0.4", "0.5", "0.6", "0.7"})) {
    char *end = nullptr;
    fractions.push_back(std::strtod(f.c_str(), &end));
    if (*end != '\0') throw UsageError("plan.fractions: bad value '" + f + "'");
  }
  for (const auto &token : cfg.get_list("plan.frontends", {"baseline"})) {
    FrontendConfig proto = FrontendConfig::parse(token);
    proto.bwe_kind = bwe;
    proto.filter_order = filter_order;
    proto.ripple_db = ripple_db;
    proto.augment = augment_on;
    proto.augment_config = augment;
    if (proto.kind == FrontendKind::kBaseline || token.find('@') != std::string::npos) {
      plan.frontends.push_back(proto);
      continue;
    }
    for (double f : fractions) {
      FrontendConfig expanded = proto;
      expanded.fraction = f;
      expanded.validate();
      plan.frontends.push_back(expanded);
    }
  }

  plan.seeds.clear();
  for (const auto &s : cfg.get_list("plan.seeds", {"1", "10", "100"})) {
    Config one;
    one.set("seed", s);
    plan.seeds.push_back(one.get_u64("seed", 0));
  }
  plan.codecs.clear();
  for (const auto &c : cfg.get_list("plan.codecs", {"clean"})) {
    CodecProfile p = CodecProfile::parse(c);
    p.cutoff_hz = cfg.get_double("plan.bandlimit_cutoff_hz", p.cutoff_hz);
    p.noise_floor_db = cfg.get_double("plan.bandlimit_noise_floor_db", p.noise_floor_db);
    plan.codecs.push_back(p);
  }
  plan.vad_modes.clear();
  for (const auto &v : cfg.get_list("plan.vad", {"off"})) {
    Config one;
    one.set("vad", v);
    plan.vad_modes.push_back(one.get_bool("vad", false));
  }
  return plan;
}

// ---- sweep ----------------------------------------------------------------

std::string content_hash(const std::string &text) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_id(text)));
  return buf;
}

std::string SweepCell::system() const { return codec.name() + (frontend.vad ? "+vad" : ""); }

namespace {

struct Group {
  FrontendConfig frontend;
  uint64_t seed = 0;
  std::string model_key;
  std::string extender_key;  // empty unless a regressor is needed
  std::vector<std::size_t> cells;
};

// Features that do not depend on the seed (dev and eval subsets are neither
// augmented nor randomly cropped) are shared between the seeds of a group.
class FeatureMemo {
 public:
  std::shared_ptr<const FeatureSet> get(const std::string &key,
                                        const std::function<FeatureSet()> &make) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (const auto &[k, v] : entries_)
        if (k == key) return v;
    }
    auto made = std::make_shared<const FeatureSet>(make());
    std::lock_guard<std::mutex> lock(mu_);
    entries_.push_back({key, made});
    while (entries_.size() > kCapacity) entries_.erase(entries_.begin());
    return made;
  }

 private:
  static constexpr std::size_t kCapacity = 4;
  std::mutex mu_;
  std::vector<std::pair<std::string, std::shared_ptr<const FeatureSet>>> entries_;
};

std::optional<EerResult> read_cached_cell(const std::string &path) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(read_text(path));
    EerResult r;
    r.eer = j.at("eer").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.n_bonafide = j.at("n_bonafide").get<std::size_t>();
    r.n_spoof = j.at("n_spoof").get<std::size_t>();
    return r;
  } catch (const std::exception &) {
    return std::nullopt;  // unreadable entries are recomputed
  }
}

}  // namespace

SweepResult run_sweep(const ExperimentPlan &plan, const std::string &out_dir, int jobs,
                      std::ostream *log) {
  plan.validate();
  if (jobs < 1) throw UsageError("--jobs must be at least 1");
  const Corpus corpus = Corpus::open(plan.manifest);
  for (Subset s : {Subset::kTrain, Subset::kDev, Subset::kEval})
    if (corpus.subset(s).empty())
      throw DataError(plan.manifest + ": corpus has no " + subset_name(s) + " utterances");

  const fs::path out(out_dir);
  fs::create_directories(out / "cells");
  fs::create_directories(out / "models");
  fs::create_directories(out / "extenders");
  std::mutex log_mu;
  auto say = [&](const std::string &line) {
    if (!log) return;
    std::lock_guard<std::mutex> lock(log_mu);
    *log << line << std::endl;
  };

  const std::string corpus_id = content_hash(std::to_string(corpus.fingerprint));
  const std::string common = "corpus=" + corpus_id + "|train=" + train_desc(plan.train) +
                             "|len=" + length_desc(plan.length);

  SweepResult result;
  std::vector<Group> groups;
  for (bool vad : plan.vad_modes) {
    for (const auto &proto : plan.frontends) {
      for (uint64_t seed : plan.seeds) {
        Group g;
        g.frontend = proto;
        g.frontend.vad = vad;
        g.seed = seed;
        if (needs_regressor(g.frontend))
          g.extender_key = content_hash("bwe1|" + corpus_id + "|" + num(g.frontend.fraction) + "|" +
                                        filter_desc(g.frontend) + "|" + num(plan.ridge_lambda));
        g.model_key = content_hash(
            "model1|" + common + "|fe=" + g.frontend.label() + "|vad=" + (vad ? "1" : "0") +
            "|filt=" + filter_desc(g.frontend) + "|aug=" + augment_desc(g.frontend) + "|bwe=" + bwe_kind_name(g.frontend.bwe_kind) +
            "," + g.extender_key + "|seed=" + std::to_string(seed));
        for (const auto &codec : plan.codecs) {
          SweepCell cell;
          cell.frontend = g.frontend;
          cell.seed = seed;
          cell.codec = codec;
          cell.key = content_hash("cell1|" + g.model_key + "|codec=" + codec_desc(codec));
          cell.result = read_cached_cell((out / "cells" / (cell.key + ".json")).string());
          cell.cached = cell.result.has_value();
          g.cells.push_back(result.cells.size());
          result.cells.push_back(cell);
        }
        groups.push_back(g);
      }
    }
  }

  // Extenders are trained up front, once per cutoff fraction.
  std::map<std::string, BweExtender> extenders;
  for (const auto &g : groups) {
    if (g.extender_key.empty() || extenders.count(g.extender_key)) continue;
    bool pending = false;
    for (auto i : g.cells) pending |= !result.cells[i].cached;
    if (!pending) continue;
    const fs::path path = out / "extenders" / (g.extender_key + ".bwe");
    if (fs::exists(path)) {
      extenders[g.extender_key] = load_extender(path.string());
    } else {
      say("training BWE regressor at fraction " + num(g.frontend.fraction));
      extenders[g.extender_key] =
          train_extender(corpus, g.frontend, plan.ridge_lambda);
      write_atomic(path.string(), encode_extender(extenders[g.extender_key]));
    }
  }

  FeatureMemo memo;
  std::mutex jsonl_mu;
  std::ofstream jsonl(out / "run.jsonl", std::ios::app);
  auto record = [&](const SweepCell &c, const std::string &status) {
    nlohmann::json j;
    j["cell"] = c.key;
    j["frontend"] = frontend_kind_name(c.frontend.kind);
    if (c.frontend.kind != FrontendKind::kBaseline) j["fraction"] = c.frontend.fraction;
    j["vad"] = c.frontend.vad;
    j["seed"] = c.seed;
    j["codec"] = c.codec.name();
    j["status"] = status;
    if (c.result) j["eer"] = c.result->eer;
    if (!c.error.empty()) j["error"] = c.error;
    std::lock_guard<std::mutex> lock(jsonl_mu);
    jsonl << j.dump() << "\n";
    jsonl.flush();
  };

  auto run_group = [&](const Group &g) {
    bool pending = false;
    for (auto i : g.cells) pending |= !result.cells[i].cached;
    if (!pending) {
      for (auto i : g.cells) record(result.cells[i], "cached");
      return;
    }
    const std::string tag = g.frontend.label() + (g.frontend.vad ? "+vad" : "") + " seed " +
                            std::to_string(g.seed);
    try {
      FeaturizeOptions opts;
      opts.seed = g.seed;
      opts.length = plan.length;
      if (!g.extender_key.empty()) opts.extender = &extenders.at(g.extender_key);
      const std::string shared_key = g.frontend.label() + "|" + (g.frontend.vad ? "1" : "0") +
                                     "|" + filter_desc(g.frontend) + "|" + g.extender_key +
                                     "|" + length_desc(plan.length);

      const fs::path model_path = out / "models" / (g.model_key + ".asp");
      AspModel model;
      if (fs::exists(model_path)) {
        model = load_model(model_path.string());
      } else {
        say("featurizing " + tag);
        FeatureSet train_set = featurize_subset(corpus, Subset::kTrain, g.frontend, opts);
        const auto dev_set = memo.get("dev|" + shared_key, [&] {
          return featurize_subset(corpus, Subset::kDev, g.frontend, opts);
        });
        say("training " + tag + " on " + std::to_string(train_set.items.size()) + " utterances");
        TrainConfig tc = plan.train;
        tc.seed = g.seed;
        const auto trained = train(std::move(train_set.items), dev_set->items, tc);
        model = trained.model;
        write_atomic((out / "models" / (g.model_key + ".log.tsv")).string(),
                     format_training_log(trained.log));
        write_atomic(model_path.string(), encode_model(model));
      }

      for (auto i : g.cells) {
        SweepCell &cell = result.cells[i];
        if (cell.cached) {
          record(cell, "cached");
          continue;
        }
        opts.codec = cell.codec;
        const auto eval_set = memo.get("eval|" + shared_key + "|" + codec_desc(cell.codec), [&] {
          return featurize_subset(corpus, Subset::kEval, g.frontend, opts);
        });
        const ScoreSet scores = score_features(model, *eval_set);
        cell.result = compute_eer(scores);
        write_atomic((out / "cells" / (cell.key + ".scores.tsv")).string(), format_scores(scores));
        nlohmann::json j;
        j["eer"] = cell.result->eer;
        j["threshold"] = cell.result->threshold;
        j["n_bonafide"] = cell.result->n_bonafide;
        j["n_spoof"] = cell.result->n_spoof;
        j["skipped"] = eval_set->skipped.size();
        write_atomic((out / "cells" / (cell.key + ".json")).string(), j.dump(2) + "\n");
        say("  " + tag + " " + cell.codec.name() + ": EER " + num(100.0 * cell.result->eer) + "%");
        record(cell, "computed");
      }
    } catch (const Error &e) {
      for (auto i : g.cells) {
        SweepCell &cell = result.cells[i];
        if (cell.result) continue;
        cell.error = e.what();
        record(cell, "failed");
      }
      say("FAILED " + tag + ": " + e.what());
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < groups.size();) run_group(groups[i]);
  };
  std::vector<std::thread> pool;
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), groups.size());
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto &t : pool) t.join();

  std::vector<ResultRow> rows;
  for (const auto &c : result.cells) {
    if (c.cached) ++result.cached;
    else if (c.result) ++result.computed;
    else ++result.failed;
    ResultRow r;
    r.system = c.system();
    r.frontend = frontend_kind_name(c.frontend.kind);
    if (c.frontend.kind != FrontendKind::kBaseline) r.fraction = c.frontend.fraction;
    r.seed = c.seed;
    if (c.result) r.eer = c.result->eer;
    rows.push_back(r);
  }
  // Rows in plan order: condition, then front-end, then seed.
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow &a, const ResultRow &b) {
    return a.system < b.system;
  });
  result.rows = with_seed_averages(rows);
  result.csv = format_results_csv(result.rows);
  result.table = format_results_table(result.rows);
  write_atomic((out / "results.csv").string(), result.csv);
  write_atomic((out / "results.txt").string(), result.table);
  return result;
}

}  // namespace cmfront
