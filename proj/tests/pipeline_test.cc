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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "test_util.h"

using namespace cmfront;
namespace fs = std::filesystem;

namespace {

CorpusSpec tiny_spec() {
  CorpusSpec s;
  s.n_bonafide = 24;
  s.n_spoof = 24;
  s.duration_min_s = 1.0;
  s.duration_max_s = 1.2;
  s.silence_pad_min_s = 0.05;
  s.silence_pad_max_s = 0.1;
  return s;
}

LengthConfig tiny_length() {
  LengthConfig l;
  l.min_seconds = 0.8;
  l.max_seconds = 1.0;
  l.eval_seconds = 1.0;
  return l;
}

// One shared tiny corpus on disk for the whole file.
const std::string &tiny_manifest() {
  static const std::string path = [] {
    const auto dir = testing::scratch_dir("pipeline_corpus");
    return write_corpus(generate_corpus(tiny_spec()), dir.string());
  }();
  return path;
}

ExperimentPlan tiny_plan() {
  ExperimentPlan plan;
  plan.manifest = tiny_manifest();
  plan.frontends = {FrontendConfig::parse("baseline"), FrontendConfig::parse("band_trim@0.5")};
  plan.seeds = {1, 10, 100};
  plan.codecs = {CodecProfile::parse("clean"), CodecProfile::parse("g711_mulaw")};
  plan.train.epochs = 3;
  plan.train.batch_size = 8;
  plan.train.attn_dim = 16;
  plan.length = tiny_length();
  return plan;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string &s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("front-end tokens") {
  const auto b = FrontendConfig::parse("baseline");
  CHECK(b.kind == FrontendKind::kBaseline);
  CHECK(b.label() == "baseline");
  CHECK(b.feature_dim() == 80);
  const auto t = FrontendConfig::parse("band_trim@0.5");
  CHECK(t.label() == "band_trim@0.5");
  CHECK(t.feature_dim() == 60);
  CHECK(FrontendConfig::parse("band_trim@0.2").feature_dim() == 37);
  CHECK(FrontendConfig::parse("lowpass@0.4").feature_dim() == 80);
  CHECK(FrontendConfig::parse("lowpass_bwe@0.5").kind == FrontendKind::kLowpassBwe);
  CHECK_THROWS_AS(FrontendConfig::parse("highpass@0.5"), UsageError);
  CHECK_THROWS_AS(FrontendConfig::parse("lowpass@x"), UsageError);
  CHECK_THROWS_AS(FrontendConfig::parse("lowpass@1.0"), UsageError);
  CHECK_THROWS_AS(FrontendConfig::parse("lowpass@0"), UsageError);
  for (auto k : {FrontendKind::kBaseline, FrontendKind::kBandTrim, FrontendKind::kLowpass,
                 FrontendKind::kLowpassBwe})
    CHECK(parse_frontend_kind(frontend_kind_name(k)) == k);
}

TEST_CASE("baseline without VAD or augmentation equals plain fbank plus length normalization") {
  const auto spec = tiny_spec();
  FrontendConfig f;
  f.augment = false;
  FeaturizeOptions opt;
  opt.seed = 7;
  opt.length = tiny_length();
  const auto bank = build_mel_filterbank();
  for (int i = 0; i < 4; ++i) {
    const auto audio = synth_utterance(100 + i, i % 2 ? Label::kSpoof : Label::kBonafide, spec);
    const std::string id = "utt-" + std::to_string(i);
    for (Subset s : {Subset::kTrain, Subset::kEval}) {
      Rng rng(derive_seed(derive_seed(opt.seed, 2), hash_id(id)));
      const auto direct = normalize_length(
          fbank(audio, bank), s == Subset::kTrain ? LengthMode::kTrain : LengthMode::kEval, rng,
          opt.length);
      const auto piped = featurize(audio, id, s, f, opt);
      CHECK(encode_fbank(piped) == encode_fbank(direct));
    }
  }
}

TEST_CASE("augmentation touches the train subset only; codecs touch eval only") {
  const auto audio = synth_utterance(5, Label::kBonafide, tiny_spec());
  FrontendConfig on;
  on.augment_config.apply_probability = 1.0;
  FrontendConfig off = on;
  off.augment = false;
  FeaturizeOptions opt;
  opt.length = tiny_length();
  for (Subset s : {Subset::kDev, Subset::kEval})
    CHECK(encode_fbank(featurize(audio, "u", s, on, opt)) ==
          encode_fbank(featurize(audio, "u", s, off, opt)));
  CHECK(encode_fbank(featurize(audio, "u", Subset::kTrain, on, opt)) !=
        encode_fbank(featurize(audio, "u", Subset::kTrain, off, opt)));

  FeaturizeOptions coded = opt;
  coded.codec = CodecProfile::parse("g711_mulaw");
  for (Subset s : {Subset::kTrain, Subset::kDev})
    CHECK(encode_fbank(featurize(audio, "u", s, off, coded)) ==
          encode_fbank(featurize(audio, "u", s, off, opt)));
  CHECK(encode_fbank(featurize(audio, "u", Subset::kEval, off, coded)) !=
        encode_fbank(featurize(audio, "u", Subset::kEval, off, opt)));
}

TEST_CASE("featurize is deterministic under its seed") {
  const auto audio = synth_utterance(9, Label::kSpoof, tiny_spec());
  FrontendConfig f;
  f.augment_config.apply_probability = 1.0;
  FeaturizeOptions a, b;
  a.length = b.length = tiny_length();
  b.seed = 2;
  const auto x1 = encode_fbank(featurize(audio, "u", Subset::kTrain, f, a));
  CHECK(x1 == encode_fbank(featurize(audio, "u", Subset::kTrain, f, a)));
  CHECK(x1 != encode_fbank(featurize(audio, "u", Subset::kTrain, f, b)));
}

TEST_CASE("band_trim keeps 60 rows and lowpass empties the high band") {
  const auto audio = synth_utterance(3, Label::kBonafide, tiny_spec());
  FeaturizeOptions opt;
  opt.length = tiny_length();
  auto trim = FrontendConfig::parse("band_trim@0.5");
  trim.augment = false;
  CHECK(featurize(audio, "u", Subset::kEval, trim, opt).rows == 60);

  FrontendConfig base;
  base.augment = false;
  auto lp = FrontendConfig::parse("lowpass@0.5");
  lp.augment = false;
  const auto fb = featurize(audio, "u", Subset::kEval, base, opt);
  const auto fl = featurize(audio, "u", Subset::kEval, lp, opt);
  REQUIRE(fl.rows == 80);
  // Top 10 channels sit well above 1.6 x the cutoff, deep in the stopband.
  double drop = 0.0;
  for (std::size_t r = 70; r < 80; ++r)
    for (std::size_t c = 0; c < fl.cols; ++c) drop += fb(r, c) - fl(r, c);
  drop /= 10.0 * static_cast<double>(fl.cols);
  CHECK(drop > 10.0);  // nats; the filter gives about 60 dB = 13.8 nats
  for (std::size_t c = 0; c < fl.cols; ++c) CHECK(fl(79, c) >= std::log(kLogFloor) - 1e-6);
}

TEST_CASE("lowpass_bwe needs a matching extender for the regressor") {
  const auto audio = synth_utterance(3, Label::kBonafide, tiny_spec());
  auto f = FrontendConfig::parse("lowpass_bwe@0.5");
  CHECK_THROWS_AS(apply_frontend(audio, f, nullptr), UsageError);
  f.bwe_kind = BweKind::kReplicate;
  CHECK(apply_frontend(audio, f, nullptr).size() == audio.size());
  const auto wrong = BweExtender::replicate(CutoffFraction(0.4));
  CHECK_THROWS_AS(apply_frontend(audio, f, &wrong), UsageError);
  const auto right = BweExtender::replicate(CutoffFraction(0.5));
  CHECK(apply_frontend(audio, f, &right).samples ==
        extend_replicate(lowpass_frontend(audio, CutoffFraction(0.5)), CutoffFraction(0.5))
            .samples);
}

TEST_CASE("corpus round trip and extender training") {
  const Corpus c = Corpus::open(tiny_manifest());
  CHECK(c.entries.size() == 48);
  CHECK(c.subset(Subset::kTrain).size() == 32);
  CHECK(c.subset(Subset::kDev).size() == 6);
  CHECK(c.subset(Subset::kEval).size() == 10);
  const auto utts = generate_corpus(tiny_spec());
  const auto &first = *c.subset(Subset::kTrain).front();
  CHECK(first.utt_id == utts.front().id);
  const auto loaded = c.load(first);
  REQUIRE(loaded.size() == utts.front().audio.size());
  for (std::size_t i = 0; i < loaded.size(); ++i)
    CHECK(loaded.samples[i] == doctest::Approx(utts.front().audio.samples[i]).epsilon(1e-4));

  auto f = FrontendConfig::parse("lowpass_bwe@0.5");
  const auto ext = train_extender(c, f, kDefaultRidgeLambda);
  CHECK(ext.kind == BweKind::kLinearRegressor);
  CHECK(ext.fraction == 0.5);
  FeaturizeOptions opt;
  opt.extender = &ext;
  opt.length = tiny_length();
  const auto set = featurize_subset(c, Subset::kEval, f, opt);
  CHECK(set.items.size() == 10);
  CHECK(set.skipped.empty());
  CHECK(set.items[0].frames.rows() == 80);
}

TEST_CASE("plan_from_config expands fractions and rejects unknown keys") {
  auto cfg = Config::parse(
      "[corpus]\nmanifest = m.tsv\n"
      "[plan]\nfrontends = baseline, band_trim, lowpass@0.4\nfractions = 0.3, 0.5\n"
      "seeds = 1, 2\ncodecs = clean, g711_mulaw\nvad = off, on\n"
      "[train]\nepochs = 4\n[augment]\nenabled = off\n");
  const auto plan = plan_from_config(cfg);
  REQUIRE(plan.frontends.size() == 4);
  CHECK(plan.frontends[0].label() == "baseline");
  CHECK(plan.frontends[1].label() == "band_trim@0.3");
  CHECK(plan.frontends[2].label() == "band_trim@0.5");
  CHECK(plan.frontends[3].label() == "lowpass@0.4");
  CHECK_FALSE(plan.frontends[0].augment);
  CHECK(plan.seeds == std::vector<uint64_t>{1, 2});
  CHECK(plan.codecs.size() == 2);
  CHECK(plan.vad_modes == std::vector<bool>{false, true});
  CHECK(plan.train.epochs == 4);
  CHECK(plan.manifest == "m.tsv");

  const auto defaults = plan_from_config(Config::parse("[plan]\nfrontends = lowpass\n"));
  CHECK(defaults.frontends.size() == 6);
  CHECK(defaults.seeds == std::vector<uint64_t>{1, 10, 100});

  cfg.set("plan.colour", "blue");
  CHECK_THROWS_AS(plan_from_config(cfg), UsageError);
  CHECK_THROWS_AS(plan_from_config(Config::parse("[plan]\nseeds = one\n")), UsageError);
  ExperimentPlan empty;
  empty.manifest = "m";
  CHECK_THROWS_AS(empty.validate(), UsageError);
}

TEST_CASE("sweep: 2 front-ends x 3 seeds x 2 codecs gives 12 cells and 4 averages") {
  const auto dir = testing::scratch_dir("sweep_a");
  const auto plan = tiny_plan();
  const auto r = run_sweep(plan, dir.string());
  CHECK(r.cells.size() == 12);
  CHECK(r.computed == 12);
  CHECK(r.cached == 0);
  CHECK(r.failed == 0);
  CHECK(r.rows.size() == 16);
  CHECK(count_lines(r.csv) == 17);  // header + rows
  CHECK(slurp(dir / "results.csv") == r.csv);
  CHECK(count_lines(slurp(dir / "run.jsonl")) == 12);
  for (const auto &c : r.cells) {
    REQUIRE(c.result.has_value());
    CHECK(c.result->n_bonafide == 5);
    CHECK(c.result->n_spoof == 5);
  }
  CHECK(r.table.find("EER% [clean]") != std::string::npos);
  CHECK(r.table.find("EER% [g711_mulaw]") != std::string::npos);

  SUBCASE("a second run is fully cached and identical") {
    const auto again = run_sweep(plan, dir.string());
    CHECK(again.cached == 12);
    CHECK(again.computed == 0);
    CHECK(again.csv == r.csv);
  }
  SUBCASE("resuming recomputes only the missing cells") {
    int removed = 0;
    for (const auto &c : r.cells)
      if (c.seed == 10 && c.codec.kind == CodecKind::kG711Mulaw) {
        fs::remove(dir / "cells" / (c.key + ".json"));
        ++removed;
      }
    REQUIRE(removed == 2);
    const auto resumed = run_sweep(plan, dir.string());
    CHECK(resumed.computed == 2);
    CHECK(resumed.cached == 10);
    CHECK(resumed.csv == r.csv);
  }
}

TEST_CASE("sweep output is independent of run directory and thread count") {
  auto plan = tiny_plan();
  plan.codecs = {CodecProfile::parse("g711_mulaw")};
  plan.seeds = {1, 10};
  const auto a = run_sweep(plan, testing::scratch_dir("sweep_b1").string(), 1);
  const auto b = run_sweep(plan, testing::scratch_dir("sweep_b2").string(), 3);
  CHECK(a.csv == b.csv);
  CHECK(a.table == b.table);
  // Different seeds really train different models.
  CHECK(a.cells[0].key != a.cells[1].key);
}

TEST_CASE("a failing group is recorded and the sweep continues") {
  // Copy the corpus and truncate one training WAV.
  const auto src = fs::path(tiny_manifest()).parent_path();
  const auto dir = testing::scratch_dir("sweep_fail");
  fs::copy(src, dir / "corpus", fs::copy_options::recursive);
  const Corpus c = Corpus::open((dir / "corpus" / "manifest.tsv").string());
  const auto victim = dir / "corpus" / c.subset(Subset::kTrain).front()->wav_path;
  fs::resize_file(victim, 20);

  auto plan = tiny_plan();
  plan.manifest = (dir / "corpus" / "manifest.tsv").string();
  plan.seeds = {1};
  plan.codecs = {CodecProfile::parse("clean")};
  auto bad = FrontendConfig::parse("lowpass_bwe@0.5");
  bad.bwe_kind = BweKind::kReplicate;
  plan.frontends = {bad};
  const auto r = run_sweep(plan, (dir / "out").string());
  CHECK(r.failed == 1);
  CHECK_FALSE(r.cells[0].error.empty());
  CHECK(r.csv.find("failed") != std::string::npos);
  CHECK(slurp(dir / "out" / "run.jsonl").find("\"failed\"") != std::string::npos);
}

TEST_CASE("content_hash is a stable 16-digit hex string") {
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a").size() == 16);
  CHECK(content_hash("a") != content_hash("b"));
}
