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

#include "cmfront/channel.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "cmfront/filters.h"

namespace cmfront {

namespace {

double mean_power(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

double peak_abs(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void scale_to_rms(std::vector<double> &x, double target) {
  const double rms = std::sqrt(mean_power(x));
  if (rms <= 0.0) return;
  for (double &v : x) v *= target / rms;
}

std::vector<double> convolve_truncated(std::span<const double> x, std::span<const double> h) {
  std::vector<double> out(x.size(), 0.0);
  std::size_t nonzero = 0;
  for (double v : h) nonzero += v != 0.0;
  if (nonzero <= 64) {
    for (std::size_t k = 0; k < h.size() && k < x.size(); ++k) {
      if (h[k] == 0.0) continue;
      for (std::size_t n = k; n < x.size(); ++n) out[n] += h[k] * x[n - k];
    }
    return out;
  }
  const std::size_t n = next_pow2(x.size() + h.size() - 1);
  const FftPlan &plan = FftPlan::cached(n);
  std::vector<Complex> a(n), b(n);
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = x[i];
  for (std::size_t i = 0; i < h.size(); ++i) b[i] = h[i];
  plan.transform(a, false);
  plan.transform(b, false);
  for (std::size_t i = 0; i < n; ++i) a[i] *= b[i];
  plan.transform(a, true);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a[i].real();
  return out;
}

// Sum of harmonics k = k_lo..k_hi of a running phase, each with its own
// amplitude. sin(k phi) follows the Chebyshev recurrence, so the cost per
// sample is one multiply-add per harmonic.
void add_harmonics(std::vector<double> &out, std::span<const double> phase, int k_lo,
                   std::span<const double> amps) {
  const int k_hi = k_lo + static_cast<int>(amps.size()) - 1;
  if (amps.empty()) return;
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double s1 = std::sin(phase[n]);
    const double c2 = 2.0 * std::cos(phase[n]);
    double prev = 0.0, cur = s1, acc = 0.0;
    for (int k = 1; k <= k_hi; ++k) {
      if (k >= k_lo) acc += amps[static_cast<std::size_t>(k - k_lo)] * cur;
      const double next = c2 * cur - prev;
      prev = cur;
      cur = next;
    }
    out[n] += acc;
  }
}

}  // namespace

// ---- augmentation ---------------------------------------------------------

void AugmentConfig::validate() const {
  if (!(apply_probability >= 0.0 && apply_probability <= 1.0))
    throw UsageError("augment apply_probability must lie in [0, 1]");
  if (!(snr_min_db <= snr_max_db)) throw UsageError("augment SNR range is inverted");
  if (!(rt60_min_s > 0.0 && rt60_min_s <= rt60_max_s))
    throw UsageError("augment RT60 range must be positive and ordered");
}

AudioBuffer add_noise(const AudioBuffer &clean, const AudioBuffer &noise, double snr_db) {
  if (noise.empty()) throw UsageError("add_noise: empty noise");
  const double p_clean = mean_power(clean.samples);
  if (!(p_clean > 0.0)) throw DataError("add_noise: clean signal has zero power");
  std::vector<double> tiled(clean.size());
  for (std::size_t i = 0; i < tiled.size(); ++i) tiled[i] = noise.samples[i % noise.size()];
  const double p_noise = mean_power(tiled);
  if (!(p_noise > 0.0)) throw DataError("add_noise: noise has zero power");
  const double snr = std::min(snr_db, kMaxSnrDb);
  const double scale = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr / 10.0)));
  AudioBuffer out = clean;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] += scale * tiled[i];
  return out;
}

AudioBuffer add_reverb(const AudioBuffer &dry, const AudioBuffer &rir) {
  if (rir.empty()) throw UsageError("add_reverb: empty impulse response");
  AudioBuffer out(convolve_truncated(dry.samples, rir.samples), dry.sample_rate);
  const double wet_peak = peak_abs(out.samples);
  if (wet_peak > 0.0) {
    const double gain = peak_abs(dry.samples) / wet_peak;
    if (gain != 1.0)
      for (double &v : out.samples) v *= gain;
  }
  return out;
}

AudioBuffer synth_rir(double rt60_s, int sample_rate, Rng &rng) {
  if (!(rt60_s > 0.0)) throw UsageError("synth_rir: RT60 must be positive");
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(1.5 * rt60_s * sample_rate)));
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i)
    h[i] = rng.normal() * rir_envelope(static_cast<double>(i) / sample_rate, rt60_s);
  const double peak = peak_abs(h);
  for (double &v : h) v /= peak;
  return {std::move(h), sample_rate};
}

const char *noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kWhite: return "white";
    case NoiseKind::kPink: return "pink";
    case NoiseKind::kBabble: return "babble";
  }
  return "?";
}

AudioBuffer make_noise(NoiseKind kind, std::size_t length, int sample_rate, Rng &rng) {
  if (length == 0) throw UsageError("make_noise: zero length");
  std::vector<double> x(length, 0.0);
  switch (kind) {
    case NoiseKind::kWhite:
      for (double &v : x) v = rng.normal();
      break;
    case NoiseKind::kPink: {
      const std::size_t n = next_pow2(length);
      std::vector<Complex> spec(n);
      for (auto &c : spec) c = rng.normal();
      const FftPlan &plan = FftPlan::cached(n);
      plan.transform(spec, false);
      spec[0] = 0.0;
      for (std::size_t k = 1; k < n; ++k) {
        const std::size_t f = std::min(k, n - k);
        spec[k] /= std::sqrt(static_cast<double>(f));
      }
      plan.transform(spec, true);
      for (std::size_t i = 0; i < length; ++i) x[i] = spec[i].real();
      break;
    }
    case NoiseKind::kBabble:
      for (int voice = 0; voice < 5; ++voice) {
        const double f0 = rng.uniform(90.0, 250.0);
        const double rate = rng.uniform(3.0, 6.0), offset = rng.uniform(0.0, 2 * M_PI);
        const int harmonics = static_cast<int>(4000.0 / f0);
        std::vector<double> amps(static_cast<std::size_t>(harmonics));
        for (int k = 1; k <= harmonics; ++k) amps[k - 1] = 1.0 / k;
        std::vector<double> phase(length), voiced(length, 0.0);
        const double start = rng.uniform(0.0, 2 * M_PI);
        for (std::size_t i = 0; i < length; ++i)
          phase[i] = start + 2 * M_PI * f0 * static_cast<double>(i) / sample_rate;
        add_harmonics(voiced, phase, 1, amps);
        for (std::size_t i = 0; i < length; ++i) {
          const double t = static_cast<double>(i) / sample_rate;
          x[i] += voiced[i] * (0.5 - 0.5 * std::cos(2 * M_PI * rate * t + offset));
        }
      }
      break;
  }
  scale_to_rms(x, 1.0);
  return {std::move(x), sample_rate};
}

const char *subset_name(Subset s) {
  switch (s) {
    case Subset::kTrain: return "train";
    case Subset::kDev: return "dev";
    case Subset::kEval: return "eval";
  }
  return "?";
}

Subset parse_subset(const std::string &token) {
  if (token == "train") return Subset::kTrain;
  if (token == "dev") return Subset::kDev;
  if (token == "eval") return Subset::kEval;
  throw DataError("unknown subset '" + token + "'");
}

uint64_t hash_id(const std::string &id) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

AudioBuffer augment(const AudioBuffer &audio, const AugmentConfig &cfg, uint64_t seed,
                    AugmentRecord *record) {
  cfg.validate();
  Rng rng(seed);
  AugmentRecord rec;
  rec.applied = rng.bernoulli(cfg.apply_probability);
  AudioBuffer out = audio;
  if (rec.applied) {
    const auto mode = rng.below(3);
    rec.noise = mode != 1;
    rec.reverb = mode != 0;
    if (rec.reverb) {
      rec.rt60_s = rng.uniform(cfg.rt60_min_s, cfg.rt60_max_s);
      out = add_reverb(out, synth_rir(rec.rt60_s, out.sample_rate, rng));
    }
    if (rec.noise) {
      rec.noise_kind = static_cast<NoiseKind>(rng.below(3));
      rec.snr_db = rng.uniform(cfg.snr_min_db, cfg.snr_max_db);
      const auto noise = make_noise(rec.noise_kind, out.size(), out.sample_rate, rng);
      out = add_noise(out, noise, rec.snr_db);
    }
  }
  if (record) *record = rec;
  return out;
}

std::vector<Utterance> augment_batch(const std::vector<Utterance> &utts, const AugmentConfig &cfg,
                                     std::vector<AugmentRecord> *records) {
  cfg.validate();
  std::vector<Utterance> out;
  out.reserve(utts.size());
  if (records) records->assign(utts.size(), {});
  for (std::size_t i = 0; i < utts.size(); ++i) {
    Utterance u = utts[i];
    u.audio = augment(utts[i].audio, cfg, derive_seed(cfg.seed, hash_id(utts[i].id)),
                      records ? &(*records)[i] : nullptr);
    out.push_back(std::move(u));
  }
  return out;
}

// ---- codec simulation -----------------------------------------------------

double mulaw_compand(double x, double mu) {
  if (!(std::abs(x) <= 1.0)) throw UsageError("mulaw_compand: |x| > 1 (clip first)");
  return std::copysign(std::log1p(mu * std::abs(x)) / std::log1p(mu), x);
}

double mulaw_expand(double y, double mu) {
  if (!(std::abs(y) <= 1.0)) throw UsageError("mulaw_expand: |y| > 1");
  return std::copysign(std::expm1(std::abs(y) * std::log1p(mu)) / mu, y);
}

double quantize_8bit(double y) {
  const double clipped = std::clamp(y, -1.0, 1.0);
  return -1.0 + std::round((clipped + 1.0) * 127.5) / 127.5;
}

std::string CodecProfile::name() const {
  switch (kind) {
    case CodecKind::kClean: return "clean";
    case CodecKind::kG711Mulaw: return "g711_mulaw";
    case CodecKind::kBandlimit: return "bandlimit";
  }
  return "?";
}

CodecProfile CodecProfile::parse(const std::string &name) {
  CodecProfile p;
  if (name == "clean") p.kind = CodecKind::kClean;
  else if (name == "g711_mulaw") p.kind = CodecKind::kG711Mulaw;
  else if (name == "bandlimit") p.kind = CodecKind::kBandlimit;
  else throw UsageError("unknown codec profile '" + name + "'");
  return p;
}

AudioBuffer apply_codec(const AudioBuffer &buffer, const CodecProfile &profile, uint64_t seed) {
  if (buffer.sample_rate != 16000)
    throw UsageError("apply_codec expects 16 kHz audio, got " +
                     std::to_string(buffer.sample_rate) + " Hz");
  AudioBuffer out;
  switch (profile.kind) {
    case CodecKind::kClean:
      return buffer;
    case CodecKind::kG711Mulaw: {
      AudioBuffer narrow = resample(buffer, 8000);
      for (double &v : narrow.samples) {
        const double y = quantize_8bit(mulaw_compand(std::clamp(v, -1.0, 1.0), profile.mu));
        v = mulaw_expand(y, profile.mu);
      }
      out = resample(narrow, 16000);
      break;
    }
    case CodecKind::kBandlimit: {
      FilterSpec spec;
      spec.order = kFrontendFilterOrder;
      spec.ripple_db = kFrontendRippleDb;
      spec.cutoff_hz = profile.cutoff_hz;
      spec.sample_rate = 16000;
      out = sosfilt(design_cheby1(spec), buffer);
      const double sigma = std::sqrt(mean_power(out.samples)) *
                           std::pow(10.0, -profile.noise_floor_db / 20.0);
      Rng rng(seed);
      for (double &v : out.samples) v += sigma * rng.normal();
      break;
    }
  }
  out.samples.resize(buffer.size(), 0.0);
  return out;
}

// ---- synthetic corpus -----------------------------------------------------

void CorpusSpec::validate() const {
  if (n_bonafide < 1 || n_spoof < 1) throw UsageError("corpus needs at least one of each label");
  if (!(train_weight >= 0 && dev_weight >= 0 && eval_weight >= 0) ||
      !(train_weight + dev_weight + eval_weight > 0))
    throw UsageError("corpus subset weights must be non-negative and not all zero");
  if (!(duration_min_s > 0 && duration_min_s <= duration_max_s))
    throw UsageError("corpus durations must be positive and ordered");
  if (!(silence_pad_min_s >= 0 && silence_pad_min_s <= silence_pad_max_s))
    throw UsageError("corpus silence padding must be non-negative and ordered");
  if (sample_rate != 16000) throw UsageError("corpus sample rate must be 16000 Hz");
  if (!(artifacts.strength_min >= 0 && artifacts.strength_min <= artifacts.strength_max))
    throw UsageError("artifact strength range must be non-negative and ordered");
}

std::vector<int> subset_counts(const CorpusSpec &spec, int n) {
  const double w[3] = {spec.train_weight, spec.dev_weight, spec.eval_weight};
  const double total = w[0] + w[1] + w[2];
  std::vector<int> counts(3);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = n * w[i] / total;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.push_back({exact - counts[i], i});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto &a, const auto &b) { return a.first > b.first; });
  for (int i = 0; assigned < n; ++i, ++assigned) ++counts[remainders[i % 3].second];
  return counts;
}

AudioBuffer synth_utterance(uint64_t seed, Label label, const CorpusSpec &spec) {
  const int sr = spec.sample_rate;
  Rng rng(derive_seed(seed, 0));

  const double duration = rng.uniform(spec.duration_min_s, spec.duration_max_s);
  const double lead = rng.uniform(spec.silence_pad_min_s, spec.silence_pad_max_s);
  const double trail = rng.uniform(spec.silence_pad_min_s, spec.silence_pad_max_s);
  const auto n_voiced = static_cast<std::size_t>(std::lround(duration * sr));
  const auto n_lead = static_cast<std::size_t>(std::lround(lead * sr));
  const auto n_trail = static_cast<std::size_t>(std::lround(trail * sr));

  const double f0 = rng.uniform(80.0, 300.0);
  const double vib_rate = rng.uniform(0.5, 2.0), vib_depth = rng.uniform(0.01, 0.05);
  const double vib_phase = rng.uniform(0.0, 2 * M_PI);
  const double syl_rate = rng.uniform(2.0, 5.0), syl_phase = rng.uniform(0.0, 2 * M_PI);
  const double formant_lo[3] = {300.0, 900.0, 2000.0}, formant_hi[3] = {900.0, 2500.0, 3500.0};
  double formant[3], bandwidth[3], gain[3];
  for (int i = 0; i < 3; ++i) {
    formant[i] = rng.uniform(formant_lo[i], formant_hi[i]);
    bandwidth[i] = rng.uniform(60.0, 200.0);
    gain[i] = i == 0 ? 1.0 : rng.uniform(0.1, 0.8);
  }
  const double tilt = rng.uniform(0.3, 0.9);
  const double level = rng.uniform(0.03, 0.12);

  // Glottal phase with slow vibrato.
  std::vector<double> phase(n_voiced), envelope(n_voiced);
  double phi = rng.uniform(0.0, 2 * M_PI);
  const auto fade = static_cast<double>(sr) * 0.02;
  for (std::size_t i = 0; i < n_voiced; ++i) {
    const double t = static_cast<double>(i) / sr;
    phase[i] = phi;
    phi += 2 * M_PI * f0 * (1.0 + vib_depth * std::sin(2 * M_PI * vib_rate * t + vib_phase)) / sr;
    if (phi > 2 * M_PI) phi -= 2 * M_PI;
    double env = 0.1 + 0.9 * (0.5 - 0.5 * std::cos(2 * M_PI * syl_rate * t + syl_phase));
    env *= std::min({1.0, static_cast<double>(i) / fade, static_cast<double>(n_voiced - i) / fade});
    envelope[i] = env;
  }

  const double f0_max = f0 * (1.0 + vib_depth);
  const int n_harm = static_cast<int>(7800.0 / f0_max);
  std::vector<double> amps(static_cast<std::size_t>(n_harm));
  for (int k = 1; k <= n_harm; ++k) {
    const double f = k * f0;
    double shape = 0.01;
    for (int i = 0; i < 3; ++i) {
      const double d = (f - formant[i]) / bandwidth[i];
      shape += gain[i] / (1.0 + d * d);
    }
    amps[k - 1] = shape * std::pow(k, -tilt);
  }
  std::vector<double> voiced(n_voiced, 0.0);
  add_harmonics(voiced, phase, 1, amps);
  for (std::size_t i = 0; i < n_voiced; ++i) voiced[i] *= envelope[i];
  scale_to_rms(voiced, level);

  if (label == Label::kSpoof) {
    Rng art(derive_seed(seed, 1));
    const ArtifactConfig &cfg = spec.artifacts;
    const double strength = art.uniform(cfg.strength_min, cfg.strength_max);

    // Inharmonic tone cluster in 2-3.8 kHz with a slow drift.
    std::vector<double> low(n_voiced, 0.0);
    const auto n_tones = 3 + art.below(3);
    for (uint64_t j = 0; j < n_tones; ++j) {
      const double f = art.uniform(2000.0, 3800.0);
      const double drift = art.uniform(-20.0, 20.0), p0 = art.uniform(0.0, 2 * M_PI);
      double p = p0;
      for (std::size_t i = 0; i < n_voiced; ++i) {
        low[i] += std::sin(p);
        p += 2 * M_PI * (f + drift * static_cast<double>(i) / n_voiced) / sr;
      }
    }
    for (std::size_t i = 0; i < n_voiced; ++i) low[i] *= envelope[i];
    scale_to_rms(low, strength * level * std::pow(10.0, cfg.low_band_db / 20.0));

    // Harmonics between 8 and 10 kHz rendered at 16 kHz fold back to 6-8 kHz,
    // like an imaging artifact of a vocoder running at a lower rate.
    std::vector<double> high(n_voiced, 0.0);
    const int k_lo = static_cast<int>(std::ceil(8000.0 / f0));
    const int k_hi = static_cast<int>(std::floor(10000.0 / f0_max));
    if (k_hi >= k_lo) {
      std::vector<double> images(static_cast<std::size_t>(k_hi - k_lo + 1));
      for (auto &a : images) a = art.uniform(0.5, 1.0);
      add_harmonics(high, phase, k_lo, images);
      for (std::size_t i = 0; i < n_voiced; ++i) high[i] *= envelope[i];
      scale_to_rms(high, strength * level * std::pow(10.0, cfg.high_band_db / 20.0));
    }
    if (strength > 0.0)
      for (std::size_t i = 0; i < n_voiced; ++i) voiced[i] += low[i] + high[i];
  }

  std::vector<double> samples(n_lead + n_voiced + n_trail, 0.0);
  std::copy(voiced.begin(), voiced.end(), samples.begin() + static_cast<std::ptrdiff_t>(n_lead));
  const double floor_sigma = level * 0.01;  // -40 dB
  for (double &v : samples) v += floor_sigma * rng.normal();
  const double peak = peak_abs(samples);
  if (peak > 0.99)
    for (double &v : samples) v *= 0.99 / peak;
  return {std::move(samples), sr};
}

std::vector<Utterance> generate_corpus(const CorpusSpec &spec) {
  spec.validate();
  std::vector<Utterance> out;
  const Subset subsets[3] = {Subset::kTrain, Subset::kDev, Subset::kEval};
  std::vector<std::vector<Utterance>> by_subset(3);
  for (Label label : {Label::kBonafide, Label::kSpoof}) {
    const int n = label == Label::kBonafide ? spec.n_bonafide : spec.n_spoof;
    const auto counts = subset_counts(spec, n);
    int index = 0;
    for (int s = 0; s < 3; ++s) {
      for (int j = 0; j < counts[s]; ++j, ++index) {
        const uint64_t seed =
            derive_seed(spec.seed, (static_cast<uint64_t>(label) << 32) | static_cast<uint64_t>(index));
        char id[96];
        std::snprintf(id, sizeof(id), "synth-%s-%s-%05d", subset_name(subsets[s]),
                      label_name(label), j);
        by_subset[s].push_back({id, synth_utterance(seed, label, spec), label, subsets[s]});
      }
    }
  }
  for (auto &group : by_subset)
    for (auto &u : group) out.push_back(std::move(u));
  return out;
}

std::string format_manifest(const std::vector<ManifestEntry> &entries) {
  std::string out = "utt_id\twav_path\tlabel\tsubset\n";
  for (const auto &e : entries)
    out += e.utt_id + "\t" + e.wav_path + "\t" + label_name(e.label) + "\t" + subset_name(e.subset) +
           "\n";
  return out;
}

std::vector<ManifestEntry> parse_manifest(const std::string &text, const std::string &name) {
  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.rfind("utt_id\t", 0) == 0) continue;
    const std::string where = name + ":" + std::to_string(lineno) + ": ";
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      f.push_back(line.substr(start, tab - start));
    f.push_back(line.substr(start));
    if (f.size() != 4) throw DataError(where + "expected 4 tab-separated fields");
    ManifestEntry e;
    e.utt_id = f[0];
    e.wav_path = f[1];
    try {
      e.label = parse_label(f[2]);
      e.subset = parse_subset(f[3]);
    } catch (const DataError &err) {
      throw DataError(where + err.what());
    }
    if (e.utt_id.empty() || e.wav_path.empty()) throw DataError(where + "empty field");
    if (!seen.insert(e.utt_id).second) throw DataError(where + "duplicate utterance id " + e.utt_id);
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw DataError(name + ": manifest has no entries");
  return entries;
}

void write_manifest(const std::vector<ManifestEntry> &entries, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path);
  out << format_manifest(entries);
  if (!out) throw DataError("write failed for " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path);
}

}  // namespace cmfront
