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

#include "cmfront/eval.h"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_set>

namespace cmfront {

std::size_t ScoreSet::count(Label label) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [&](const ScoreRecord &r) { return r.label == label; }));
}

std::vector<double> ScoreSet::scores(Label label) const {
  std::vector<double> out;
  for (const auto &r : records)
    if (r.label == label) out.push_back(r.score);
  return out;
}

namespace {

struct GridPoint {
  double threshold;
  long long false_accepts;  // spoof >= threshold
  long long false_rejects;  // bonafide < threshold
};

std::vector<GridPoint> threshold_grid(std::span<const double> bonafide,
                                      std::span<const double> spoof) {
  if (bonafide.empty() || spoof.empty())
    throw DataError("EER needs at least one bonafide and one spoof score");
  std::vector<double> b(bonafide.begin(), bonafide.end());
  std::vector<double> s(spoof.begin(), spoof.end());
  for (double x : b)
    if (!std::isfinite(x)) throw DataError("non-finite bonafide score");
  for (double x : s)
    if (!std::isfinite(x)) throw DataError("non-finite spoof score");
  std::sort(b.begin(), b.end());
  std::sort(s.begin(), s.end());

  std::vector<double> distinct(b);
  distinct.insert(distinct.end(), s.begin(), s.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> thresholds;
  thresholds.reserve(2 * distinct.size() + 1);
  thresholds.push_back(distinct.front() - 1.0);
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    thresholds.push_back(distinct[i]);
    if (i + 1 < distinct.size()) thresholds.push_back(0.5 * (distinct[i] + distinct[i + 1]));
  }
  thresholds.push_back(distinct.back() + 1.0);

  std::vector<GridPoint> grid;
  grid.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto fa = s.end() - std::lower_bound(s.begin(), s.end(), t);
    const auto fr = std::lower_bound(b.begin(), b.end(), t) - b.begin();
    grid.push_back({t, static_cast<long long>(fa), static_cast<long long>(fr)});
  }
  return grid;
}

}  // namespace

EerResult compute_eer(std::span<const double> bonafide, std::span<const double> spoof) {
  const auto grid = threshold_grid(bonafide, spoof);
  const auto nb = static_cast<long long>(bonafide.size());
  const auto ns = static_cast<long long>(spoof.size());
  // FAR - FRR scaled by ns * nb, so the comparisons below are exact.
  auto gap = [&](const GridPoint &p) { return p.false_accepts * nb - p.false_rejects * ns; };

  EerResult r;
  r.n_bonafide = bonafide.size();
  r.n_spoof = spoof.size();
  std::size_t j = 1;
  while (j < grid.size() && gap(grid[j]) > 0) ++j;
  if (j == grid.size()) throw InvariantError("EER crossing not found");

  if (gap(grid[j]) == 0) {
    std::size_t k = j;
    while (k + 1 < grid.size() && gap(grid[k + 1]) == 0) ++k;
    r.eer = static_cast<double>(grid[j].false_accepts) / static_cast<double>(ns);
    r.threshold = 0.5 * (grid[j].threshold + grid[k].threshold);
    return r;
  }
  const GridPoint &lo = grid[j - 1], &hi = grid[j];
  const double d_lo = static_cast<double>(gap(lo)), d_hi = static_cast<double>(gap(hi));
  const double t = d_lo / (d_lo - d_hi);
  const double far_lo = static_cast<double>(lo.false_accepts) / static_cast<double>(ns);
  const double far_hi = static_cast<double>(hi.false_accepts) / static_cast<double>(ns);
  const double frr_lo = static_cast<double>(lo.false_rejects) / static_cast<double>(nb);
  const double frr_hi = static_cast<double>(hi.false_rejects) / static_cast<double>(nb);
  // Both interpolants agree at the crossing; averaging keeps the value
  // symmetric under swapping the classes.
  r.eer = 0.5 * ((far_lo + t * (far_hi - far_lo)) + (frr_lo + t * (frr_hi - frr_lo)));
  r.threshold = lo.threshold + t * (hi.threshold - lo.threshold);
  return r;
}

EerResult compute_eer(const ScoreSet &scores) {
  const auto b = scores.scores(Label::kBonafide);
  const auto s = scores.scores(Label::kSpoof);
  return compute_eer(b, s);
}

std::vector<DetPoint> det_points(std::span<const double> bonafide, std::span<const double> spoof) {
  std::vector<DetPoint> out;
  for (const auto &p : threshold_grid(bonafide, spoof))
    out.push_back({p.threshold, static_cast<double>(p.false_accepts) / spoof.size(),
                   static_cast<double>(p.false_rejects) / bonafide.size()});
  return out;
}

std::string format_det_csv(const std::vector<DetPoint> &points) {
  std::string out = "threshold,far,frr\n";
  char line[128];
  for (const auto &p : points) {
    std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g\n", p.threshold, p.far, p.frr);
    out += line;
  }
  return out;
}

ScoreSet parse_scores(const std::string &text, const std::string &name) {
  ScoreSet set;
  std::unordered_set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = name + ":" + std::to_string(lineno) + ": ";
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      fields.push_back(line.substr(start, tab - start));
    fields.push_back(line.substr(start));
    if (fields.size() != 3) throw DataError(where + "expected 3 tab-separated fields");

    ScoreRecord r;
    r.utt_id = fields[0];
    if (r.utt_id.empty()) throw DataError(where + "empty utterance id");
    try {
      r.label = parse_label(fields[1]);
    } catch (const DataError &e) {
      throw DataError(where + e.what());
    }
    char *end = nullptr;
    errno = 0;
    r.score = std::strtod(fields[2].c_str(), &end);
    if (fields[2].empty() || *end != '\0' || errno == ERANGE || !std::isfinite(r.score))
      throw DataError(where + "bad score '" + fields[2] + "'");
    if (!seen.insert(r.utt_id).second) throw DataError(where + "duplicate utterance id " + r.utt_id);
    set.records.push_back(std::move(r));
  }
  if (set.records.empty()) throw DataError(name + ": no score records");
  return set;
}

std::string format_scores(const ScoreSet &scores) {
  std::string out;
  char buf[64];
  for (const auto &r : scores.records) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.score);
    out += r.utt_id + "\t" + label_name(r.label) + "\t" + buf + "\n";
  }
  return out;
}

ScoreSet read_scores(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open score file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scores(buf.str(), path);
}

void write_scores(const ScoreSet &scores, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write score file " + path);
  out << format_scores(scores);
  if (!out) throw DataError("write failed for " + path);
}

double seed_average(std::span<const double> eers) {
  if (eers.empty()) throw DataError("seed_average of no results");
  double sum = 0.0;
  for (double e : eers) sum += e;
  return sum / static_cast<double>(eers.size());
}

double seed_average(std::span<const EerResult> results) {
  std::vector<double> eers;
  for (const auto &r : results) eers.push_back(r.eer);
  return seed_average(eers);
}

double relative_reduction(double baseline_eer, double system_eer) {
  if (!(baseline_eer > 0.0)) throw DataError("relative_reduction needs a positive baseline EER");
  return (baseline_eer - system_eer) / baseline_eer;
}

namespace {

std::string fraction_text(const std::optional<double> &f) {
  if (!f) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", *f);
  return buf;
}

using GroupKey = std::tuple<std::string, std::string, std::string>;

GroupKey group_of(const ResultRow &r) { return {r.system, r.frontend, fraction_text(r.fraction)}; }

}  // namespace

std::string format_results_csv(const std::vector<ResultRow> &rows) {
  std::string out = "system,frontend,fraction,seed,eer\n";
  char buf[64];
  for (const auto &r : rows) {
    out += r.system + "," + r.frontend + "," + fraction_text(r.fraction) + ",";
    out += r.seed ? std::to_string(*r.seed) : std::string("average");
    out += ",";
    if (r.eer) {
      std::snprintf(buf, sizeof(buf), "%.9g", *r.eer);
      out += buf;
    } else {
      out += "failed";
    }
    out += "\n";
  }
  return out;
}

std::vector<ResultRow> with_seed_averages(const std::vector<ResultRow> &rows) {
  std::vector<ResultRow> out;
  std::vector<GroupKey> order;
  std::map<GroupKey, std::vector<double>> eers;
  std::map<GroupKey, ResultRow> proto;
  for (const auto &r : rows) {
    if (!r.seed) continue;
    out.push_back(r);
    const auto key = group_of(r);
    if (!proto.count(key)) {
      order.push_back(key);
      proto[key] = r;
      eers[key];
    }
    if (r.eer) eers[key].push_back(*r.eer);
  }
  for (const auto &key : order) {
    ResultRow avg = proto[key];
    avg.seed.reset();
    avg.eer.reset();
    if (!eers[key].empty()) avg.eer = seed_average(eers[key]);
    out.push_back(avg);
  }
  return out;
}

std::string format_results_table(const std::vector<ResultRow> &rows) {
  std::vector<std::string> systems;
  std::set<uint64_t> seeds;
  for (const auto &r : rows) {
    if (std::find(systems.begin(), systems.end(), r.system) == systems.end())
      systems.push_back(r.system);
    if (r.seed) seeds.insert(*r.seed);
  }
  auto cell = [](const std::optional<double> &eer) {
    if (!eer) return std::string("failed");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * *eer);
    return std::string(buf);
  };

  std::string out;
  char buf[64];
  for (const auto &system : systems) {
    std::vector<std::pair<std::string, std::string>> labels;  // frontend, fraction
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::string>> grid;
    for (const auto &r : rows) {
      if (r.system != system) continue;
      const auto key = std::make_pair(r.frontend, fraction_text(r.fraction));
      if (!grid.count(key)) labels.push_back(key);
      grid[key][r.seed ? "seed" + std::to_string(*r.seed) : "average"] = cell(r.eer);
    }
    std::vector<std::string> columns;
    for (uint64_t s : seeds) columns.push_back("seed" + std::to_string(s));
    columns.push_back("average");

    out += "EER% [" + system + "]\n";
    std::snprintf(buf, sizeof(buf), "%-14s %-8s", "frontend", "fraction");
    out += buf;
    for (const auto &c : columns) {
      std::snprintf(buf, sizeof(buf), " %9s", c.c_str());
      out += buf;
    }
    out += "\n";
    for (const auto &key : labels) {
      std::snprintf(buf, sizeof(buf), "%-14s %-8s", key.first.c_str(),
                    key.second.empty() ? "-" : key.second.c_str());
      out += buf;
      for (const auto &c : columns) {
        const auto it = grid[key].find(c);
        std::snprintf(buf, sizeof(buf), " %9s", it == grid[key].end() ? "-" : it->second.c_str());
        out += buf;
      }
      out += "\n";
    }
    out += "\n";
  }
  return out;
}

}  // namespace cmfront
