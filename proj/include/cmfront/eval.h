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

#ifndef CMFRONT_EVAL_H_
#define CMFRONT_EVAL_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmfront/common.h"

namespace cmfront {

struct ScoreRecord {
  std::string utt_id;
  Label label = Label::kSpoof;
  double score = 0.0;  // higher means more bonafide
};

struct ScoreSet {
  std::vector<ScoreRecord> records;

  std::size_t count(Label label) const;
  std::vector<double> scores(Label label) const;
};

struct EerResult {
  double eer = 0.0;        // fraction in [0, 1]
  double threshold = 0.0;  // operating point in score units
  std::size_t n_bonafide = 0;
  std::size_t n_spoof = 0;
};

// FAR(t) = #spoof >= t / Ns and FRR(t) = #bonafide < t / Nb, evaluated on the
// thresholds {min - 1, distinct scores, midpoints between them, max + 1}.
// Between neighbouring thresholds both rates are interpolated linearly and the
// EER is where the interpolants cross. When they coincide over a run of
// thresholds the threshold reported is the midpoint of that run.
//
// The result depends only on the rank order of the scores, so it is unchanged
// by any strictly increasing transform.
EerResult compute_eer(std::span<const double> bonafide, std::span<const double> spoof);
EerResult compute_eer(const ScoreSet &scores);

struct DetPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

// Operating points on the same threshold grid compute_eer uses.
std::vector<DetPoint> det_points(std::span<const double> bonafide, std::span<const double> spoof);
std::string format_det_csv(const std::vector<DetPoint> &points);

// TSV lines "utt_id<TAB>label<TAB>score"; scores written with 9 significant
// digits. Blank lines and lines starting with '#' are skipped on read.
ScoreSet parse_scores(const std::string &text, const std::string &name = "scores");
std::string format_scores(const ScoreSet &scores);
ScoreSet read_scores(const std::string &path);
void write_scores(const ScoreSet &scores, const std::string &path);

double seed_average(std::span<const double> eers);
double seed_average(std::span<const EerResult> results);

// (baseline - system) / baseline.
double relative_reduction(double baseline_eer, double system_eer);

// One line of the results CSV. seed is empty for seed-averaged rows, fraction
// is absent for the baseline front-end.
struct ResultRow {
  std::string system;
  std::string frontend;
  std::optional<double> fraction;
  std::optional<uint64_t> seed;
  std::optional<double> eer;  // absent when the cell failed
};

// Header "system,frontend,fraction,seed,eer"; averaged rows carry seed
// "average", failed cells carry eer "failed".
std::string format_results_csv(const std::vector<ResultRow> &rows);

// Appends one averaged row per (system, frontend, fraction) group after the
// per-seed rows. Groups with a failed cell average over the successful ones.
std::vector<ResultRow> with_seed_averages(const std::vector<ResultRow> &rows);

// Aligned text, one block per system: rows are front-ends, columns the seeds
// followed by the average, values in percent.
std::string format_results_table(const std::vector<ResultRow> &rows);

}  // namespace cmfront

#endif  // CMFRONT_EVAL_H_
