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

#include <algorithm>
#include <cmath>

#include "cmfront/features.h"

namespace cmfront {

VadResult vad_trim(const AudioBuffer &buffer, const VadConfig &config) {
  if (buffer.empty()) throw DataError("vad_trim: empty buffer");
  if (config.hop == 0 || config.frame_length == 0)
    throw UsageError("vad_trim: frame and hop must be positive");
  const std::size_t len = buffer.size();

  std::vector<double> cumulative(len + 1, 0.0);
  for (std::size_t i = 0; i < len; ++i)
    cumulative[i + 1] = cumulative[i] + buffer.samples[i] * buffer.samples[i];

  const std::size_t frames = 1 + (len + config.hop - 1) / config.hop;
  const long half = static_cast<long>(config.frame_length / 2);
  std::vector<double> power(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const long centre = static_cast<long>(t * config.hop);
    const long lo = std::clamp(centre - half, 0L, static_cast<long>(len));
    const long hi = std::clamp(centre - half + static_cast<long>(config.frame_length), 0L,
                               static_cast<long>(len));
    power[t] = (cumulative[hi] - cumulative[lo]) / static_cast<double>(config.frame_length);
  }
  const double peak = *std::max_element(power.begin(), power.end());
  if (!(peak > 0.0)) throw DataError("all-silence utterance");

  const double threshold = peak * std::pow(10.0, -config.top_db / 10.0);
  std::size_t first = frames, last = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    if (power[t] >= threshold) {
      if (first == frames) first = t;
      last = t;
    }
  }

  VadResult result;
  result.start = std::min(first * config.hop, len);
  result.end = std::min(last * config.hop, len);
  if (result.end <= result.start) {
    // A single loud frame: keep the hop it is centred on.
    if (result.start >= len) result.start = len - std::min(config.hop, len);
    result.end = std::min(result.start + config.hop, len);
  }
  result.trimmed.sample_rate = buffer.sample_rate;
  result.trimmed.samples.assign(buffer.samples.begin() + static_cast<long>(result.start),
                                buffer.samples.begin() + static_cast<long>(result.end));
  return result;
}

}  // namespace cmfront
