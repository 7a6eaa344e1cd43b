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

#include "cmfront/common.h"
#include "cmfront/filters.h"
#include "cmfront/signal.h"

namespace cmfront {

namespace {

constexpr double kAntiAliasFraction = 0.8;

SosFilter anti_alias_filter(int filter_rate, double nyquist_of_lower_rate) {
  FilterSpec spec;
  spec.order = kFrontendFilterOrder;
  spec.ripple_db = kFrontendRippleDb;
  spec.cutoff_hz = kAntiAliasFraction * nyquist_of_lower_rate;
  spec.sample_rate = filter_rate;
  return design_cheby1(spec);
}

}  // namespace

AudioBuffer resample(const AudioBuffer &buffer, int target_rate) {
  if (target_rate <= 0) throw UsageError("target sample rate must be positive");
  const int source_rate = buffer.sample_rate;
  if (target_rate == source_rate) return buffer;

  if (source_rate == 2 * target_rate) {
    const auto filtered =
        sosfilt(anti_alias_filter(source_rate, target_rate / 2.0), buffer);
    AudioBuffer out;
    out.sample_rate = target_rate;
    out.samples.reserve((buffer.size() + 1) / 2);
    for (std::size_t i = 0; i < filtered.size(); i += 2)
      out.samples.push_back(filtered.samples[i]);
    return out;
  }
  if (target_rate == 2 * source_rate) {
    AudioBuffer stuffed;
    stuffed.sample_rate = target_rate;
    stuffed.samples.assign(2 * buffer.size(), 0.0);
    for (std::size_t i = 0; i < buffer.size(); ++i)
      stuffed.samples[2 * i] = 2.0 * buffer.samples[i];
    return sosfilt(anti_alias_filter(target_rate, source_rate / 2.0), stuffed);
  }
  throw UsageError("unsupported resampling ratio " + std::to_string(source_rate) +
                   " -> " + std::to_string(target_rate) + " Hz (only 2:1 and 1:2)");
}

}  // namespace cmfront
