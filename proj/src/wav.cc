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
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cmfront/common.h"
#include "cmfront/signal.h"

namespace cmfront {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint16_t read_u16(const unsigned char *p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t read_u32(const unsigned char *p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

void put_u16(std::string &out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string &out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

void AudioBuffer::validate() const {
  if (sample_rate <= 0)
    throw DataError("audio buffer has non-positive sample rate " +
                    std::to_string(sample_rate));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i]))
      throw DataError("audio buffer has a non-finite sample at index " +
                      std::to_string(i));
  }
}

AudioBuffer read_wav(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open wav file " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError(path + ": not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char *data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char *chunk = bytes.data() + pos;
    const uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0)
      throw DataError(path + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw DataError(path + ": malformed fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible && size >= 40)
        format = read_u16(chunk + 8 + 24);  // first two bytes of the subformat GUID
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      // Tolerate writers that leave a bogus size on a streamed data chunk.
      data_size = std::min<std::size_t>(size, bytes.size() - body);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw DataError(path + ": missing fmt chunk");
  if (data == nullptr) throw DataError(path + ": missing data chunk");
  if (channels == 0 || rate == 0) throw DataError(path + ": malformed fmt chunk");

  std::size_t bytes_per_sample = 0;
  if (format == kFormatPcm && bits == 16) {
    bytes_per_sample = 2;
  } else if (format == kFormatFloat && bits == 32) {
    bytes_per_sample = 4;
  } else {
    throw DataError(path + ": unsupported codec (format tag " +
                    std::to_string(format) + ", " + std::to_string(bits) +
                    " bits)");
  }
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t num_frames = data_size / frame_bytes;
  if (num_frames == 0) throw DataError(path + ": zero-length data chunk");

  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  out.samples.resize(num_frames);
  for (std::size_t i = 0; i < num_frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char *p = data + i * frame_bytes + c * bytes_per_sample;
      if (bytes_per_sample == 2) {
        acc += static_cast<int16_t>(read_u16(p)) / 32768.0;
      } else {
        const uint32_t bitsv = read_u32(p);
        float f;
        std::memcpy(&f, &bitsv, sizeof(f));
        acc += static_cast<double>(f);
      }
    }
    out.samples[i] = channels == 1 ? acc : acc / channels;
  }
  out.validate();
  return out;
}

void write_wav(const AudioBuffer &buffer, const std::string &path) {
  buffer.validate();
  const uint32_t data_bytes = static_cast<uint32_t>(buffer.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out.append("RIFF");
  put_u32(out, 36 + data_bytes);
  out.append("WAVEfmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<uint32_t>(buffer.sample_rate));
  put_u32(out, static_cast<uint32_t>(buffer.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.append("data");
  put_u32(out, data_bytes);
  for (double s : buffer.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const long q = std::lround(clipped * 32768.0);
    put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(std::clamp(q, -32768L, 32767L))));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed for " + path);
}

}  // namespace cmfront
