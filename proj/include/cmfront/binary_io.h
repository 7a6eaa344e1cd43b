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

#ifndef CMFRONT_BINARY_IO_H_
#define CMFRONT_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include "cmfront/common.h"

// Little-endian encoding helpers for the feature, model and extender files.
namespace cmfront::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline void put_u32(std::string &out, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

inline void put_f32(std::string &out, float v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

inline void put_f64(std::string &out, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

class Reader {
 public:
  Reader(std::string bytes, std::string name)
      : bytes_(std::move(bytes)), name_(std::move(name)) {}

  void expect_magic(std::string_view magic) {
    if (bytes_.compare(pos_, magic.size(), magic) != 0)
      throw DataError(name_ + ": bad magic, expected " + std::string(magic));
    pos_ += magic.size();
  }
  uint32_t u32() { return take<uint32_t>(); }
  float f32() { return take<float>(); }
  double f64() { return take<double>(); }
  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string &name() const { return name_; }

 private:
  template <typename T>
  T take() {
    if (pos_ + sizeof(T) > bytes_.size()) throw DataError(name_ + ": truncated file");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline std::string slurp(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void spit(const std::string &path, const std::string &bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace cmfront::binio

#endif  // CMFRONT_BINARY_IO_H_
