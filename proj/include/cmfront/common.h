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

#ifndef CMFRONT_COMMON_H_
#define CMFRONT_COMMON_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cmfront {

// Exit-code aligned error categories used by the command-line tool.
enum class ErrorKind : int {
  kUsage = 1,     // bad arguments or configuration
  kData = 2,      // malformed or inconsistent input data
  kInternal = 3,  // an invariant of the library itself was violated
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string &what) : Error(ErrorKind::kUsage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string &what) : Error(ErrorKind::kData, what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string &what)
      : Error(ErrorKind::kInternal, what) {}
};

// Utterance class. The numeric values are the classifier's class indices.
enum class Label : int { kSpoof = 0, kBonafide = 1 };

inline const char *label_name(Label l) {
  return l == Label::kBonafide ? "bonafide" : "spoof";
}

inline Label parse_label(const std::string &token) {
  if (token == "bonafide") return Label::kBonafide;
  if (token == "spoof") return Label::kSpoof;
  throw DataError("unknown label token '" + token + "'");
}

// splitmix64 finalizer; used to derive independent per-item seeds from a
// master seed so that results do not depend on processing order.
inline uint64_t mix_seed(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t index) {
  return mix_seed(mix_seed(master) ^ mix_seed(index + 0x632BE59BD9B4E019ULL));
}

// Seeded generator. The engine is std::mt19937_64, whose output sequence is
// fixed by the standard; the distributions are implemented here rather than
// taken from <random> so that draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>(uniform() * static_cast<double>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cmfront

#endif  // CMFRONT_COMMON_H_
