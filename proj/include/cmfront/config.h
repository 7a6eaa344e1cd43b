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

#ifndef CMFRONT_CONFIG_H_
#define CMFRONT_CONFIG_H_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace cmfront {

// Flat key=value text with [section] headers. A key inside a section is
// addressed as "section.key". '#' and ';' start comments.
class Config {
 public:
  static Config parse(const std::string &text, const std::string &name = "config");
  static Config load(const std::string &path);

  void set(const std::string &key, const std::string &value) { values_[key] = value; }
  bool has(const std::string &key) const { return values_.count(key) != 0; }

  std::string get(const std::string &key, const std::string &fallback) const;
  double get_double(const std::string &key, double fallback) const;
  int get_int(const std::string &key, int fallback) const;
  uint64_t get_u64(const std::string &key, uint64_t fallback) const;
  bool get_bool(const std::string &key, bool fallback) const;
  // Comma-separated list with surrounding whitespace removed.
  std::vector<std::string> get_list(const std::string &key,
                                    const std::vector<std::string> &fallback) const;

  // Throws UsageError naming the first key not in `known`.
  void check_known(const std::set<std::string> &known) const;

  const std::map<std::string, std::string> &values() const { return values_; }

 private:
  std::string name_ = "config";
  std::map<std::string, std::string> values_;
};

std::string trim(const std::string &s);
std::vector<std::string> split_list(const std::string &s, char sep = ',');

}  // namespace cmfront

#endif  // CMFRONT_CONFIG_H_
