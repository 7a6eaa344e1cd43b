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

#include "cmfront/config.h"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cmfront/common.h"

namespace cmfront {

std::string trim(const std::string &s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Config Config::parse(const std::string &text, const std::string &name) {
  Config cfg;
  cfg.name_ = name;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw UsageError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw UsageError(where + "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.has(full)) throw UsageError(where + "duplicate key " + full);
    cfg.values_[full] = trim(line.substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

std::string Config::get(const std::string &key, const std::string &fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string &key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string &v = values_.at(key);
  char *end = nullptr;
  errno = 0;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE)
    throw UsageError(name_ + ": " + key + " expects a number, got '" + v + "'");
  return x;
}

int Config::get_int(const std::string &key, int fallback) const {
  if (!has(key)) return fallback;
  const std::string &v = values_.at(key);
  char *end = nullptr;
  errno = 0;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE || x < INT32_MIN || x > INT32_MAX)
    throw UsageError(name_ + ": " + key + " expects an integer, got '" + v + "'");
  return static_cast<int>(x);
}

uint64_t Config::get_u64(const std::string &key, uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string &v = values_.at(key);
  char *end = nullptr;
  errno = 0;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v[0] == '-' || *end != '\0' || errno == ERANGE)
    throw UsageError(name_ + ": " + key + " expects a non-negative integer, got '" + v + "'");
  return x;
}

bool Config::get_bool(const std::string &key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string &v = values_.at(key);
  if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
  if (v == "off" || v == "false" || v == "no" || v == "0") return false;
  throw UsageError(name_ + ": " + key + " expects on/off, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string &key,
                                          const std::vector<std::string> &fallback) const {
  if (!has(key)) return fallback;
  return split_list(values_.at(key));
}

void Config::check_known(const std::set<std::string> &known) const {
  for (const auto &[key, value] : values_)
    if (!known.count(key)) throw UsageError(name_ + ": unknown key '" + key + "'");
}

}  // namespace cmfront
