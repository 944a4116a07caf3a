// src/config.cc

// Copyright 2026  The mppt Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "mppt/config.h"

#include <fstream>
#include <sstream>

namespace mppt {

namespace {

std::string Trim(const std::string &s) {
  const char *ws = " \t\r\n";
  size_t b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::FromFile(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return FromString(ss.str(), path.string());
}

KeyValueConfig KeyValueConfig::FromString(const std::string &text, const std::string &origin) {
  KeyValueConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad section");
      section = Trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = Trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[section.empty() ? key : section + "." + key] = Trim(line.substr(eq + 1));
  }
  return cfg;
}

void KeyValueConfig::SetAssignment(const std::string &assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  values_[Trim(assignment.substr(0, eq))] = Trim(assignment.substr(eq + 1));
}

std::string KeyValueConfig::GetString(const std::string &key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key " + key);
  return it->second;
}

std::string KeyValueConfig::GetString(const std::string &key, const std::string &def) const {
  auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

int64_t KeyValueConfig::GetInt(const std::string &key) const {
  const std::string v = GetString(key);
  try {
    size_t used = 0;
    int64_t out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception &) {
    throw ConfigError("config key " + key + " is not an integer: " + v);
  }
}

int64_t KeyValueConfig::GetInt(const std::string &key, int64_t def) const {
  return Has(key) ? GetInt(key) : def;
}

double KeyValueConfig::GetDouble(const std::string &key) const {
  const std::string v = GetString(key);
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception &) {
    throw ConfigError("config key " + key + " is not a number: " + v);
  }
}

double KeyValueConfig::GetDouble(const std::string &key, double def) const {
  return Has(key) ? GetDouble(key) : def;
}

bool KeyValueConfig::GetBool(const std::string &key, bool def) const {
  if (!Has(key)) return def;
  const std::string v = GetString(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + " is not a boolean: " + v);
}

std::string KeyValueConfig::ToString() const {
  std::ostringstream os;
  for (const auto &[k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace mppt
