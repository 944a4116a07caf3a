// mppt/config.h

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

#ifndef MPPT_CONFIG_H_
#define MPPT_CONFIG_H_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mppt/common.h"

namespace mppt {

// Hierarchical key-value text:
//
//   # comment
//   seed = 1
//   [encoder]
//   n_layers = 2          # becomes "encoder.n_layers"
//
// Later assignments override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig FromFile(const std::filesystem::path &path);
  static KeyValueConfig FromString(const std::string &text, const std::string &origin = "<string>");

  bool Has(const std::string &key) const { return values_.count(key) != 0; }
  void Set(const std::string &key, const std::string &value) { values_[key] = value; }
  // "key=value"
  void SetAssignment(const std::string &assignment);

  std::string GetString(const std::string &key) const;
  std::string GetString(const std::string &key, const std::string &def) const;
  int64_t GetInt(const std::string &key) const;
  int64_t GetInt(const std::string &key, int64_t def) const;
  double GetDouble(const std::string &key) const;
  double GetDouble(const std::string &key, double def) const;
  bool GetBool(const std::string &key, bool def) const;

  const std::map<std::string, std::string> &values() const { return values_; }
  std::string ToString() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace mppt

#endif  // MPPT_CONFIG_H_
