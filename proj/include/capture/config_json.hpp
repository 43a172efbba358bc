// Copyright 2026 The Capture Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// JSON forms of the configuration records. Readers start from the defaults,
// override the keys present and reject unknown keys with ConfigError.

#pragma once

#include <set>
#include <string>

#include "json.hpp"
#include "capture/corpus.hpp"
#include "capture/model.hpp"
#include "capture/pretrain.hpp"
#include "capture/proposer.hpp"

namespace capture {

using Json = nlohmann::ordered_json;

class FieldReader {
 public:
  FieldReader(const Json& j, std::string context);

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }
  const Json* child(const char* key);
  // Throws ConfigError on keys that were never read.
  void finish() const;

 private:
  const Json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

Json to_json(const CorpusConfig& c);
Json to_json(const ProposerConfig& c);
Json to_json(const ModelConfig& c);
Json to_json(const PretrainConfig& c);

void read_json(const Json& j, CorpusConfig& c);
void read_json(const Json& j, ProposerConfig& c);
void read_json(const Json& j, ModelConfig& c);
void read_json(const Json& j, PretrainConfig& c);

Json read_json_file(const std::string& path);  // ConfigError on parse failure

}  // namespace capture
