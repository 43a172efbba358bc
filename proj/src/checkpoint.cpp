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

#include <fstream>
#include <vector>

#include "capture/binary_io.hpp"
#include "capture/config_json.hpp"
#include "capture/model.hpp"

namespace capture {
namespace {

constexpr char kMagic[8] = {'P', '1', 'M', 'C', 'K', 'P', 'T', '1'};
constexpr int kFormatVersion = 1;

}  // namespace

void save_checkpoint(const CaptureModel& model, const std::string& path) {
  Json header;
  header["format_version"] = kFormatVersion;
  header["config"] = to_json(model.config());
  Json tensors = Json::array();
  std::uint64_t offset = 0;
  for (const auto& e : model.params().entries()) {
    tensors.push_back({{"name", e.name},
                       {"shape", {e.value.rows(), e.value.cols()}},
                       {"offset", offset}});
    offset += static_cast<std::uint64_t>(e.value.size()) * sizeof(float);
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : model.params().entries())
    for (Eigen::Index i = 0; i < e.value.size(); ++i) write_f32(os, e.value.data()[i]);
  if (!os) throw FormatError("failed writing " + path);
}

CaptureModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kMagic)) throw FormatError(path + ": not a checkpoint");
  const std::uint64_t length = read_u64(is);
  if (length > (1u << 26)) throw FormatError(path + ": implausible header length");
  std::string text(length, '\0');
  is.read(text.data(), static_cast<std::streamsize>(length));
  if (!is) throw FormatError(path + ": truncated header");

  Json header;
  try {
    header = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (header.value("format_version", 0) != kFormatVersion)
    throw FormatError(path + ": unsupported checkpoint version");
  ModelConfig config;
  try {
    read_json(header.at("config"), config);
  } catch (const ConfigError& e) {
    throw FormatError(path + ": " + e.what());
  }
  CaptureModel model(config);

  const auto& tensors = header.at("tensors");
  auto& entries = model.params().entries();
  if (tensors.size() != entries.size()) throw FormatError(path + ": tensor count mismatch");
  std::uint64_t offset = 0;
  for (size_t k = 0; k < entries.size(); ++k) {
    const auto& t = tensors[k];
    auto& e = entries[k];
    if (t.at("name").get<std::string>() != e.name ||
        t.at("shape")[0].get<Eigen::Index>() != e.value.rows() ||
        t.at("shape")[1].get<Eigen::Index>() != e.value.cols())
      throw FormatError(path + ": tensor " + e.name + " does not match the configuration");
    // Offsets are bytes from the end of the header.
    if (t.at("offset").get<std::uint64_t>() != offset)
      throw FormatError(path + ": tensor " + e.name + " has a bad offset");
    offset += static_cast<std::uint64_t>(e.value.size()) * sizeof(float);
    for (Eigen::Index i = 0; i < e.value.size(); ++i) e.value.data()[i] = read_f32(is);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing data");
  return model;
}

}  // namespace capture
