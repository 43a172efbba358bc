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

#include <filesystem>
#include <fstream>

#include "capture/binary_io.hpp"
#include "capture/config_json.hpp"
#include "capture/corpus.hpp"

namespace capture {
namespace {

constexpr char kImageMagic[8] = {'P', '1', 'M', 'T', 'O', 'Y', '1', '\0'};

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw FormatError("cannot write " + path);
  return os;
}

Json instance_json(const Instance& inst) {
  return {{"category", inst.category_id},
          {"box", {inst.box.x1, inst.box.y1, inst.box.x2, inst.box.y2}}};
}

}  // namespace

void write_image_store(const std::string& path, std::span<const Image> images) {
  auto os = open_out(path, true);
  const int h = images.empty() ? 0 : images.front().height;
  const int w = images.empty() ? 0 : images.front().width;
  os.write(kImageMagic, sizeof(kImageMagic));
  write_u32(os, static_cast<std::uint32_t>(images.size()));
  write_u32(os, static_cast<std::uint32_t>(h));
  write_u32(os, static_cast<std::uint32_t>(w));
  for (const auto& img : images) {
    if (img.height != h || img.width != w) throw FormatError("image store needs equal image sizes");
    os.write(reinterpret_cast<const char*>(img.pixels.data()),
             static_cast<std::streamsize>(img.pixels.size() * sizeof(float)));
  }
  if (!os) throw FormatError("failed writing " + path);
}

std::vector<Image> read_image_store(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open image store " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kImageMagic))
    throw FormatError(path + ": bad image store magic");
  const std::uint32_t count = read_u32(is);
  const std::uint32_t h = read_u32(is);
  const std::uint32_t w = read_u32(is);
  std::vector<Image> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Image img(static_cast<int>(h), static_cast<int>(w));
    is.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size() * sizeof(float)));
    if (!is) throw FormatError(path + ": truncated image data");
    out.push_back(std::move(img));
  }
  return out;
}

void write_dataset(const DatasetBundle& bundle, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir);

  std::vector<Image> images;
  auto manifest = open_out((base / "manifest.jsonl").string());
  const std::size_t image_bytes =
      bundle.samples.empty() ? 0 : bundle.samples.front().image().pixels.size() * sizeof(float);
  for (size_t i = 0; i < bundle.samples.size(); ++i) {
    const Sample& s = bundle.samples[i];
    Json rec;
    rec["id"] = s.id();
    rec["split"] = split_name(s.split());
    rec["caption"] = s.caption();
    rec["category"] = s.category_id() ? Json(*s.category_id()) : Json(nullptr);
    if (s.instances()) {
      Json arr = Json::array();
      for (const auto& inst : *s.instances()) arr.push_back(instance_json(inst));
      rec["instances"] = std::move(arr);
    } else {
      rec["instances"] = nullptr;
    }
    rec["image_offset"] = kImageStoreHeaderBytes + i * image_bytes;
    manifest << rec.dump() << '\n';
    images.push_back(s.image());
  }
  write_image_store((base / "images.bin").string(), images);

  Json vocab;
  for (int id = 0; id < bundle.catalog.vocab.size(); ++id)
    vocab[std::to_string(id)] = bundle.catalog.vocab.token_string(id);
  open_out((base / "vocab.json").string()) << vocab.dump(2) << '\n';

  Json catalog;
  catalog["config"] = to_json(bundle.config);
  catalog["distractor_categories"] = bundle.distractor_categories;
  Json cats = Json::array();
  for (const auto& c : bundle.catalog.categories)
    cats.push_back({{"category", c.category_id},
                    {"brand", c.brand_id},
                    {"confusable_group", c.confusable_group},
                    {"shape", c.glyph.shape},
                    {"pattern", c.glyph.pattern},
                    {"name_tokens", c.name_tokens}});
  catalog["categories"] = std::move(cats);
  open_out((base / "catalog.json").string()) << catalog.dump(2) << '\n';
}

DatasetBundle read_dataset(const std::string& dir) {
  const auto base = std::filesystem::path(dir);
  const std::string catalog_path = (base / "catalog.json").string();
  std::ifstream cs(catalog_path);
  if (!cs) throw FormatError("cannot open " + catalog_path);
  Json catalog;
  try {
    catalog = Json::parse(cs);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(catalog_path + ": " + e.what());
  }

  DatasetBundle bundle;
  read_json(catalog.at("config"), bundle.config);
  // Prototypes are a pure function of the config; check that they still agree.
  bundle.catalog = generate_catalog(bundle.config);
  const auto& cats = catalog.at("categories");
  if (cats.size() != bundle.catalog.categories.size())
    throw FormatError(catalog_path + ": category count does not match the config");
  for (size_t i = 0; i < cats.size(); ++i)
    if (cats[i].at("name_tokens").get<std::vector<int>>() != bundle.catalog.categories[i].name_tokens)
      throw FormatError(catalog_path + ": catalog does not match its config");
  bundle.distractor_categories = catalog.at("distractor_categories").get<std::vector<int>>();

  const auto images = read_image_store((base / "images.bin").string());
  const std::string manifest_path = (base / "manifest.jsonl").string();
  std::ifstream ms(manifest_path);
  if (!ms) throw FormatError("cannot open " + manifest_path);
  const std::size_t image_bytes = images.empty() ? 0 : images.front().pixels.size() * sizeof(float);
  std::string line;
  while (std::getline(ms, line)) {
    if (line.empty()) continue;
    try {
      const auto rec = Json::parse(line);
      const std::size_t offset = rec.at("image_offset").get<std::size_t>();
      if (image_bytes == 0 || offset < kImageStoreHeaderBytes ||
          (offset - kImageStoreHeaderBytes) % image_bytes != 0)
        throw FormatError(manifest_path + ": bad image offset");
      const std::size_t slot = (offset - kImageStoreHeaderBytes) / image_bytes;
      if (slot >= images.size()) throw FormatError(manifest_path + ": image offset out of range");
      std::optional<int> category;
      if (!rec.at("category").is_null()) category = rec.at("category").get<int>();
      std::optional<std::vector<Instance>> instances;
      if (!rec.at("instances").is_null()) {
        instances.emplace();
        for (const auto& inst : rec.at("instances")) {
          const auto b = inst.at("box").get<std::vector<double>>();
          if (b.size() != 4) throw FormatError(manifest_path + ": box needs 4 coordinates");
          instances->push_back({inst.at("category").get<int>(), Box{b[0], b[1], b[2], b[3]}});
        }
      }
      bundle.samples.emplace_back(rec.at("id").get<int>(), parse_split(rec.at("split").get<std::string>()),
                                  images[slot], rec.at("caption").get<std::vector<int>>(), category,
                                  std::move(instances));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(manifest_path + ": " + e.what());
    }
  }
  std::sort(bundle.samples.begin(), bundle.samples.end(),
            [](const Sample& a, const Sample& b) { return a.id() < b.id(); });
  return bundle;
}

}  // namespace capture
