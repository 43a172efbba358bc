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

// Procedural product corpus: a catalog of fine-grained categories rendered as
// glyphs, single-product gallery images, multi-product query images composed
// by copy-and-paste, and noisy captions over a synthetic vocabulary.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capture/common.hpp"

namespace capture {

// HxWx3 image, row-major, channels interleaved, values in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(static_cast<size_t>(h) * w * 3, 0.0f) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

// Square RGB patch with a coverage mask; the rendered look of one category.
struct Glyph {
  static constexpr int kSize = 16;
  int shape = 0;
  int pattern = 0;
  std::array<double, 3> primary{};
  std::array<double, 3> secondary{};
  std::vector<float> rgb;    // kSize*kSize*3
  std::vector<float> alpha;  // kSize*kSize, 0 or 1
};

struct CategoryPrototype {
  int category_id = 0;
  int brand_id = 0;
  int confusable_group = 0;
  Glyph glyph;
  std::vector<int> name_tokens;
};

// Token id layout. Reserved ids come first, then count tokens ("K-piece
// set"), filler tokens, brand tokens, and the category name slices.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kMask = 3;
  static constexpr int kImg = 4;
  static constexpr int kNumReserved = 5;
  static constexpr int kMaxCount = 10;
  static constexpr int kNumFiller = 12;

  Vocabulary() = default;
  Vocabulary(int num_brands, int num_name_tokens);

  int count_token(int k) const;
  int filler_token(int i) const { return filler_base_ + i; }
  int brand_token(int brand) const { return brand_base_ + brand; }
  int name_base() const { return name_base_; }
  int size() const { return size_; }
  bool is_count_token(int id) const { return id >= count_base_ && id < filler_base_; }

  std::string token_string(int id) const;

 private:
  int count_base_ = kNumReserved;
  int filler_base_ = 0;
  int brand_base_ = 0;
  int name_base_ = 0;
  int size_ = 0;
};

struct CaptionNoise {
  double abbreviation_prob = 0.2;
  double irrelevant_token_prob = 0.3;
  double drop_product_mention_prob = 0.15;

  bool any() const {
    return abbreviation_prob > 0.0 || irrelevant_token_prob > 0.0 ||
           drop_product_mention_prob > 0.0;
  }
};

struct SplitSizes {
  int train = 2000;
  int val = 40;
  int test = 120;
  int gallery = 200;
};

struct CorpusConfig {
  int num_categories = 20;
  int num_brands = 5;
  int image_size = 64;
  int min_instances = 2;  // instances_per_multi range
  int max_instances = 4;
  CaptionNoise caption_noise;
  SplitSizes split_sizes;
  double distractor_category_fraction = 0.15;
  int confusable_group_size = 2;  // <2 disables confusable groups
  bool long_tail = true;          // Zipf category frequencies
  double zipf_exponent = 1.0;
  double single_product_train_fraction = 0.4;
  double max_overlap_iou = 0.3;
  int placement_retries = 50;
  int max_text_len = 36;
  bool plain_background = false;
  // Per-instance photometric variation (0 = none) and random square
  // symmetry of the pasted glyph.
  double appearance_jitter = 1.0;
  bool random_pose = true;
  // Categories never composed into train samples (zero-shot holdout).
  std::vector<int> excluded_train_categories;
  std::uint64_t seed = 7;

  // Throws ConfigError.
  void validate() const;
  int num_distractors() const;
};

enum class Split { kTrain, kVal, kTest, kGallery };

const char* split_name(Split s);
Split parse_split(const std::string& name);

struct Instance {
  int category_id = 0;
  Box box;
};

// One image-caption pair. Labels are private so that the train split can
// never leak them: the accessors return nullopt for train samples.
class Sample {
 public:
  Sample() = default;
  Sample(int id, Split split, Image image, std::vector<int> caption,
         std::optional<int> category, std::optional<std::vector<Instance>> instances);

  int id() const { return id_; }
  Split split() const { return split_; }
  const Image& image() const { return image_; }
  const std::vector<int>& caption() const { return caption_; }
  const std::optional<int>& category_id() const { return category_; }
  const std::optional<std::vector<Instance>>& instances() const { return instances_; }

  // Ground-truth boxes when annotated, empty otherwise.
  std::vector<Box> ground_truth_boxes() const;
  // Distinct instance categories (gallery: the single category).
  std::vector<int> label_set() const;

 private:
  int id_ = -1;
  Split split_ = Split::kTrain;
  Image image_;
  std::vector<int> caption_;
  std::optional<int> category_;
  std::optional<std::vector<Instance>> instances_;
};

struct Catalog {
  Vocabulary vocab;
  std::vector<CategoryPrototype> categories;

  const CategoryPrototype& at(int category_id) const;
};

// Output of the compositor before it is wrapped into a split sample.
struct Composition {
  Image image;
  std::vector<int> caption;
  std::vector<Instance> instances;
};

struct DatasetBundle {
  CorpusConfig config;
  Catalog catalog;
  std::vector<Sample> samples;  // ordered by id
  std::vector<int> distractor_categories;

  std::vector<const Sample*> split(Split s) const;
  const Sample& by_id(int id) const;
};

Catalog generate_catalog(const CorpusConfig& config);

Composition compose_sample(const Catalog& catalog, std::span<const int> category_ids,
                           std::uint64_t sample_seed, const CorpusConfig& config);

DatasetBundle build_dataset(const CorpusConfig& config);

// The gallery-only categories build_dataset will pick for `config`.
std::vector<int> distractor_categories(const CorpusConfig& config);

// ---- serialization (corpus_io.cpp) ----

// Image store: magic "P1MTOY1\0", uint32 count, uint32 H, uint32 W, then
// count HxWx3 float32 images, little-endian.
inline constexpr std::size_t kImageStoreHeaderBytes = 8 + 3 * 4;

void write_image_store(const std::string& path, std::span<const Image> images);
std::vector<Image> read_image_store(const std::string& path);

// Writes manifest.jsonl, images.bin, vocab.json and catalog.json to `dir`.
void write_dataset(const DatasetBundle& bundle, const std::string& dir);

// Reloads samples written by write_dataset. Catalog prototypes and the
// config are restored from catalog.json.
DatasetBundle read_dataset(const std::string& dir);

}  // namespace capture
