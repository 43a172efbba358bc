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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "capture/corpus.hpp"

namespace capture {
namespace {

CorpusConfig small_config(std::uint64_t seed = 7) {
  CorpusConfig c;
  c.split_sizes = {120, 10, 30, 40};
  c.seed = seed;
  return c;
}

CorpusConfig noiseless(CorpusConfig c) {
  c.caption_noise = {0.0, 0.0, 0.0};
  return c;
}

TEST(Catalog, StableAcrossCalls) {
  CorpusConfig c;
  const auto a = generate_catalog(c);
  const auto b = generate_catalog(c);
  ASSERT_EQ(a.categories.size(), 20u);
  for (size_t i = 0; i < a.categories.size(); ++i) {
    EXPECT_EQ(a.categories[i].glyph.rgb, b.categories[i].glyph.rgb);
    EXPECT_EQ(a.categories[i].name_tokens, b.categories[i].name_tokens);
    EXPECT_EQ(a.categories[i].brand_id, b.categories[i].brand_id);
  }
}

TEST(Catalog, SingleBrandSharesToken) {
  CorpusConfig c;
  c.num_categories = 2;
  c.num_brands = 1;
  const auto cat = generate_catalog(c);
  ASSERT_EQ(cat.categories.size(), 2u);
  EXPECT_EQ(cat.vocab.brand_token(cat.categories[0].brand_id),
            cat.vocab.brand_token(cat.categories[1].brand_id));
}

TEST(Catalog, ConfusablePairDiffersInColorAndOneToken) {
  const auto cat = generate_catalog(CorpusConfig{});
  std::map<int, std::vector<const CategoryPrototype*>> groups;
  for (const auto& p : cat.categories) groups[p.confusable_group].push_back(&p);
  int pairs = 0;
  for (const auto& [g, members] : groups) {
    if (members.size() < 2) continue;
    const auto& a = *members[0];
    const auto& b = *members[1];
    EXPECT_EQ(a.glyph.shape, b.glyph.shape);
    EXPECT_EQ(a.glyph.pattern, b.glyph.pattern);
    EXPECT_EQ(a.glyph.alpha, b.glyph.alpha);
    EXPECT_NE(a.glyph.primary, b.glyph.primary);
    ASSERT_EQ(a.name_tokens.size(), b.name_tokens.size());
    int diff = 0;
    for (size_t i = 0; i < a.name_tokens.size(); ++i) diff += a.name_tokens[i] != b.name_tokens[i];
    EXPECT_EQ(diff, 1);
    ++pairs;
  }
  EXPECT_EQ(pairs, 10);
}

TEST(Compose, SingleProductCaptionHasName) {
  const auto c = noiseless(CorpusConfig{});
  const auto cat = generate_catalog(c);
  const int id = 5;
  const auto comp = compose_sample(cat, std::span<const int>(&id, 1), 99, c);
  ASSERT_EQ(comp.instances.size(), 1u);
  for (int t : cat.at(id).name_tokens)
    EXPECT_NE(std::find(comp.caption.begin(), comp.caption.end(), t), comp.caption.end());
}

TEST(Compose, FourBoxesInsideUnitSquare) {
  const auto c = noiseless(CorpusConfig{});
  const auto cat = generate_catalog(c);
  const std::vector<int> ids{0, 3, 8, 12};
  const auto comp = compose_sample(cat, ids, 1234, c);
  ASSERT_EQ(comp.instances.size(), 4u);
  for (const auto& in : comp.instances) {
    EXPECT_TRUE(in.box.valid());
    EXPECT_TRUE(in.box.inside_unit());
  }
}

TEST(Compose, AbbreviationUsesCountToken) {
  auto c = CorpusConfig{};
  c.max_instances = 8;
  c.image_size = 96;
  c.caption_noise = {1.0, 0.0, 0.0};
  const auto cat = generate_catalog(c);
  const std::vector<int> ids{0, 2, 4, 6, 8, 10, 12, 14};
  const auto comp = compose_sample(cat, ids, 77, c);
  const auto& cap = comp.caption;
  EXPECT_NE(std::find(cap.begin(), cap.end(), cat.vocab.count_token(8)), cap.end());
  for (int id : ids)
    for (int t : cat.at(id).name_tokens)
      EXPECT_EQ(std::find(cap.begin(), cap.end(), t), cap.end()) << "category " << id;
}

TEST(Dataset, DistractorArithmetic) {
  CorpusConfig c;
  EXPECT_EQ(c.num_distractors(), 3);
  const auto ds = build_dataset(small_config());
  EXPECT_EQ(ds.distractor_categories.size(), 3u);
  EXPECT_EQ(ds.distractor_categories, distractor_categories(small_config()));
  const std::set<int> distract(ds.distractor_categories.begin(), ds.distractor_categories.end());
  std::set<int> reachable;
  for (Split s : {Split::kVal, Split::kTest})
    for (const auto* q : ds.split(s))
      for (int l : q->label_set()) reachable.insert(l);
  for (int d : distract) EXPECT_EQ(reachable.count(d), 0u);
  EXPECT_LE(reachable.size(), 17u);
}

TEST(Dataset, DefaultSplitProportions) {
  const SplitSizes s;
  EXPECT_GT(s.train, s.gallery);
  EXPECT_GT(s.gallery, s.test);
  EXPECT_GT(s.test, s.val);
}

TEST(Dataset, GallerySamplesHaveOneInstance) {
  const auto ds = build_dataset(small_config());
  const auto gallery = ds.split(Split::kGallery);
  ASSERT_EQ(gallery.size(), 40u);
  for (const auto* g : gallery) {
    ASSERT_TRUE(g->category_id().has_value());
    ASSERT_TRUE(g->instances().has_value());
    EXPECT_EQ(g->instances()->size(), 1u);
    EXPECT_EQ(g->label_set(), std::vector<int>{*g->category_id()});
  }
}

TEST(Dataset, DeterministicAcrossBuilds) {
  const auto a = build_dataset(small_config(11));
  const auto b = build_dataset(small_config(11));
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].image(), b.samples[i].image());
    EXPECT_EQ(a.samples[i].caption(), b.samples[i].caption());
    EXPECT_EQ(a.samples[i].label_set(), b.samples[i].label_set());
  }
  const auto c = build_dataset(small_config(12));
  EXPECT_NE(a.samples[0].image(), c.samples[0].image());
}

TEST(Dataset, ManifestBytesDeterministic) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "capture_corpus_det";
  fs::remove_all(dir);
  const auto ds = build_dataset(small_config(3));
  write_dataset(ds, (dir / "a").string());
  write_dataset(build_dataset(small_config(3)), (dir / "b").string());
  for (const char* f : {"manifest.jsonl", "images.bin", "vocab.json", "catalog.json"}) {
    std::ifstream x(dir / "a" / f, std::ios::binary), y(dir / "b" / f, std::ios::binary);
    const std::string sx((std::istreambuf_iterator<char>(x)), {});
    const std::string sy((std::istreambuf_iterator<char>(y)), {});
    EXPECT_FALSE(sx.empty());
    EXPECT_EQ(sx, sy) << f;
  }
  fs::remove_all(dir);
}

TEST(Dataset, TrainSplitHidesLabels) {
  const auto ds = build_dataset(small_config());
  const auto train = ds.split(Split::kTrain);
  ASSERT_FALSE(train.empty());
  for (const auto* s : train) {
    EXPECT_FALSE(s->category_id().has_value());
    EXPECT_FALSE(s->instances().has_value());
    EXPECT_TRUE(s->ground_truth_boxes().empty());
    EXPECT_TRUE(s->label_set().empty());
  }
}

TEST(Dataset, QueryInstancesRespectCatalogAndOverlapCap) {
  const auto ds = build_dataset(small_config(5));
  for (Split s : {Split::kVal, Split::kTest}) {
    for (const auto* q : ds.split(s)) {
      ASSERT_TRUE(q->instances().has_value());
      const auto& inst = *q->instances();
      EXPECT_GE(inst.size(), 2u);
      for (const auto& in : inst) {
        EXPECT_GE(in.category_id, 0);
        EXPECT_LT(in.category_id, ds.config.num_categories);
      }
      for (size_t i = 0; i < inst.size(); ++i)
        for (size_t j = i + 1; j < inst.size(); ++j)
          EXPECT_LE(iou(inst[i].box, inst[j].box), ds.config.max_overlap_iou + 1e-12);
    }
  }
}

TEST(Dataset, NoiselessCaptionsMentionEveryInstance) {
  const auto ds = build_dataset(noiseless(small_config(9)));
  for (const auto* q : ds.split(Split::kTest)) {
    const auto& cap = q->caption();
    for (const auto& in : *q->instances())
      for (int t : ds.catalog.at(in.category_id).name_tokens)
        EXPECT_NE(std::find(cap.begin(), cap.end(), t), cap.end());
  }
}

TEST(Dataset, ExcludedCategoriesNeverInTrainCaptions) {
  auto c = noiseless(small_config(4));
  const auto d = distractor_categories(c);
  int held = -1;
  for (int k = 0; k < c.num_categories && held < 0; ++k)
    if (std::find(d.begin(), d.end(), k) == d.end()) held = k;
  c.excluded_train_categories = {held};
  const auto ds = build_dataset(c);
  // The variant token is unique to the category.
  const int variant = ds.catalog.at(held).name_tokens.back();
  for (const auto* s : ds.split(Split::kTrain)) {
    const auto& cap = s->caption();
    EXPECT_EQ(std::find(cap.begin(), cap.end(), variant), cap.end());
  }
}

TEST(Dataset, RoundTripThroughDisk) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "capture_corpus_rt";
  fs::remove_all(dir);
  const auto ds = build_dataset(small_config(2));
  write_dataset(ds, dir.string());
  const auto back = read_dataset(dir.string());
  ASSERT_EQ(back.samples.size(), ds.samples.size());
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& a = ds.samples[i];
    const auto& b = back.samples[i];
    EXPECT_EQ(a.id(), b.id());
    EXPECT_EQ(a.split(), b.split());
    EXPECT_EQ(a.caption(), b.caption());
    EXPECT_EQ(a.image(), b.image());
    EXPECT_EQ(a.category_id(), b.category_id());
    EXPECT_EQ(a.ground_truth_boxes().size(), b.ground_truth_boxes().size());
  }
  EXPECT_EQ(back.distractor_categories, ds.distractor_categories);
  EXPECT_EQ(back.catalog.vocab.size(), ds.catalog.vocab.size());
  fs::remove_all(dir);
}

TEST(Dataset, ImageStoreRejectsBadMagic) {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "capture_bad_store.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTMAGIC and some more bytes";
  }
  EXPECT_THROW(read_image_store(path.string()), FormatError);
  fs::remove(path);
}

TEST(CorpusConfig, RejectsBadValues) {
  CorpusConfig c;
  c.num_categories = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = CorpusConfig{};
  c.caption_noise.abbreviation_prob = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = CorpusConfig{};
  c.min_instances = 5;
  c.max_instances = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace capture
