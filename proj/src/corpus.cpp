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

#include "capture/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace capture {
namespace {

constexpr int kNumShapes = 8;
constexpr int kNumPatterns = 4;
constexpr double kConfusableHueShift = 0.035;
constexpr double kGoldenRatio = 0.6180339887498949;

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

// Every shape touches all four patch edges so the tight bounding box of the
// painted pixels matches the paste box.
bool shape_covers(int shape, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  const double r2 = u * u + v * v;
  switch (shape) {
    case 0: return r2 <= 1.05;
    case 1: return true;
    case 2: return au + av <= 1.05;
    case 3: return au <= (v + 1.0) * 0.5 + 0.06;
    case 4: return r2 <= 1.05 && r2 >= 0.2;
    case 5: return au <= 0.38 || av <= 0.38;
    case 6: return au <= av + 0.1;
    default: return std::max(au, av) >= 0.5;
  }
}

bool pattern_secondary(int pattern, double u, double v) {
  const int bu = static_cast<int>(std::floor((u + 1.0) * 2.0));
  const int bv = static_cast<int>(std::floor((v + 1.0) * 2.0));
  switch (pattern) {
    case 0: return false;
    case 1: return bv % 2 == 1;
    case 2: return bu % 2 == 1;
    default: return (bu + bv) % 2 == 1;
  }
}

Glyph render_glyph(int shape, int pattern, const std::array<double, 3>& primary,
                   const std::array<double, 3>& secondary) {
  Glyph g;
  g.shape = shape;
  g.pattern = pattern;
  g.primary = primary;
  g.secondary = secondary;
  const int n = Glyph::kSize;
  g.rgb.assign(static_cast<size_t>(n) * n * 3, 0.0f);
  g.alpha.assign(static_cast<size_t>(n) * n, 0.0f);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double u = (x + 0.5) / n * 2.0 - 1.0;
      const double v = (y + 0.5) / n * 2.0 - 1.0;
      const size_t p = static_cast<size_t>(y) * n + x;
      if (!shape_covers(shape, u, v)) continue;
      g.alpha[p] = 1.0f;
      const auto& c = pattern_secondary(pattern, u, v) ? secondary : primary;
      for (int ch = 0; ch < 3; ++ch) g.rgb[p * 3 + ch] = static_cast<float>(c[ch]);
    }
  }
  return g;
}

std::vector<double> zipf_weights(int n, bool long_tail, double exponent, Rng& rng) {
  std::vector<double> w(n, 1.0);
  if (!long_tail) return w;
  std::vector<int> rank(n);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  for (int c = 0; c < n; ++c) w[c] = 1.0 / std::pow(rank[c] + 1.0, exponent);
  return w;
}

// Weighted sampling of k distinct items from `pool`.
std::vector<int> sample_distinct(const std::vector<int>& pool, const std::vector<double>& weights,
                                 int k, Rng& rng) {
  std::vector<int> items = pool;
  std::vector<double> w;
  w.reserve(items.size());
  for (int c : items) w.push_back(weights[c]);
  std::vector<int> out;
  for (int i = 0; i < k; ++i) {
    std::discrete_distribution<size_t> pick(w.begin(), w.end());
    const size_t j = pick(rng);
    out.push_back(items[j]);
    items.erase(items.begin() + static_cast<std::ptrdiff_t>(j));
    w.erase(w.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return out;
}

void paint_background(Image& img, bool plain, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double base = 0.86 + 0.08 * unit(rng);
  const double tint_hue = unit(rng);
  const auto tint = hsv_to_rgb(tint_hue, 0.08, 1.0);
  if (plain) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(base * tint[c]);
    return;
  }
  const double fx = 1.0 + 3.0 * unit(rng), fy = 1.0 + 3.0 * unit(rng);
  const double phase = 6.283185307179586 * unit(rng);
  std::normal_distribution<double> noise(0.0, 0.012);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double u = static_cast<double>(x) / img.width, v = static_cast<double>(y) / img.height;
      const double tex = 0.03 * std::sin(6.283185307179586 * (fx * u + fy * v) + phase);
      for (int c = 0; c < 3; ++c) {
        const double val = base * tint[c] + tex + noise(rng);
        img.at(y, x, c) = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }
}

// Per-instance rendering variation: one of the eight square symmetries plus
// a gain, a per-channel cast and a brightness offset.
struct Appearance {
  int pose = 0;
  double gain = 1.0;
  std::array<double, 3> cast{};
  double brightness = 0.0;
};

Appearance draw_appearance(const CorpusConfig& config, Rng& rng) {
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  Appearance a;
  const double j = config.appearance_jitter;
  a.brightness = 0.05 * sym(rng);
  if (config.random_pose) a.pose = std::uniform_int_distribution<int>(0, 7)(rng);
  a.gain = 1.0 + 0.2 * j * sym(rng);
  for (auto& c : a.cast) c = 0.06 * j * sym(rng);
  return a;
}

void paste_glyph(Image& img, const Glyph& g, int x0, int y0, int side, const Appearance& look) {
  const int n = Glyph::kSize;
  for (int dy = 0; dy < side; ++dy) {
    for (int dx = 0; dx < side; ++dx) {
      const int y = y0 + dy, x = x0 + dx;
      if (y < 0 || y >= img.height || x < 0 || x >= img.width) continue;
      // Nearest sample keeps stripe patterns crisp at every scale.
      int gy = std::min(n - 1, static_cast<int>((dy + 0.5) * n / side));
      int gx = std::min(n - 1, static_cast<int>((dx + 0.5) * n / side));
      if (look.pose & 1) gx = n - 1 - gx;
      if (look.pose & 2) gy = n - 1 - gy;
      if (look.pose & 4) std::swap(gx, gy);
      const size_t p = static_cast<size_t>(gy) * n + gx;
      if (g.alpha[p] < 0.5f) continue;
      for (int c = 0; c < 3; ++c) {
        const double val = look.gain * g.rgb[p * 3 + c] + look.cast[c] + look.brightness;
        img.at(y, x, c) = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }
}

std::vector<int> compose_caption(const Catalog& catalog, std::span<const int> ids,
                                 const CorpusConfig& config, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& noise = config.caption_noise;
  const int k = static_cast<int>(ids.size());

  std::vector<std::vector<int>> brand_segments;
  std::set<int> brands_seen;
  for (int id : ids) {
    const int b = catalog.at(id).brand_id;
    if (brands_seen.insert(b).second) brand_segments.push_back({catalog.vocab.brand_token(b)});
  }

  std::vector<std::vector<int>> product_segments;
  if (k >= 2 && unit(rng) < noise.abbreviation_prob) {
    product_segments.push_back({catalog.vocab.count_token(k)});
  } else {
    for (int id : ids) {
      if (unit(rng) < noise.drop_product_mention_prob) continue;
      product_segments.push_back(catalog.at(id).name_tokens);
    }
  }
  if (unit(rng) < noise.irrelevant_token_prob) {
    const int n = static_cast<int>(catalog.categories.size());
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int tries = 0; tries < 16; ++tries) {
      const int other = pick(rng);
      if (std::find(ids.begin(), ids.end(), other) == ids.end()) {
        product_segments.push_back(catalog.at(other).name_tokens);
        break;
      }
    }
  }

  std::vector<std::vector<int>> filler_segments;
  std::uniform_int_distribution<int> filler_count(0, 2);
  std::uniform_int_distribution<int> filler_pick(0, Vocabulary::kNumFiller - 1);
  const int nf = filler_count(rng);
  for (int i = 0; i < nf; ++i) filler_segments.push_back({catalog.vocab.filler_token(filler_pick(rng))});

  std::vector<std::vector<int>> segments;
  for (auto* group : {&brand_segments, &product_segments, &filler_segments})
    segments.insert(segments.end(), group->begin(), group->end());
  if (noise.any()) std::shuffle(segments.begin(), segments.end(), rng);

  std::vector<int> caption;
  for (const auto& s : segments) caption.insert(caption.end(), s.begin(), s.end());
  // One slot stays free for [CLS].
  const size_t cap = static_cast<size_t>(std::max(1, config.max_text_len - 1));
  if (caption.size() > cap) caption.resize(cap);
  return caption;
}

}  // namespace

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary(int num_brands, int num_name_tokens) {
  count_base_ = kNumReserved;
  filler_base_ = count_base_ + (kMaxCount - 1);  // counts 2..kMaxCount
  brand_base_ = filler_base_ + kNumFiller;
  name_base_ = brand_base_ + num_brands;
  size_ = name_base_ + num_name_tokens;
}

int Vocabulary::count_token(int k) const {
  return count_base_ + std::clamp(k, 2, kMaxCount) - 2;
}

std::string Vocabulary::token_string(int id) const {
  switch (id) {
    case kPad: return "[PAD]";
    case kCls: return "[CLS]";
    case kSep: return "[SEP]";
    case kMask: return "[MASK]";
    case kImg: return "[IMG]";
    default: break;
  }
  if (id < filler_base_) return std::to_string(id - count_base_ + 2) + "-piece-set";
  if (id < brand_base_) return "filler" + std::to_string(id - filler_base_);
  if (id < name_base_) return "brand" + std::to_string(id - brand_base_);
  return "name" + std::to_string(id - name_base_);
}

int CorpusConfig::num_distractors() const {
  return static_cast<int>(std::floor(distractor_category_fraction * num_categories + 0.5));
}

void CorpusConfig::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0,1]");
  };
  if (num_categories < 2) throw ConfigError("num_categories must be >= 2");
  if (num_brands < 1) throw ConfigError("num_brands must be >= 1");
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  if (min_instances < 1 || max_instances < min_instances)
    throw ConfigError("instances_per_multi must satisfy 1 <= min <= max");
  prob(caption_noise.abbreviation_prob, "abbreviation_prob");
  prob(caption_noise.irrelevant_token_prob, "irrelevant_token_prob");
  prob(caption_noise.drop_product_mention_prob, "drop_product_mention_prob");
  prob(single_product_train_fraction, "single_product_train_fraction");
  prob(max_overlap_iou, "max_overlap_iou");
  if (split_sizes.train <= 0 || split_sizes.val <= 0 || split_sizes.test <= 0 ||
      split_sizes.gallery <= 0)
    throw ConfigError("split sizes must be positive");
  if (!(appearance_jitter >= 0.0 && appearance_jitter <= 2.0))
    throw ConfigError("appearance_jitter must lie in [0,2]");
  if (!(distractor_category_fraction >= 0.0 && distractor_category_fraction < 1.0))
    throw ConfigError("distractor_category_fraction must lie in [0,1)");
  if (placement_retries < 1) throw ConfigError("placement_retries must be >= 1");
  if (max_text_len < 2) throw ConfigError("max_text_len must be >= 2");
  for (int c : excluded_train_categories)
    if (c < 0 || c >= num_categories) throw ConfigError("excluded category out of range");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kGallery: return "gallery";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  if (name == "gallery") return Split::kGallery;
  throw FormatError("unknown split '" + name + "'");
}

Sample::Sample(int id, Split split, Image image, std::vector<int> caption,
               std::optional<int> category, std::optional<std::vector<Instance>> instances)
    : id_(id),
      split_(split),
      image_(std::move(image)),
      caption_(std::move(caption)),
      category_(std::move(category)),
      instances_(std::move(instances)) {
  if (split_ == Split::kTrain) {
    category_.reset();
    instances_.reset();
  }
}

std::vector<Box> Sample::ground_truth_boxes() const {
  std::vector<Box> out;
  if (instances_)
    for (const auto& inst : *instances_) out.push_back(inst.box);
  return out;
}

std::vector<int> Sample::label_set() const {
  std::set<int> s;
  if (category_) s.insert(*category_);
  if (instances_)
    for (const auto& inst : *instances_) s.insert(inst.category_id);
  return {s.begin(), s.end()};
}

const CategoryPrototype& Catalog::at(int category_id) const {
  if (category_id < 0 || category_id >= static_cast<int>(categories.size()))
    throw InputError("unknown category id " + std::to_string(category_id));
  return categories[static_cast<size_t>(category_id)];
}

std::vector<const Sample*> DatasetBundle::split(Split s) const {
  std::vector<const Sample*> out;
  for (const auto& sample : samples)
    if (sample.split() == s) out.push_back(&sample);
  return out;
}

const Sample& DatasetBundle::by_id(int id) const {
  if (id < 0 || id >= static_cast<int>(samples.size()) || samples[static_cast<size_t>(id)].id() != id)
    throw InputError("unknown sample id " + std::to_string(id));
  return samples[static_cast<size_t>(id)];
}

// ---------------------------------------------------------------------------

Catalog generate_catalog(const CorpusConfig& config) {
  config.validate();
  Rng rng(mix_seed(config.seed, 0xca7a109ULL));

  const int n = config.num_categories;
  const int group_size = config.confusable_group_size >= 2 ? config.confusable_group_size : 1;
  // Group index per category; a trailing singleton joins the previous group.
  std::vector<int> group_of(n);
  for (int c = 0; c < n; ++c) group_of[c] = c / group_size;
  int num_groups = (n + group_size - 1) / group_size;
  if (group_size > 1 && n % group_size == 1 && num_groups > 1) {
    group_of[n - 1] = num_groups - 2;
    --num_groups;
  }

  std::vector<int> looks(kNumShapes * kNumPatterns);
  std::iota(looks.begin(), looks.end(), 0);
  std::shuffle(looks.begin(), looks.end(), rng);
  const double hue0 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

  // Name tokens: groups share a prefix, each member owns one variant token.
  std::vector<int> group_len(num_groups);
  std::vector<std::vector<int>> group_prefix(num_groups);
  int next_name = 0;
  for (int g = 0; g < num_groups; ++g) {
    group_len[g] = 2 + static_cast<int>(mix_seed(config.seed, 0x7e11ULL, g) % 3);
    for (int i = 0; i < group_len[g] - 1; ++i) group_prefix[g].push_back(next_name++);
  }

  std::vector<CategoryPrototype> protos(n);
  std::vector<int> member_index(num_groups, 0);
  std::vector<int> variant_tokens(n);
  for (int c = 0; c < n; ++c) variant_tokens[c] = next_name++;

  Catalog catalog;
  catalog.vocab = Vocabulary(config.num_brands, next_name);
  for (int c = 0; c < n; ++c) {
    const int g = group_of[c];
    const int m = member_index[g]++;
    auto& p = protos[c];
    p.category_id = c;
    p.brand_id = g % config.num_brands;
    p.confusable_group = g;
    const int look = looks[static_cast<size_t>(g) % looks.size()];
    const double hue = hue0 + kGoldenRatio * g + kConfusableHueShift * m;
    const auto primary = hsv_to_rgb(hue, 0.85, 0.72);
    const auto secondary = hsv_to_rgb(hue + 0.45, 0.8, 0.42);
    p.glyph = render_glyph(look / kNumPatterns, look % kNumPatterns, primary, secondary);
    for (int t : group_prefix[g]) p.name_tokens.push_back(catalog.vocab.name_base() + t);
    p.name_tokens.push_back(catalog.vocab.name_base() + variant_tokens[c]);
  }
  catalog.categories = std::move(protos);
  return catalog;
}

Composition compose_sample(const Catalog& catalog, std::span<const int> category_ids,
                           std::uint64_t sample_seed, const CorpusConfig& config) {
  const int k = static_cast<int>(category_ids.size());
  if (k < 1 || k > std::max(1, config.max_instances))
    throw InputError("compose_sample: instance count out of range");
  for (int id : category_ids) (void)catalog.at(id);

  Rng rng(sample_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Composition out;
  out.image = Image(config.image_size, config.image_size);
  paint_background(out.image, config.plain_background, rng);

  const int size = config.image_size;
  const double max_frac = k == 1 ? 0.75 : std::min(0.45, 0.62 / std::sqrt(static_cast<double>(k)));
  const double min_frac = k == 1 ? 0.45 : 0.75 * max_frac;
  // The first half of the retries also asks for a one-pixel gap to the
  // products already placed; the rest only enforce the overlap cap.
  const int gap_retries = config.placement_retries / 2;
  for (int id : category_ids) {
    bool placed = false;
    for (int attempt = 0; attempt < config.placement_retries && !placed; ++attempt) {
      const int side = std::max(3, static_cast<int>(std::lround(
                                       (min_frac + (max_frac - min_frac) * unit(rng)) * size)));
      std::uniform_int_distribution<int> pos(0, size - side);
      const int x0 = pos(rng), y0 = pos(rng);
      const Box box{static_cast<double>(x0) / size, static_cast<double>(y0) / size,
                    static_cast<double>(x0 + side) / size, static_cast<double>(y0 + side) / size};
      const double pad = 1.0 / size;
      const Box padded{box.x1 - pad, box.y1 - pad, box.x2 + pad, box.y2 + pad};
      bool ok = true;
      for (const auto& other : out.instances) {
        if (iou(box, other.box) > config.max_overlap_iou) ok = false;
        if (attempt < gap_retries && iou(padded, other.box) > 0.0) ok = false;
      }
      if (!ok) continue;
      paste_glyph(out.image, catalog.at(id).glyph, x0, y0, side, draw_appearance(config, rng));
      out.instances.push_back(Instance{id, box});
      placed = true;
    }
    if (!placed)
      throw PlacementError("could not place " + std::to_string(k) +
                           " instances under the overlap cap");
  }
  out.caption = compose_caption(catalog, category_ids, config, rng);
  return out;
}

namespace {

std::vector<int> draw_distractors(const CorpusConfig& config, Rng& rng) {
  std::vector<int> order(config.num_categories);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> out(order.begin(), order.begin() + config.num_distractors());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<int> distractor_categories(const CorpusConfig& config) {
  config.validate();
  Rng rng(mix_seed(config.seed, 0xda7a5e7ULL));
  return draw_distractors(config, rng);
}

DatasetBundle build_dataset(const CorpusConfig& config) {
  config.validate();
  DatasetBundle bundle;
  bundle.config = config;
  bundle.catalog = generate_catalog(config);
  const int n = config.num_categories;

  Rng rng(mix_seed(config.seed, 0xda7a5e7ULL));
  bundle.distractor_categories = draw_distractors(config, rng);

  std::vector<int> query_pool, train_pool;
  for (int c = 0; c < n; ++c) {
    if (!std::binary_search(bundle.distractor_categories.begin(),
                            bundle.distractor_categories.end(), c))
      query_pool.push_back(c);
    if (std::find(config.excluded_train_categories.begin(), config.excluded_train_categories.end(),
                  c) == config.excluded_train_categories.end())
      train_pool.push_back(c);
  }
  if (static_cast<int>(query_pool.size()) < config.min_instances)
    throw ConfigError("too few query categories for the requested instance count");
  if (static_cast<int>(train_pool.size()) < config.min_instances)
    throw ConfigError("too few train categories for the requested instance count");
  if (config.split_sizes.gallery < n)
    throw ConfigError("gallery must hold at least one sample per category");

  const auto weights = zipf_weights(n, config.long_tail, config.zipf_exponent, rng);

  const int max_q = std::min<int>(config.max_instances, static_cast<int>(query_pool.size()));
  const int max_t = std::min<int>(config.max_instances, static_cast<int>(train_pool.size()));

  // Category assignment is drawn sequentially (cheap); rendering uses a
  // per-sample seed so it can be sharded.
  struct Plan {
    Split split;
    std::vector<int> ids;
  };
  std::vector<Plan> plans;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < config.split_sizes.train; ++i) {
    const bool single = unit(rng) < config.single_product_train_fraction;
    const int k = single ? 1 : std::uniform_int_distribution<int>(config.min_instances, max_t)(rng);
    plans.push_back({Split::kTrain, sample_distinct(train_pool, weights, k, rng)});
  }
  for (Split s : {Split::kVal, Split::kTest}) {
    const int count = s == Split::kVal ? config.split_sizes.val : config.split_sizes.test;
    for (int i = 0; i < count; ++i) {
      const int k = std::uniform_int_distribution<int>(std::min(config.min_instances, max_q), max_q)(rng);
      plans.push_back({s, sample_distinct(query_pool, weights, k, rng)});
    }
  }
  for (int i = 0; i < config.split_sizes.gallery; ++i) plans.push_back({Split::kGallery, {i % n}});

  bundle.samples.reserve(plans.size());
  for (size_t id = 0; id < plans.size(); ++id) {
    const auto& plan = plans[id];
    auto comp = compose_sample(bundle.catalog, plan.ids, mix_seed(config.seed, id), config);
    std::optional<int> category;
    std::optional<std::vector<Instance>> instances;
    if (plan.split == Split::kGallery) {
      category = plan.ids.front();
      instances = comp.instances;
    } else if (plan.split != Split::kTrain) {
      instances = comp.instances;
    }
    bundle.samples.emplace_back(static_cast<int>(id), plan.split, std::move(comp.image),
                                std::move(comp.caption), category, std::move(instances));
  }
  return bundle;
}

}  // namespace capture
