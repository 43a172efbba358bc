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

#include "capture/config_json.hpp"

#include <fstream>

namespace capture {

FieldReader::FieldReader(const Json& j, std::string context)
    : j_(j), context_(std::move(context)) {
  if (!j_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
}

const Json* FieldReader::child(const char* key) {
  if (!j_.contains(key)) return nullptr;
  seen_.insert(key);
  return &j_.at(key);
}

void FieldReader::finish() const {
  for (const auto& item : j_.items())
    if (!seen_.count(item.key())) throw ConfigError("unknown key " + context_ + "." + item.key());
}

Json to_json(const CorpusConfig& c) {
  Json j;
  j["num_categories"] = c.num_categories;
  j["num_brands"] = c.num_brands;
  j["image_size"] = c.image_size;
  j["instances_per_multi"] = {c.min_instances, c.max_instances};
  j["caption_noise"] = {{"abbreviation_prob", c.caption_noise.abbreviation_prob},
                        {"irrelevant_token_prob", c.caption_noise.irrelevant_token_prob},
                        {"drop_product_mention_prob", c.caption_noise.drop_product_mention_prob}};
  j["split_sizes"] = {{"train", c.split_sizes.train},
                      {"val", c.split_sizes.val},
                      {"test", c.split_sizes.test},
                      {"gallery", c.split_sizes.gallery}};
  j["distractor_category_fraction"] = c.distractor_category_fraction;
  j["confusable_group_size"] = c.confusable_group_size;
  j["long_tail"] = c.long_tail;
  j["zipf_exponent"] = c.zipf_exponent;
  j["single_product_train_fraction"] = c.single_product_train_fraction;
  j["max_overlap_iou"] = c.max_overlap_iou;
  j["placement_retries"] = c.placement_retries;
  j["max_text_len"] = c.max_text_len;
  j["plain_background"] = c.plain_background;
  j["appearance_jitter"] = c.appearance_jitter;
  j["random_pose"] = c.random_pose;
  j["excluded_train_categories"] = c.excluded_train_categories;
  j["seed"] = c.seed;
  return j;
}

void read_json(const Json& j, CorpusConfig& c) {
  FieldReader r(j, "corpus");
  r.get("num_categories", c.num_categories);
  r.get("num_brands", c.num_brands);
  r.get("image_size", c.image_size);
  if (const Json* range = r.child("instances_per_multi")) {
    if (!range->is_array() || range->size() != 2)
      throw ConfigError("corpus.instances_per_multi: expected [min, max]");
    c.min_instances = (*range)[0].get<int>();
    c.max_instances = (*range)[1].get<int>();
  }
  if (const Json* noise = r.child("caption_noise")) {
    FieldReader n(*noise, "corpus.caption_noise");
    n.get("abbreviation_prob", c.caption_noise.abbreviation_prob);
    n.get("irrelevant_token_prob", c.caption_noise.irrelevant_token_prob);
    n.get("drop_product_mention_prob", c.caption_noise.drop_product_mention_prob);
    n.finish();
  }
  if (const Json* sizes = r.child("split_sizes")) {
    FieldReader s(*sizes, "corpus.split_sizes");
    s.get("train", c.split_sizes.train);
    s.get("val", c.split_sizes.val);
    s.get("test", c.split_sizes.test);
    s.get("gallery", c.split_sizes.gallery);
    s.finish();
  }
  r.get("distractor_category_fraction", c.distractor_category_fraction);
  r.get("confusable_group_size", c.confusable_group_size);
  r.get("long_tail", c.long_tail);
  r.get("zipf_exponent", c.zipf_exponent);
  r.get("single_product_train_fraction", c.single_product_train_fraction);
  r.get("max_overlap_iou", c.max_overlap_iou);
  r.get("placement_retries", c.placement_retries);
  r.get("max_text_len", c.max_text_len);
  r.get("plain_background", c.plain_background);
  r.get("appearance_jitter", c.appearance_jitter);
  r.get("random_pose", c.random_pose);
  r.get("excluded_train_categories", c.excluded_train_categories);
  r.get("seed", c.seed);
  r.finish();
  c.validate();
}

Json to_json(const ProposerConfig& c) {
  Json j;
  j["mode"] = proposal_mode_name(c.mode);
  j["jitter_sigma"] = c.jitter_sigma;
  j["miss_prob"] = c.miss_prob;
  j["spurious_rate"] = c.spurious_rate;
  j["r_max"] = c.r_max;
  j["grid"] = c.grid;
  j["d_v"] = c.d_v;
  j["threshold"] = c.threshold;
  j["min_area_fraction"] = c.min_area_fraction;
  j["seed"] = c.seed;
  return j;
}

void read_json(const Json& j, ProposerConfig& c) {
  FieldReader r(j, "proposer");
  std::string mode = proposal_mode_name(c.mode);
  r.get("mode", mode);
  c.mode = parse_proposal_mode(mode);
  r.get("jitter_sigma", c.jitter_sigma);
  r.get("miss_prob", c.miss_prob);
  r.get("spurious_rate", c.spurious_rate);
  r.get("r_max", c.r_max);
  r.get("grid", c.grid);
  r.get("d_v", c.d_v);
  r.get("threshold", c.threshold);
  r.get("min_area_fraction", c.min_area_fraction);
  r.get("seed", c.seed);
  r.finish();
  c.validate();
}

Json to_json(const ModelConfig& c) {
  Json j;
  j["L"] = c.L;
  j["K"] = c.K;
  j["H"] = c.H;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["d_ff"] = c.d_ff;
  j["d_head_out"] = c.d_head_out;
  j["vocab_size"] = c.vocab_size;
  j["max_text_len"] = c.max_text_len;
  j["d_v"] = c.d_v;
  j["dropout_prob"] = c.dropout_prob;
  j["modality"] = modality_name(c.modality);
  j["seed"] = c.seed;
  return j;
}

// vocab_size may stay 0 here; it is filled from the corpus before use.
void read_json(const Json& j, ModelConfig& c) {
  FieldReader r(j, "model");
  r.get("L", c.L);
  r.get("K", c.K);
  r.get("H", c.H);
  r.get("d_model", c.d_model);
  r.get("n_heads", c.n_heads);
  r.get("d_ff", c.d_ff);
  r.get("d_head_out", c.d_head_out);
  r.get("vocab_size", c.vocab_size);
  r.get("max_text_len", c.max_text_len);
  r.get("d_v", c.d_v);
  r.get("dropout_prob", c.dropout_prob);
  std::string modality = modality_name(c.modality);
  r.get("modality", modality);
  c.modality = parse_modality(modality);
  r.get("seed", c.seed);
  r.finish();
}

Json to_json(const PretrainConfig& c) {
  Json j;
  j["mask_prob"] = c.mask_prob;
  j["corruption"] = {c.corruption.replace_with_mask, c.corruption.random_token, c.corruption.keep};
  j["temperature"] = c.temperature;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["linear_decay"] = c.linear_decay;
  j["loss_switches"] = {{"mlm", c.losses.mlm},
                        {"mrp", c.losses.mrp},
                        {"ctr", c.losses.ctr},
                        {"itm", c.losses.itm}};
  j["seed"] = c.seed;
  return j;
}

void read_json(const Json& j, PretrainConfig& c) {
  FieldReader r(j, "pretrain");
  r.get("mask_prob", c.mask_prob);
  if (const Json* split = r.child("corruption")) {
    if (!split->is_array() || split->size() != 3)
      throw ConfigError("pretrain.corruption: expected [mask, random, keep]");
    c.corruption = {(*split)[0].get<double>(), (*split)[1].get<double>(), (*split)[2].get<double>()};
  }
  r.get("temperature", c.temperature);
  r.get("batch_size", c.batch_size);
  r.get("epochs", c.epochs);
  r.get("learning_rate", c.learning_rate);
  r.get("linear_decay", c.linear_decay);
  if (const Json* sw = r.child("loss_switches")) {
    FieldReader s(*sw, "pretrain.loss_switches");
    s.get("mlm", c.losses.mlm);
    s.get("mrp", c.losses.mrp);
    s.get("ctr", c.losses.ctr);
    s.get("itm", c.losses.itm);
    s.finish();
  }
  r.get("seed", c.seed);
  r.finish();
  c.validate();
}

Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace capture
