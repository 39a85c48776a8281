/*
   Copyright 2026 calcap authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include "calcap/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "calcap/errors.hpp"
#include "calcap/numeric.hpp"

namespace calcap {

using nlohmann::json;

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> kReserved{"<s>", "</s>", "<pad>",
                                                  "<unk>"};
  return kReserved;
}

std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_ = reserved_tokens();
  for (const auto& t : tokens) tokens_.push_back(t);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = ids_.emplace(tokens_[i], int(i));
    if (!inserted) throw DataError("duplicate vocabulary token: " + tokens_[i]);
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || std::size_t(id) >= tokens_.size())
    throw DataError("token id out of range: " + std::to_string(id));
  return tokens_[std::size_t(id)];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& t : tokens_) {
    h = fnv1a(t.data(), t.size(), h);
    h = fnv1a("\n", 1, h);
  }
  return h;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t min_freq) {
  std::map<std::string, std::size_t> freq;
  for (const auto& caption : corpus)
    for (const auto& tok : caption) ++freq[tok];
  for (const auto& r : reserved_tokens())
    if (freq.count(r))
      throw DataError("corpus contains reserved token surface form: " + r);

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : freq)
    if (n >= min_freq) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> ordered;
  ordered.reserve(kept.size());
  for (auto& [tok, n] : kept) ordered.push_back(tok);
  return Vocabulary(ordered);
}

const std::vector<ImageRecord>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw DataError("unknown split: " + name);
}

std::vector<Attribute> default_attributes() {
  return {
      {"object",
       {{"cat", {"cat", "kitten", "tabby"}},
        {"dog", {"dog", "puppy", "hound"}},
        {"bird", {"bird", "sparrow", "finch"}},
        {"fish", {"fish", "trout", "minnow"}}}},
      {"color",
       {{"red", {"red", "crimson", "scarlet"}},
        {"blue", {"blue", "azure", "navy"}},
        {"green", {"green", "olive", "jade"}},
        {"black", {"black", "ebony", "charcoal"}}}},
      {"size",
       {{"small", {"small", "little", "petite"}},
        {"big", {"big", "large", "hefty"}},
        {"tiny", {"tiny", "mini", "wee"}},
        {"huge", {"huge", "giant", "massive"}}}},
      {"scene",
       {{"park", {"park", "garden", "meadow"}},
        {"house", {"house", "cottage", "cabin"}},
        {"river", {"river", "stream", "creek"}},
        {"field", {"field", "prairie", "pasture"}}}},
  };
}

std::vector<std::string> default_templates() {
  return {
      "a {size} {color} {object} in the {scene}",
      "the {scene} shows a {size} {color} {object}",
  };
}

namespace {

struct TemplateToken {
  bool is_slot = false;
  std::string text;     // literal word, or attribute name for slots
  std::size_t attr_index = 0;
};

std::vector<TemplateToken> parse_template(const std::string& tmpl,
                                          const std::vector<Attribute>& attrs) {
  std::vector<TemplateToken> out;
  for (const auto& word : split_ws(tmpl)) {
    TemplateToken tok;
    if (word.size() >= 2 && word.front() == '{' && word.back() == '}') {
      tok.is_slot = true;
      tok.text = word.substr(1, word.size() - 2);
      auto it = std::find_if(attrs.begin(), attrs.end(), [&](const Attribute& a) {
        return a.name == tok.text;
      });
      if (it == attrs.end())
        throw DataError("template references unknown attribute: " + tok.text);
      tok.attr_index = std::size_t(it - attrs.begin());
    } else {
      tok.text = word;
    }
    out.push_back(std::move(tok));
  }
  if (out.empty()) throw DataError("empty caption template");
  return out;
}

void validate_config(const WorldConfig& c) {
  if (c.n_images == 0) throw DataError("world needs at least one image");
  if (c.captions_per_image == 0)
    throw DataError("captions_per_image must be >= 1");
  double fsum = c.f_train + c.f_val + c.f_test;
  if (c.f_train < 0 || c.f_val < 0 || c.f_test < 0 ||
      std::abs(fsum - 1.0) > 1e-9)
    throw DataError("split fractions must be nonnegative and sum to 1");
  if (c.attributes.empty()) throw DataError("attribute schema is empty");
  std::size_t feat_dims = 0;
  for (const auto& a : c.attributes) {
    if (a.values.empty())
      throw DataError("attribute has no values: " + a.name);
    for (const auto& v : a.values)
      if (v.surfaces.empty())
        throw DataError("attribute value has no surface forms: " + v.canon);
    feat_dims += a.values.size();
  }
  if (feat_dims != c.d_img)
    throw DataError("d_img must equal total attribute value count (" +
                    std::to_string(feat_dims) + ")");
  if (c.templates.empty()) throw DataError("template set is empty");
}

}  // namespace

Dataset generate_world(const WorldConfig& config) {
  validate_config(config);

  std::vector<std::vector<TemplateToken>> templates;
  std::size_t longest = 0;
  for (const auto& t : config.templates) {
    templates.push_back(parse_template(t, config.attributes));
    longest = std::max(longest, templates.back().size());
  }
  if (longest > config.t_max)
    throw DataError("t_max smaller than longest template (" +
                    std::to_string(longest) + " tokens)");

  // Grammar vocabulary check before rendering anything.
  {
    std::vector<std::vector<std::string>> grammar_words(1);
    for (const auto& a : config.attributes)
      for (const auto& v : a.values)
        for (const auto& s : v.surfaces) grammar_words[0].push_back(s);
    for (const auto& t : templates)
      for (const auto& tok : t)
        if (!tok.is_slot) grammar_words[0].push_back(tok.text);
    Vocabulary probe = build_vocabulary(grammar_words, 1);
    if (probe.size() > config.max_vocab)
      throw DataError("grammar vocabulary overflow: " +
                      std::to_string(probe.size()) + " tokens exceed maximum " +
                      std::to_string(config.max_vocab));
  }

  SeededRng root(config.seed);
  SeededRng combo_rng = root.fork(0);
  SeededRng jitter_rng = root.fork(1);
  SeededRng caption_rng = root.fork(2);

  std::size_t n_combos = 1;
  for (const auto& a : config.attributes) n_combos *= a.values.size();
  std::vector<std::size_t> combo_order(n_combos);

  struct RenderedImage {
    std::vector<std::size_t> value_index;
    std::vector<double> features;
    std::vector<std::vector<std::string>> captions;
    std::string hint;
  };
  std::vector<RenderedImage> images(config.n_images);

  for (std::size_t i = 0; i < config.n_images; ++i) {
    if (i % n_combos == 0) {
      for (std::size_t k = 0; k < n_combos; ++k) combo_order[k] = k;
      seeded_shuffle(combo_order, combo_rng);
    }
    std::size_t combo = combo_order[i % n_combos];

    RenderedImage& img = images[i];
    img.value_index.resize(config.attributes.size());
    for (std::size_t a = config.attributes.size(); a-- > 0;) {
      std::size_t n = config.attributes[a].values.size();
      img.value_index[a] = combo % n;
      combo /= n;
    }

    img.features.assign(config.d_img, 0.0);
    std::size_t offset = 0;
    for (std::size_t a = 0; a < config.attributes.size(); ++a) {
      img.features[offset + img.value_index[a]] = 1.0;
      offset += config.attributes[a].values.size();
    }
    for (double& f : img.features)
      f += config.jitter_sigma * jitter_rng.gaussian();

    for (std::size_t a = 0; a < config.attributes.size(); ++a) {
      if (a) img.hint += "|";
      img.hint += config.attributes[a].values[img.value_index[a]].canon;
    }

    for (std::size_t c = 0; c < config.captions_per_image; ++c) {
      const auto& tmpl =
          templates[caption_rng.uniform_index(templates.size())];
      std::vector<std::string> words;
      words.reserve(tmpl.size());
      for (const auto& tok : tmpl) {
        if (!tok.is_slot) {
          words.push_back(tok.text);
          continue;
        }
        const auto& value =
            config.attributes[tok.attr_index].values[img.value_index[tok.attr_index]];
        words.push_back(
            value.surfaces[caption_rng.uniform_index(value.surfaces.size())]);
      }
      img.captions.push_back(std::move(words));
    }
  }

  std::vector<std::vector<std::string>> all_captions;
  for (const auto& img : images)
    for (const auto& cap : img.captions) all_captions.push_back(cap);

  Dataset ds;
  ds.vocab = build_vocabulary(all_captions, config.vocab_threshold);
  ds.d_img = config.d_img;
  ds.t_max = config.t_max;

  std::size_t n_train =
      std::size_t(std::llround(double(config.n_images) * config.f_train));
  std::size_t n_val =
      std::size_t(std::llround(double(config.n_images) * config.f_val));
  n_train = std::min(n_train, config.n_images);
  n_val = std::min(n_val, config.n_images - n_train);

  for (std::size_t i = 0; i < config.n_images; ++i) {
    ImageRecord rec;
    char buf[32];
    std::snprintf(buf, sizeof buf, "img-%06zu", i);
    rec.image_id = buf;
    rec.features = images[i].features;
    rec.cluster_hint = images[i].hint;
    for (const auto& words : images[i].captions) {
      std::vector<int> ids;
      ids.reserve(words.size() + 2);
      ids.push_back(Vocabulary::kStart);
      for (const auto& w : words) ids.push_back(ds.vocab.id(w));
      ids.push_back(Vocabulary::kEnd);
      rec.captions.push_back(std::move(ids));
    }
    if (i < n_train)
      ds.train.push_back(std::move(rec));
    else if (i < n_train + n_val)
      ds.val.push_back(std::move(rec));
    else
      ds.test.push_back(std::move(rec));
  }
  return ds;
}

std::vector<Batch> epoch_batches(const std::vector<ImageRecord>& images,
                                 std::size_t batch_size, SeededRng& rng) {
  if (batch_size < 2)
    throw DataError("batch_size must be >= 2 so every image has at least one "
                    "unrelated caption");
  if (images.size() < batch_size)
    throw DataError("dataset smaller than batch_size");

  std::vector<std::size_t> order(images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, rng);

  std::vector<Batch> batches;
  std::size_t n_full = images.size() / batch_size;
  for (std::size_t b = 0; b < n_full; ++b) {
    Batch batch;
    for (std::size_t k = 0; k < batch_size; ++k) {
      std::size_t idx = order[b * batch_size + k];
      const auto& caps = images[idx].captions;
      if (caps.empty())
        throw DataError("image without captions: " + images[idx].image_id);
      batch.image_index.push_back(idx);
      batch.caption.push_back(caps[rng.uniform_index(caps.size())]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

namespace {

void validate_record(const ImageRecord& rec, const Dataset& ds,
                     std::size_t line_no) {
  auto fail = [&](const std::string& what) {
    throw DataError("line " + std::to_string(line_no) + ": " + what);
  };
  if (rec.features.size() != ds.d_img) fail("feature dimension mismatch");
  for (double f : rec.features)
    if (!std::isfinite(f)) fail("non-finite feature value");
  if (rec.captions.empty()) fail("image has no captions");
  for (const auto& cap : rec.captions) {
    if (cap.size() < 2 || cap.front() != Vocabulary::kStart ||
        cap.back() != Vocabulary::kEnd)
      fail("caption must begin with START and end with END");
    if (cap.size() - 2 > ds.t_max) fail("caption longer than t_max");
    for (int id : cap)
      if (id < 0 || std::size_t(id) >= ds.vocab.size())
        fail("token id out of vocabulary range");
  }
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);

  json header{{"kind", "header"},
              {"version", 1},
              {"vocab", dataset.vocab.tokens()},
              {"d_img", dataset.d_img},
              {"t_max", dataset.t_max}};
  out << header.dump() << "\n";

  auto write_split = [&](const std::vector<ImageRecord>& images,
                         const char* name) {
    for (const auto& rec : images) {
      json line{{"kind", "image"},
                {"image_id", rec.image_id},
                {"features", rec.features},
                {"captions", rec.captions},
                {"cluster_hint", rec.cluster_hint},
                {"split", name}};
      out << line.dump() << "\n";
    }
  };
  write_split(dataset.train, "train");
  write_split(dataset.val, "val");
  write_split(dataset.test, "test");
  if (!out) throw DataError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path);

  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) +
                      ": malformed JSON (" + e.what() + ")");
    }
    try {
      std::string kind = rec.at("kind").get<std::string>();
      if (!have_header) {
        if (kind != "header")
          throw DataError("first record must be the header");
        if (!rec.at("version").is_number_integer() ||
            rec.at("version").get<int>() != 1)
          throw DataError("unsupported dataset version: " +
                          rec.at("version").dump());
        auto tokens = rec.at("vocab").get<std::vector<std::string>>();
        const auto& reserved = reserved_tokens();
        if (tokens.size() < reserved.size() ||
            !std::equal(reserved.begin(), reserved.end(), tokens.begin()))
          throw DataError("vocabulary must start with the reserved tokens");
        ds.vocab = Vocabulary(
            {tokens.begin() + std::ptrdiff_t(reserved.size()), tokens.end()});
        ds.d_img = rec.at("d_img").get<std::size_t>();
        ds.t_max = rec.at("t_max").get<std::size_t>();
        have_header = true;
        continue;
      }
      if (kind != "image")
        throw DataError("unknown record kind: " + kind);
      ImageRecord img;
      img.image_id = rec.at("image_id").get<std::string>();
      img.features = rec.at("features").get<std::vector<double>>();
      img.captions = rec.at("captions").get<std::vector<std::vector<int>>>();
      img.cluster_hint = rec.value("cluster_hint", std::string());
      validate_record(img, ds, line_no);
      std::string split = rec.at("split").get<std::string>();
      if (split == "train")
        ds.train.push_back(std::move(img));
      else if (split == "val")
        ds.val.push_back(std::move(img));
      else if (split == "test")
        ds.test.push_back(std::move(img));
      else
        throw DataError("unknown split: " + split);
    } catch (const DataError&) {
      throw;
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header)
    throw DataError(path + ": missing dataset header record");
  return ds;
}

}  // namespace calcap
