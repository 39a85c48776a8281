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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "calcap/corpus.hpp"
#include "calcap/errors.hpp"
#include "calcap/numeric.hpp"

using namespace calcap;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

WorldConfig tiny_config() {
  WorldConfig c;
  c.attributes = {
      {"object", {{"cat", {"cat"}}, {"dog", {"dog"}}}},
      {"color", {{"red", {"red"}}, {"blue", {"blue"}}}},
  };
  c.templates = {"a {color} {object}"};
  c.d_img = 4;
  c.t_max = 5;
  c.n_images = 1;
  c.f_train = 1;
  c.f_val = 0;
  c.f_test = 0;
  c.seed = 3;
  return c;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
  if (a.vocab.tokens() != b.vocab.tokens()) return false;
  if (a.d_img != b.d_img || a.t_max != b.t_max) return false;
  auto split_equal = [](const std::vector<ImageRecord>& x,
                        const std::vector<ImageRecord>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].image_id != y[i].image_id) return false;
      if (x[i].features != y[i].features) return false;
      if (x[i].captions != y[i].captions) return false;
      if (x[i].cluster_hint != y[i].cluster_hint) return false;
    }
    return true;
  };
  return split_equal(a.train, b.train) && split_equal(a.val, b.val) &&
         split_equal(a.test, b.test);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

TEST_CASE("vocabulary reserves ids 0-3 and round-trips") {
  Vocabulary v({"cat", "dog"});
  CHECK(v.size() == 6);
  CHECK(v.id("<s>") == Vocabulary::kStart);
  CHECK(v.id("</s>") == Vocabulary::kEnd);
  CHECK(v.id("<pad>") == Vocabulary::kPad);
  CHECK(v.id("<unk>") == Vocabulary::kUnk);
  CHECK(v.id("cat") == 4);
  CHECK(v.token(5) == "dog");
  CHECK(v.id("zebra") == Vocabulary::kUnk);
  CHECK_THROWS_AS(v.token(6), DataError);
  for (int i = 0; i < int(v.size()); ++i) CHECK(v.id(v.token(i)) == i);
}

TEST_CASE("build_vocabulary thresholds and orders deterministically") {
  std::vector<std::vector<std::string>> corpus{{"a", "cat"}, {"a", "cat"}};
  Vocabulary v = build_vocabulary(corpus, 1);
  CHECK(v.size() == 6);
  CHECK(v.id("a") == 4);  // equal frequency, lexicographic tie-break
  CHECK(v.id("cat") == 5);

  Vocabulary strict = build_vocabulary(corpus, 3);
  CHECK(strict.size() == 4);
  CHECK(strict.id("cat") == Vocabulary::kUnk);

  std::vector<std::vector<std::string>> skew{{"b", "b", "b"}, {"a", "a"}};
  Vocabulary w = build_vocabulary(skew, 1);
  CHECK(w.id("b") == 4);  // higher frequency first
  CHECK(w.id("a") == 5);

  CHECK(build_vocabulary(corpus, 1).hash() == v.hash());
  CHECK_THROWS_AS(build_vocabulary({{"<pad>"}}, 1), DataError);
}

TEST_CASE("degenerate grammar yields identical captions") {
  Dataset ds = generate_world(tiny_config());
  REQUIRE(ds.train.size() == 1);
  REQUIRE(ds.train[0].captions.size() == 5);
  for (const auto& cap : ds.train[0].captions)
    CHECK(cap == ds.train[0].captions[0]);
  CHECK(ds.train[0].captions[0].front() == Vocabulary::kStart);
  CHECK(ds.train[0].captions[0].back() == Vocabulary::kEnd);
}

TEST_CASE("generate_world is byte-identical for a fixed seed") {
  WorldConfig c;
  c.n_images = 40;
  c.seed = 7;
  Dataset a = generate_world(c);
  Dataset b = generate_world(c);
  save_dataset(a, "tmp_world_a.jsonl");
  save_dataset(b, "tmp_world_b.jsonl");
  CHECK(slurp("tmp_world_a.jsonl") == slurp("tmp_world_b.jsonl"));
  std::remove("tmp_world_a.jsonl");
  std::remove("tmp_world_b.jsonl");

  c.seed = 8;
  Dataset other = generate_world(c);
  CHECK_FALSE(datasets_equal(a, other));
}

TEST_CASE("attribute combinations stay near-distinct in small worlds") {
  WorldConfig c;
  c.n_images = 200;
  c.f_train = 1;
  c.f_val = 0;
  c.f_test = 0;
  c.seed = 11;
  Dataset ds = generate_world(c);
  std::set<std::string> combos;
  for (const auto& img : ds.train) combos.insert(img.cluster_hint);
  CHECK(double(combos.size()) / double(ds.train.size()) >= 0.95);
}

TEST_CASE("feature geometry tracks attribute overlap") {
  WorldConfig c;
  c.n_images = 700;
  c.seed = 5;
  Dataset ds = generate_world(c);
  std::vector<const ImageRecord*> all;
  for (const auto& r : ds.train) all.push_back(&r);
  for (const auto& r : ds.val) all.push_back(&r);
  for (const auto& r : ds.test) all.push_back(&r);

  double same_sum = 0.0;
  std::size_t same_n = 0;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      auto hi = split_on(all[i]->cluster_hint, '|');
      auto hj = split_on(all[j]->cluster_hint, '|');
      std::size_t diffs = 0;
      for (std::size_t k = 0; k < hi.size(); ++k) diffs += hi[k] != hj[k];
      double cos = cosine_similarity(all[i]->features, all[j]->features);
      if (diffs == 0) {
        same_sum += cos;
        ++same_n;
      } else if (diffs >= 2) {
        CHECK(cos < 0.9);
      }
    }
  REQUIRE(same_n > 0);  // 700 images over 256 combos must repeat
  CHECK(same_sum / double(same_n) > 0.95);
}

TEST_CASE("every caption re-parses against the grammar") {
  WorldConfig c;
  c.n_images = 50;
  c.seed = 13;
  Dataset ds = generate_world(c);
  auto attrs = default_attributes();
  auto templates = default_templates();

  std::vector<const ImageRecord*> all;
  for (const auto& r : ds.train) all.push_back(&r);
  for (const auto& r : ds.val) all.push_back(&r);
  for (const auto& r : ds.test) all.push_back(&r);

  for (const ImageRecord* img : all) {
    auto canon = split_on(img->cluster_hint, '|');
    REQUIRE(canon.size() == attrs.size());
    for (const auto& cap : img->captions) {
      std::vector<std::string> words;
      for (std::size_t k = 1; k + 1 < cap.size(); ++k)
        words.push_back(ds.vocab.token(cap[k]));

      bool matched_any = false;
      for (const auto& tmpl : templates) {
        std::istringstream in(tmpl);
        std::vector<std::string> slots;
        std::string tok;
        while (in >> tok) slots.push_back(tok);
        if (slots.size() != words.size()) continue;
        bool ok = true;
        for (std::size_t k = 0; k < slots.size() && ok; ++k) {
          if (slots[k].front() != '{') {
            ok = slots[k] == words[k];
            continue;
          }
          std::string attr_name = slots[k].substr(1, slots[k].size() - 2);
          bool surface_ok = false;
          for (std::size_t a = 0; a < attrs.size(); ++a) {
            if (attrs[a].name != attr_name) continue;
            for (const auto& val : attrs[a].values) {
              if (val.canon != canon[a]) continue;
              for (const auto& s : val.surfaces) surface_ok |= s == words[k];
            }
          }
          ok = surface_ok;
        }
        matched_any |= ok;
      }
      CHECK(matched_any);
    }
  }
}

TEST_CASE("epoch_batches shapes, determinism, and partial-batch drop") {
  WorldConfig c;
  c.n_images = 7;
  c.f_train = 1;
  c.f_val = 0;
  c.f_test = 0;
  c.seed = 2;
  Dataset ds = generate_world(c);

  SeededRng rng(21);
  auto batches = epoch_batches(ds.train, 3, rng);
  CHECK(batches.size() == 2);  // 7 images, batch 3: partial dropped
  for (const auto& b : batches) {
    CHECK(b.image_index.size() == 3);
    CHECK(b.caption.size() == 3);
    for (const auto& cap : b.caption) {
      CHECK(cap.front() == Vocabulary::kStart);
      CHECK(cap.back() == Vocabulary::kEnd);
    }
  }

  SeededRng r1(33), r2(33);
  auto b1 = epoch_batches(ds.train, 2, r1);
  auto b2 = epoch_batches(ds.train, 2, r2);
  REQUIRE(b1.size() == b2.size());
  for (std::size_t i = 0; i < b1.size(); ++i) {
    CHECK(b1[i].image_index == b2[i].image_index);
    CHECK(b1[i].caption == b2[i].caption);
  }

  CHECK_THROWS_AS(epoch_batches(ds.train, 1, rng), DataError);
  CHECK_THROWS_AS(epoch_batches(ds.train, 8, rng), DataError);
}

TEST_CASE("dataset JSONL round-trip is lossless") {
  WorldConfig c;
  c.n_images = 20;
  c.seed = 17;
  Dataset ds = generate_world(c);
  save_dataset(ds, "tmp_roundtrip.jsonl");
  Dataset back = load_dataset("tmp_roundtrip.jsonl");
  CHECK(datasets_equal(ds, back));

  save_dataset(back, "tmp_roundtrip2.jsonl");
  CHECK(slurp("tmp_roundtrip.jsonl") == slurp("tmp_roundtrip2.jsonl"));
  std::remove("tmp_roundtrip.jsonl");
  std::remove("tmp_roundtrip2.jsonl");
}

TEST_CASE("loader rejects malformed lines with the line number") {
  WorldConfig c = tiny_config();
  Dataset ds = generate_world(c);
  save_dataset(ds, "tmp_bad.jsonl");
  {
    std::ofstream out("tmp_bad.jsonl", std::ios::app);
    out << "{\"kind\":\"image\"\n";  // truncated record
  }
  try {
    load_dataset("tmp_bad.jsonl");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::remove("tmp_bad.jsonl");
}

TEST_CASE("loader rejects unknown versions") {
  {
    std::ofstream out("tmp_ver.jsonl");
    out << "{\"kind\":\"header\",\"version\":9,\"vocab\":[\"<s>\",\"</s>\","
           "\"<pad>\",\"<unk>\"],\"d_img\":4,\"t_max\":5}\n";
  }
  try {
    load_dataset("tmp_ver.jsonl");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  std::remove("tmp_ver.jsonl");
}

TEST_CASE("world config validation") {
  WorldConfig c = tiny_config();
  c.d_img = 5;
  CHECK_THROWS_AS(generate_world(c), DataError);

  c = tiny_config();
  c.f_val = 0.5;
  CHECK_THROWS_AS(generate_world(c), DataError);

  c = tiny_config();
  c.t_max = 2;  // template renders 3 tokens
  CHECK_THROWS_AS(generate_world(c), DataError);

  c = tiny_config();
  c.max_vocab = 5;
  CHECK_THROWS_AS(generate_world(c), DataError);
}
