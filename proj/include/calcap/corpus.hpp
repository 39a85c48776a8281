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

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "calcap/rng.hpp"

namespace calcap {

// Token ids 0..3 are reserved in every vocabulary. The grammar must
// never produce their surface forms.
class Vocabulary {
 public:
  static constexpr int kStart = 0;
  static constexpr int kEnd = 1;
  static constexpr int kPad = 2;
  static constexpr int kUnk = 3;

  Vocabulary();
  // Appends the given tokens after the 4 reserved ones, in order.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  // Unknown surface forms map to kUnk.
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Frequency-thresholded vocabulary over whitespace-tokenized captions.
// Order: frequency descending, ties lexicographic. Tokens below
// min_freq are dropped (they encode as UNK later).
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t min_freq = 1);

struct ImageRecord {
  std::string image_id;
  std::vector<double> features;
  // Each caption is [START, content..., END], content length <= t_max.
  std::vector<std::vector<int>> captions;
  std::string cluster_hint;
};

struct Dataset {
  Vocabulary vocab;
  std::size_t d_img = 0;
  std::size_t t_max = 0;
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> val;
  std::vector<ImageRecord> test;

  const std::vector<ImageRecord>& split(const std::string& name) const;
};

struct AttributeValue {
  std::string canon;
  std::vector<std::string> surfaces;
};

struct Attribute {
  std::string name;
  std::vector<AttributeValue> values;
};

std::vector<Attribute> default_attributes();
std::vector<std::string> default_templates();

struct WorldConfig {
  std::size_t n_images = 700;
  double f_train = 5.0 / 7;
  double f_val = 1.0 / 7;
  double f_test = 1.0 / 7;
  std::size_t d_img = 16;
  std::size_t t_max = 12;
  std::size_t captions_per_image = 5;
  std::size_t vocab_threshold = 1;
  std::size_t max_vocab = 64;
  double jitter_sigma = 0.1;
  std::uint64_t seed = 1;
  std::vector<Attribute> attributes = default_attributes();
  std::vector<std::string> templates = default_templates();
};

// Feature vectors are one-hot attribute blocks plus Gaussian jitter.
// Attribute combinations are assigned by cycling a seeded shuffle of
// the full cross product, so small worlds get near-distinct combos.
Dataset generate_world(const WorldConfig& config);

struct Batch {
  std::vector<std::size_t> image_index;
  std::vector<std::vector<int>> caption;
};

// One epoch of full batches: shuffled image order, one sampled human
// caption per image, trailing partial batch dropped. Callers treat the
// other members of a batch as the unrelated captions.
std::vector<Batch> epoch_batches(const std::vector<ImageRecord>& images,
                                 std::size_t batch_size, SeededRng& rng);

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace calcap
