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

#include <map>
#include <string>
#include <vector>

#include "calcap/dense_array.hpp"
#include "calcap/rng.hpp"

namespace calcap {

/// Named, shape-tagged trainable arrays with gradient slots.
/// Registration order is the canonical iteration order, so updates,
/// hashes, and serialized forms are deterministic.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    DenseArray value;
    DenseArray grad;
  };

  DenseArray& create(const std::string& name, std::vector<std::size_t> shape);
  DenseArray& operator[](const std::string& name);
  const DenseArray& operator[](const std::string& name) const;
  DenseArray& grad(const std::string& name);
  bool has(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads();
  /// value -= lr * grad for every entry; rejects non-finite gradients.
  void sgd_step(double lr);

  std::size_t total_values() const;
  bool grads_finite() const;

  /// Seeded uniform(-range, range) init over every entry, in order.
  void init_uniform(SeededRng& rng, double range);

  /// FNV-1a over names, shapes, and value bits.
  std::uint64_t value_hash() const;

 private:
  std::size_t index_of(const std::string& name) const;

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace calcap
