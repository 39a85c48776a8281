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

#include "calcap/parameter_store.hpp"

#include "calcap/errors.hpp"
#include "calcap/numeric.hpp"

namespace calcap {

DenseArray& ParameterStore::create(const std::string& name,
                                   std::vector<std::size_t> shape) {
  if (index_.count(name))
    throw DataError("ParameterStore: duplicate parameter '" + name + "'");
  index_[name] = entries_.size();
  Entry e;
  e.name = name;
  e.value = DenseArray::zeros(shape);
  e.grad = DenseArray::zeros(std::move(shape));
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw DataError("ParameterStore: unknown parameter '" + name + "'");
  return it->second;
}

DenseArray& ParameterStore::operator[](const std::string& name) {
  return entries_[index_of(name)].value;
}

const DenseArray& ParameterStore::operator[](const std::string& name) const {
  return entries_[index_of(name)].value;
}

DenseArray& ParameterStore::grad(const std::string& name) {
  return entries_[index_of(name)].grad;
}

bool ParameterStore::has(const std::string& name) const {
  return index_.count(name) != 0;
}

void ParameterStore::zero_grads() {
  for (Entry& e : entries_)
    std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
}

void ParameterStore::sgd_step(double lr) {
  if (!grads_finite())
    throw NumericError("ParameterStore: non-finite gradient in sgd_step");
  for (Entry& e : entries_)
    for (std::size_t i = 0; i < e.value.numel(); ++i)
      e.value.data[i] -= lr * e.grad.data[i];
}

std::size_t ParameterStore::total_values() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.numel();
  return n;
}

bool ParameterStore::grads_finite() const {
  for (const Entry& e : entries_)
    if (!e.grad.all_finite()) return false;
  return true;
}

void ParameterStore::init_uniform(SeededRng& rng, double range) {
  for (Entry& e : entries_)
    for (double& v : e.value.data) v = rng.uniform(-range, range);
}

std::uint64_t ParameterStore::value_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Entry& e : entries_) {
    h = fnv1a(e.name.data(), e.name.size(), h);
    for (std::size_t d : e.value.shape) {
      std::uint64_t dd = d;
      h = fnv1a(&dd, sizeof dd, h);
    }
    h = fnv1a_doubles(e.value.data, h);
  }
  return h;
}

}  // namespace calcap
