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

#include <functional>
#include <span>
#include <vector>

#include "calcap/dense_array.hpp"
#include "calcap/rng.hpp"

namespace calcap {

/// Numerically stable softmax (max-subtraction). Rejects empty or
/// non-finite input. Output is nonnegative and sums to 1 within 1e-12.
std::vector<double> softmax(std::span<const double> logits);

/// In-place variant writing into `out` (resized to logits.size()).
void softmax_into(std::span<const double> logits, std::vector<double>& out);

/// Cosine similarity clamped to [-1, 1]. A zero-norm side yields 0 and
/// sets *zero_norm when provided. Length mismatch is rejected.
double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         bool* zero_norm = nullptr);

/// Eigenvalues of a symmetric matrix, sorted descending, via cyclic
/// Jacobi sweeps (off-diagonal tolerance 1e-12, at most 100 sweeps).
/// Asymmetry beyond `symmetry_tol` is rejected. Values in
/// [-psd_clamp, 0) are clamped to 0 so PSD spectra stay nonnegative.
std::vector<double> sym_eigenvalues(const DenseArray& m,
                                    double symmetry_tol = 1e-10,
                                    double psd_clamp = 1e-10);

/// Draws an index from a probability vector using exactly one uniform
/// draw. Negative entries are rejected; the vector must sum to 1
/// within 1e-9.
std::size_t sample_categorical(std::span<const double> probs, SeededRng& rng);

/// One analytic-vs-numeric probe: the loss at a point together with
/// the analytic gradient there.
struct GradProbe {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Central-difference gradient verification. `f` must be pure in its
/// argument. Returns the max over coordinates of
///   |analytic - central difference| / max(1, |analytic|).
/// Non-finite losses during probing are rejected.
double grad_check(const std::function<GradProbe(const std::vector<double>&)>& f,
                  std::vector<double> point, double step);

/// FNV-1a over a byte view; the project's content-hash primitive.
std::uint64_t fnv1a(const void* bytes, std::size_t n,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);

std::uint64_t fnv1a_doubles(std::span<const double> values,
                            std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hash_hex(std::uint64_t h);

}  // namespace calcap
