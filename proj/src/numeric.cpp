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

#include "calcap/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "calcap/errors.hpp"

namespace calcap {

void softmax_into(std::span<const double> logits, std::vector<double>& out) {
  if (logits.empty()) throw NumericError("softmax: empty input");
  double mx = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
    mx = std::max(mx, v);
  }
  out.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out;
  softmax_into(logits, out);
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         bool* zero_norm) {
  if (a.size() != b.size())
    throw NumericError("cosine_similarity: length mismatch (" +
                       std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()) + ")");
  if (zero_norm) *zero_norm = false;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    if (zero_norm) *zero_norm = true;
    return 0.0;
  }
  double s = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(s, -1.0, 1.0);
}

std::vector<double> sym_eigenvalues(const DenseArray& m, double symmetry_tol,
                                    double psd_clamp) {
  if (m.rank() != 2 || m.rows() != m.cols())
    throw NumericError("sym_eigenvalues: matrix must be square");
  const std::size_t n = m.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m.at(i, j) - m.at(j, i)) > symmetry_tol)
        throw NumericError("sym_eigenvalues: asymmetry at (" +
                           std::to_string(i) + "," + std::to_string(j) +
                           ") beyond tolerance");

  // Work on the symmetrized copy; cyclic Jacobi rotations.
  std::vector<double> a(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      a[i * n + j] = 0.5 * (m.at(i, j) + m.at(j, i));

  const double tol = 1e-12;
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (std::sqrt(off) <= tol) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a[p * n + q];
        if (std::abs(apq) <= tol * 1e-3) continue;
        double app = a[p * n + p];
        double aqq = a[q * n + q];
        double theta = (aqq - app) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a[k * n + p];
          double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a[p * n + k];
          double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }

  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = a[i * n + i];
    if (v < 0.0 && v >= -psd_clamp) v = 0.0;
    eig[i] = v;
  }
  std::sort(eig.begin(), eig.end(), std::greater<double>());
  return eig;
}

std::size_t sample_categorical(std::span<const double> probs, SeededRng& rng) {
  if (probs.empty()) throw NumericError("sample_categorical: empty input");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0))
      throw NumericError("sample_categorical: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw NumericError("sample_categorical: probabilities sum to " +
                       std::to_string(sum));
  double u = rng.uniform();
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last_positive;  // rounding spill lands on the last nonzero entry
}

double grad_check(const std::function<GradProbe(const std::vector<double>&)>& f,
                  std::vector<double> point, double step) {
  if (!(step > 0.0 && step <= 1e-2))
    throw NumericError("grad_check: step must lie in (0, 1e-2]");
  GradProbe probe = f(point);
  if (!std::isfinite(probe.loss))
    throw NumericError("grad_check: non-finite loss at the base point");
  if (probe.grad.size() != point.size())
    throw NumericError("grad_check: gradient length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = point[i];
    point[i] = orig + step;
    double up = f(point).loss;
    point[i] = orig - step;
    double dn = f(point).loss;
    point[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(dn))
      throw NumericError("grad_check: non-finite loss while probing");
    double numeric = (up - dn) / (2.0 * step);
    double analytic = probe.grad[i];
    double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
    worst = std::max(worst, err);
  }
  return worst;
}

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_doubles(std::span<const double> values, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = fnv1a(&bits, sizeof bits, h);
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[std::size_t(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace calcap
