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

#include "calcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "calcap/dense_array.hpp"
#include "calcap/errors.hpp"
#include "calcap/numeric.hpp"
#include "calcap/rng.hpp"

namespace calcap {
namespace {

bool reserved_token(int id) {
  return id == Vocabulary::kStart || id == Vocabulary::kEnd ||
         id == Vocabulary::kPad;
}

// Caption body: everything except START, END, and PAD.
std::vector<int> content_tokens(const std::vector<int>& caption) {
  std::vector<int> out;
  for (int id : caption) {
    if (!reserved_token(id)) out.push_back(id);
  }
  return out;
}

double squared_distance(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return d2;
}

std::string format_hash(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// Counts of the caption's n-grams of one order.
std::map<std::vector<int>, std::size_t> ngram_counts(
    const std::vector<int>& body, std::size_t n) {
  std::map<std::vector<int>, std::size_t> counts;
  if (body.size() >= n) {
    for (std::size_t i = 0; i + n <= body.size(); ++i) {
      counts[std::vector<int>(body.begin() + i, body.begin() + i + n)] += 1;
    }
  }
  return counts;
}

}  // namespace

std::string csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

EmbeddingMatrix make_embedding_matrix(
    const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw DataError("embedding matrix needs at least one row");
  EmbeddingMatrix out;
  out.m = rows.size();
  out.n = rows.front().size();
  out.data.reserve(out.m * out.n);
  for (const auto& row : rows) {
    if (row.size() != out.n) {
      throw DataError("embedding rows disagree on dimension");
    }
    out.data.insert(out.data.end(), row.begin(), row.end());
  }
  return out;
}

DiversityReport diversity_sigma(const EmbeddingMatrix& a,
                                std::uint64_t encoder_hash) {
  if (a.m < 2) {
    throw DataError("diversity needs at least 2 embeddings, got " +
                    std::to_string(a.m));
  }
  if (a.n == 0) throw DataError("diversity needs a nonzero dimension");
  if (a.data.size() != a.m * a.n) {
    throw DataError("embedding matrix storage does not match its shape");
  }
  for (double v : a.data) {
    if (!std::isfinite(v)) {
      throw DataError("embedding matrix holds a non-finite value");
    }
  }

  // Shift by the first row before centering: covariance is shift
  // invariant, and identical rows then yield an exactly zero matrix
  // instead of rounding residue.
  std::vector<double> mean(a.n, 0.0);
  for (std::size_t i = 0; i < a.m; ++i) {
    for (std::size_t j = 0; j < a.n; ++j) mean[j] += a.at(i, j) - a.at(0, j);
  }
  for (double& v : mean) v /= double(a.m);

  // Sample covariance of the rows: centered C^T C / (m - 1).
  DenseArray cov = DenseArray::zeros({a.n, a.n});
  for (std::size_t i = 0; i < a.m; ++i) {
    for (std::size_t p = 0; p < a.n; ++p) {
      const double cp = a.at(i, p) - a.at(0, p) - mean[p];
      for (std::size_t q = p; q < a.n; ++q) {
        cov.at(p, q) += cp * (a.at(i, q) - a.at(0, q) - mean[q]);
      }
    }
  }
  for (std::size_t p = 0; p < a.n; ++p) {
    for (std::size_t q = p; q < a.n; ++q) {
      const double v = cov.at(p, q) / double(a.m - 1);
      cov.at(p, q) = v;
      cov.at(q, p) = v;
    }
  }

  DiversityReport report;
  report.spectrum = sym_eigenvalues(cov);
  report.sigma_hat = 0.0;
  for (double s : report.spectrum) report.sigma_hat += std::abs(s);
  report.m = a.m;
  report.n = a.n;
  report.encoder_hash = encoder_hash;
  return report;
}

double distinct_n(const std::vector<std::vector<int>>& captions,
                  std::size_t n) {
  if (n == 0) throw DataError("distinct-n needs n >= 1");
  if (captions.empty()) throw DataError("distinct-n needs a nonempty corpus");
  std::set<std::vector<int>> unique;
  std::size_t total = 0;
  for (const auto& caption : captions) {
    const std::vector<int> body = content_tokens(caption);
    if (body.size() < n) continue;
    for (std::size_t i = 0; i + n <= body.size(); ++i) {
      unique.insert(std::vector<int>(body.begin() + i, body.begin() + i + n));
      ++total;
    }
  }
  if (total == 0) {
    throw DataError("no caption is long enough for " + std::to_string(n) +
                    "-grams");
  }
  return double(unique.size()) / double(total);
}

double bleu4(const std::vector<int>& candidate,
             const std::vector<std::vector<int>>& references) {
  if (references.empty()) throw DataError("bleu needs at least one reference");
  const std::vector<int> cand = content_tokens(candidate);
  if (cand.empty()) return 0.0;

  std::vector<std::vector<int>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(content_tokens(r));

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cand_counts = ngram_counts(cand, n);
    std::size_t matched = 0;
    std::size_t total = 0;
    for (const auto& [gram, count] : cand_counts) {
      std::size_t clip = 0;
      for (const auto& ref : refs) {
        const auto ref_counts = ngram_counts(ref, n);
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) clip = std::max(clip, it->second);
      }
      matched += std::min(count, clip);
      total += count;
    }
    if (n == 1) {
      // total > 0 here since cand is nonempty; unigram precision is
      // never smoothed, so zero overlap zeroes the whole score.
      if (matched == 0) return 0.0;
      log_sum += std::log(double(matched) / double(total));
    } else if (matched == 0) {
      log_sum += std::log(1.0 / double(total + 1));
    } else {
      log_sum += std::log(double(matched) / double(total));
    }
  }

  // Reference length closest to the candidate's; ties pick the shorter.
  std::size_t r_len = refs.front().size();
  for (const auto& ref : refs) {
    const auto diff = [&](std::size_t len) {
      return len > cand.size() ? len - cand.size() : cand.size() - len;
    };
    if (diff(ref.size()) < diff(r_len) ||
        (diff(ref.size()) == diff(r_len) && ref.size() < r_len)) {
      r_len = ref.size();
    }
  }
  double bp = 1.0;
  if (cand.size() < r_len) {
    bp = std::exp(1.0 - double(r_len) / double(cand.size()));
  }
  return bp * std::exp(log_sum / 4.0);
}

RetrievalResult retrieval_recall(const std::vector<ImageRecord>& images,
                                 const std::vector<std::vector<int>>& captions,
                                 const RetrievalScorer& scorer,
                                 const std::vector<std::size_t>& ks) {
  if (images.empty()) throw DataError("retrieval needs images");
  if (captions.size() != images.size()) {
    throw DataError("retrieval needs one caption per image");
  }
  if (ks.empty()) throw DataError("retrieval needs at least one cutoff");
  for (std::size_t k : ks) {
    if (k == 0) throw DataError("retrieval cutoffs must be >= 1");
  }

  RetrievalResult result;
  result.ks = ks;
  result.recall.assign(ks.size(), 0.0);
  for (std::size_t q = 0; q < captions.size(); ++q) {
    std::vector<std::pair<double, const ImageRecord*>> scored;
    scored.reserve(images.size());
    for (const auto& image : images) {
      const double s = scorer(captions[q], image);
      if (!std::isfinite(s)) {
        throw NumericError("retrieval scorer produced a non-finite score");
      }
      scored.emplace_back(s, &image);
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second->image_id < b.second->image_id;
              });
    std::size_t rank = 0;
    while (scored[rank].second != &images[q]) ++rank;
    for (std::size_t j = 0; j < ks.size(); ++j) {
      if (rank < ks[j]) result.recall[j] += 1.0;
    }
  }
  for (double& r : result.recall) r /= double(captions.size());
  return result;
}

KmeansResult kmeans_cluster(const std::vector<std::vector<double>>& points,
                            std::size_t k, std::uint64_t seed) {
  const std::size_t n_points = points.size();
  if (k == 0) throw DataError("k-means needs k >= 1");
  if (n_points < k) {
    throw DataError("k-means needs at least k points, got " +
                    std::to_string(n_points));
  }
  const std::size_t dim = points.front().size();
  if (dim == 0) throw DataError("k-means points need a nonzero dimension");
  for (const auto& p : points) {
    if (p.size() != dim) throw DataError("k-means points disagree on dimension");
    for (double v : p) {
      if (!std::isfinite(v)) throw DataError("k-means point is non-finite");
    }
  }

  SeededRng rng(seed);
  KmeansResult result;
  result.centers.push_back(points[rng.uniform_index(n_points)]);

  // k-means++: sample each next center with probability proportional
  // to the squared distance from the nearest chosen center.
  std::vector<double> d2(n_points, 0.0);
  for (std::size_t i = 0; i < n_points; ++i) {
    d2[i] = squared_distance(points[i], result.centers.front());
  }
  while (result.centers.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      chosen = n_points - 1;
      for (std::size_t i = 0; i < n_points; ++i) {
        acc += d2[i];
        if (u < acc) {
          chosen = i;
          break;
        }
      }
    } else {
      // Every point coincides with a center already. A few uniform
      // redraws look for a distinct point; duplicate centers are
      // acceptable when there is none.
      chosen = rng.uniform_index(n_points);
      for (int attempt = 0; attempt < 8; ++attempt) {
        bool is_center = false;
        for (const auto& c : result.centers) {
          if (points[chosen] == c) {
            is_center = true;
            break;
          }
        }
        if (!is_center) break;
        chosen = rng.uniform_index(n_points);
      }
    }
    result.centers.push_back(points[chosen]);
    for (std::size_t i = 0; i < n_points; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], result.centers.back()));
    }
  }

  const auto nearest = [&](const std::vector<double>& p) {
    std::size_t best = 0;
    double best_d2 = squared_distance(p, result.centers[0]);
    for (std::size_t c = 1; c < result.centers.size(); ++c) {
      const double d = squared_distance(p, result.centers[c]);
      if (d < best_d2) {
        best_d2 = d;
        best = c;
      }
    }
    return best;
  };

  result.assignments.assign(n_points, 0);
  for (std::size_t i = 0; i < n_points; ++i) {
    result.assignments[i] = nearest(points[i]);
  }
  for (int round = 0; round < 100; ++round) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n_points; ++i) {
      const std::size_t c = result.assignments[i];
      counts[c] += 1;
      for (std::size_t j = 0; j < dim; ++j) sums[c][j] += points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // emptied cluster keeps its center
      for (std::size_t j = 0; j < dim; ++j) {
        result.centers[c][j] = sums[c][j] / double(counts[c]);
      }
    }
    bool changed = false;
    for (std::size_t i = 0; i < n_points; ++i) {
      const std::size_t c = nearest(points[i]);
      if (c != result.assignments[i]) {
        result.assignments[i] = c;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return result;
}

CategoryDiversityReport category_diversity_report(
    const std::vector<ImageRecord>& images,
    const std::vector<ModelCaptions>& models, const DiscriminatorParams& encoder,
    std::size_t k, std::uint64_t seed) {
  if (images.empty()) throw DataError("category diversity needs images");
  if (models.empty()) throw DataError("category diversity needs captions");
  for (const auto& model : models) {
    if (model.captions.size() != images.size()) {
      throw DataError("model \"" + model.name +
                      "\" does not caption every image");
    }
  }

  std::vector<std::vector<double>> features;
  features.reserve(images.size());
  for (const auto& image : images) features.push_back(image.features);

  CategoryDiversityReport report;
  report.assignments = kmeans_cluster(features, k, seed).assignments;
  const std::uint64_t encoder_hash = encoder.store.value_hash();

  for (const auto& model : models) {
    std::vector<std::vector<double>> rows;
    rows.reserve(images.size());
    for (const auto& caption : model.captions) {
      rows.push_back(embed_caption(caption, encoder));
    }

    const auto add_row = [&](const std::string& cluster,
                             const std::vector<std::vector<double>>& subset) {
      const DiversityReport d =
          diversity_sigma(make_embedding_matrix(subset), encoder_hash);
      report.rows.push_back(
          {cluster, model.name, d.sigma_hat, d.m, d.n, encoder_hash});
    };

    add_row("All*", rows);
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<std::vector<double>> subset;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (report.assignments[i] == c) subset.push_back(rows[i]);
      }
      if (subset.size() < 2) {
        report.notices.push_back("cluster " + std::to_string(c) +
                                 " skipped for model \"" + model.name +
                                 "\": " + std::to_string(subset.size()) +
                                 " member(s)");
        continue;
      }
      add_row(std::to_string(c), subset);
    }
  }
  return report;
}

WordFrequencyTable word_frequency_table(
    const std::vector<std::vector<int>>& captions, const Vocabulary& vocab,
    std::size_t position_limit, double tail_threshold) {
  if (captions.empty()) throw DataError("word frequencies need captions");
  if (!(tail_threshold >= 0.0 && tail_threshold < 1.0)) {
    throw DataError("tail threshold must lie in [0, 1)");
  }
  for (const auto& caption : captions) {
    if (caption.empty() || caption.front() != Vocabulary::kStart) {
      throw DataError("captions must begin with the start token");
    }
  }

  WordFrequencyTable table;
  table.tail_threshold = tail_threshold;
  table.rows.resize(position_limit + 1);

  std::vector<std::map<int, std::size_t>> counts(position_limit + 1);
  for (const auto& caption : captions) {
    // Tokens past END never count, padded or not.
    std::size_t len = caption.size();
    for (std::size_t t = 0; t < caption.size(); ++t) {
      if (caption[t] == Vocabulary::kEnd) {
        len = t + 1;
        break;
      }
    }
    for (std::size_t t = 0; t < len && t <= position_limit; ++t) {
      counts[t][caption[t]] += 1;
    }
  }

  for (std::size_t t = 0; t <= position_limit; ++t) {
    std::size_t denom = 0;
    for (const auto& [id, c] : counts[t]) denom += c;
    if (denom == 0) continue;
    double tail = 0.0;
    for (const auto& [id, c] : counts[t]) {
      const double freq = double(c) / double(denom);
      if (freq < tail_threshold) {
        tail += freq;
      } else {
        table.rows[t][vocab.token(id)] = freq;
      }
    }
    if (tail > 0.0) table.rows[t]["*"] = tail;
  }
  return table;
}

std::string diversity_rows_csv(const std::vector<DiversityRow>& rows) {
  for (const auto& row : rows) {
    if (row.encoder_hash != rows.front().encoder_hash) {
      throw DataError(
          "diversity rows come from different encoders; "
          "their sigma_hat values are not comparable");
    }
  }
  std::ostringstream out;
  out << "cluster,model,sigma_hat,m,n,encoder_hash\n";
  for (const auto& row : rows) {
    out << row.cluster << ',' << row.model << ','
        << csv_double(row.sigma_hat) << ',' << row.m << ',' << row.n << ','
        << format_hash(row.encoder_hash) << '\n';
  }
  return out.str();
}

std::string word_frequency_csv(const WordFrequencyTable& table) {
  std::ostringstream out;
  out << "position,token,frequency\n";
  for (std::size_t t = 0; t < table.rows.size(); ++t) {
    for (const auto& [token, freq] : table.rows[t]) {
      out << t << ',' << token << ',' << csv_double(freq) << '\n';
    }
  }
  return out.str();
}

}  // namespace calcap
