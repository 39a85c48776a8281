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
#include <map>
#include <string>
#include <vector>

#include "calcap/corpus.hpp"
#include "calcap/discriminator.hpp"

namespace calcap {

// Row-major m x n matrix of caption embeddings, one caption per row.
struct EmbeddingMatrix {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<double> data;

  double at(std::size_t i, std::size_t j) const { return data[i * n + j]; }
};

EmbeddingMatrix make_embedding_matrix(
    const std::vector<std::vector<double>>& rows);

struct DiversityReport {
  double sigma_hat = 0.0;
  std::vector<double> spectrum;  // descending eigenvalues of the covariance
  std::size_t m = 0;
  std::size_t n = 0;
  std::uint64_t encoder_hash = 0;
};

// Overall embedding variance: the absolute eigenvalue sum of the
// sample covariance (mean-centered, 1/(m-1)) of the rows. Zero exactly
// when all rows are identical. Needs m >= 2.
DiversityReport diversity_sigma(const EmbeddingMatrix& a,
                                std::uint64_t encoder_hash = 0);

// Unique n-grams / total n-grams over the caption bodies (START, END,
// and PAD never count). Rejects corpora with no n-gram of this length.
double distinct_n(const std::vector<std::vector<int>>& captions,
                  std::size_t n);

// Geometric mean of clipped 1..4-gram precisions with brevity penalty.
// Zero-numerator precisions for n >= 2 are smoothed add-one; a
// candidate with an empty body scores 0.
double bleu4(const std::vector<int>& candidate,
             const std::vector<std::vector<int>>& references);

struct RetrievalResult {
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // aligned with ks
};

using RetrievalScorer =
    std::function<double(const std::vector<int>&, const ImageRecord&)>;

// Each caption queries the whole image set; images rank by score
// descending with ties broken by image_id. recall[j] is the fraction
// of captions whose own image lands in the top ks[j].
RetrievalResult retrieval_recall(const std::vector<ImageRecord>& images,
                                 const std::vector<std::vector<int>>& captions,
                                 const RetrievalScorer& scorer,
                                 const std::vector<std::size_t>& ks);

struct KmeansResult {
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centers;
};

// k-means++ seeding, Lloyd iterations until fixpoint or 100 rounds,
// fully determined by the seed. Assignment ties and emptied clusters
// keep the lowest index / previous center.
KmeansResult kmeans_cluster(const std::vector<std::vector<double>>& points,
                            std::size_t k, std::uint64_t seed);

struct DiversityRow {
  std::string cluster;  // "0".."k-1" or "All*"
  std::string model;
  double sigma_hat = 0.0;
  std::size_t m = 0;
  std::size_t n = 0;
  std::uint64_t encoder_hash = 0;
};

struct ModelCaptions {
  std::string name;
  std::vector<std::vector<int>> captions;  // captions[i] describes images[i]
};

struct CategoryDiversityReport {
  std::vector<DiversityRow> rows;
  std::vector<std::size_t> assignments;  // image -> cluster
  std::vector<std::string> notices;      // skipped clusters etc.
};

// Clusters the image features, embeds every model's captions with the
// one shared encoder, and reports sigma_hat per cluster plus an All*
// row per model. Clusters with fewer than 2 members are skipped with a
// notice.
CategoryDiversityReport category_diversity_report(
    const std::vector<ImageRecord>& images,
    const std::vector<ModelCaptions>& models,
    const DiscriminatorParams& encoder, std::size_t k, std::uint64_t seed);

struct WordFrequencyTable {
  double tail_threshold = 0.005;
  // rows[t]: token surface -> frequency at position t; tokens under
  // the threshold are pooled into "*". Nonempty rows sum to 1.
  std::vector<std::map<std::string, double>> rows;
};

// Positional token frequencies over [START, ..., END] captions;
// position 0 is always {START: 1}. Positions past a caption's END
// contribute nothing. rows covers t = 0..position_limit.
WordFrequencyTable word_frequency_table(
    const std::vector<std::vector<int>>& captions, const Vocabulary& vocab,
    std::size_t position_limit, double tail_threshold = 0.005);

// Full round-trip decimal form; equal doubles always emit equal bytes,
// which keeps rerun artifacts byte-identical.
std::string csv_double(double v);

// `cluster,model,sigma_hat,m,n,encoder_hash` rows. Rows from different
// encoders must never share a table; mixing is rejected.
std::string diversity_rows_csv(const std::vector<DiversityRow>& rows);

// `position,token,frequency` rows.
std::string word_frequency_csv(const WordFrequencyTable& table);

}  // namespace calcap
