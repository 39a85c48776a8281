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

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "calcap/errors.hpp"
#include "calcap/generator.hpp"
#include "calcap/metrics.hpp"
#include "calcap/numeric.hpp"
#include "calcap/rng.hpp"

using namespace calcap;

namespace {

constexpr int kS = Vocabulary::kStart;
constexpr int kE = Vocabulary::kEnd;
constexpr int kP = Vocabulary::kPad;

EmbeddingMatrix random_matrix(std::size_t m, std::size_t n, SeededRng& rng) {
  std::vector<std::vector<double>> rows(m, std::vector<double>(n, 0.0));
  for (auto& row : rows) {
    for (double& v : row) v = rng.uniform(-2.0, 2.0);
  }
  return make_embedding_matrix(rows);
}

// Independent sigma oracle: the covariance trace, straight from the
// per-column sample variances without any eigensolve.
double covariance_trace(const EmbeddingMatrix& a) {
  double trace = 0.0;
  for (std::size_t j = 0; j < a.n; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < a.m; ++i) mean += a.at(i, j);
    mean /= double(a.m);
    double ss = 0.0;
    for (std::size_t i = 0; i < a.m; ++i) {
      const double d = a.at(i, j) - mean;
      ss += d * d;
    }
    trace += ss / double(a.m - 1);
  }
  return trace;
}

std::vector<std::vector<double>> matrix_rows(const EmbeddingMatrix& a) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < a.m; ++i) {
    rows.emplace_back(a.data.begin() + i * a.n, a.data.begin() + (i + 1) * a.n);
  }
  return rows;
}

std::vector<int> cap(std::initializer_list<int> content) {
  std::vector<int> out{kS};
  out.insert(out.end(), content.begin(), content.end());
  out.push_back(kE);
  return out;
}

ImageRecord image_at(const std::string& id, std::vector<double> features) {
  ImageRecord rec;
  rec.image_id = id;
  rec.features = std::move(features);
  return rec;
}

}  // namespace

TEST_CASE("diversity rejects degenerate input") {
  CHECK_THROWS_AS(make_embedding_matrix({}), DataError);
  CHECK_THROWS_AS(make_embedding_matrix({{1.0, 2.0}, {1.0}}), DataError);
  CHECK_THROWS_AS(diversity_sigma(make_embedding_matrix({{1.0, 2.0}})),
                  DataError);
  const auto bad = make_embedding_matrix(
      {{1.0, 0.0}, {0.0, std::numeric_limits<double>::quiet_NaN()}});
  CHECK_THROWS_AS(diversity_sigma(bad), DataError);
}

TEST_CASE("identical embeddings have zero diversity") {
  const std::vector<double> row{0.3, -1.2, 4.0};
  const auto a = make_embedding_matrix({row, row, row, row, row});
  const auto report = diversity_sigma(a, 0x1234);
  CHECK(report.sigma_hat == 0.0);
  CHECK(report.m == 5);
  CHECK(report.n == 3);
  CHECK(report.encoder_hash == 0x1234);
  REQUIRE(report.spectrum.size() == 3);
  for (double s : report.spectrum) CHECK(s == 0.0);
}

TEST_CASE("hand-worked two-point diversity") {
  // Rows (1,0) and (0,1): covariance [[0.5,-0.5],[-0.5,0.5]],
  // eigenvalues {1, 0}, so sigma_hat is exactly 1.
  const auto report =
      diversity_sigma(make_embedding_matrix({{1.0, 0.0}, {0.0, 1.0}}));
  CHECK(report.sigma_hat == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(report.spectrum.size() == 2);
  CHECK(report.spectrum[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(report.spectrum[1]) < 1e-12);
}

TEST_CASE("sigma_hat equals the covariance trace") {
  SeededRng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(11);
    const std::size_t n = 1 + rng.uniform_index(6);
    const auto a = random_matrix(m, n, rng);
    const auto report = diversity_sigma(a);
    CHECK(std::abs(report.sigma_hat - covariance_trace(a)) < 1e-9);
    REQUIRE(report.spectrum.size() == n);
    for (std::size_t j = 1; j < n; ++j) {
      CHECK(report.spectrum[j - 1] >= report.spectrum[j]);
    }
  }
}

TEST_CASE("sigma_hat ignores row order") {
  SeededRng rng(42);
  const auto a = random_matrix(9, 5, rng);
  auto rows = matrix_rows(a);
  const double base = diversity_sigma(a).sigma_hat;
  for (int trial = 0; trial < 5; ++trial) {
    seeded_shuffle(rows, rng);
    const double shuffled =
        diversity_sigma(make_embedding_matrix(rows)).sigma_hat;
    CHECK(std::abs(shuffled - base) < 1e-9);
  }
}

TEST_CASE("duplicating a row never shrinks the scatter sum") {
  SeededRng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(9);
    const auto a = random_matrix(m, 4, rng);
    auto rows = matrix_rows(a);
    const double scatter_before =
        diversity_sigma(a).sigma_hat * double(m - 1);
    rows.push_back(rows[rng.uniform_index(m)]);
    const double scatter_after =
        diversity_sigma(make_embedding_matrix(rows)).sigma_hat * double(m);
    CHECK(scatter_after >=
          scatter_before - 1e-9 * std::max(1.0, scatter_before));
  }
}

TEST_CASE("appending the mean row rescales sigma_hat exactly") {
  SeededRng rng(44);
  const auto a = random_matrix(7, 3, rng);
  std::vector<double> mean(a.n, 0.0);
  for (std::size_t i = 0; i < a.m; ++i) {
    for (std::size_t j = 0; j < a.n; ++j) mean[j] += a.at(i, j);
  }
  for (double& v : mean) v /= double(a.m);

  auto rows = matrix_rows(a);
  rows.push_back(mean);
  const double before = diversity_sigma(a).sigma_hat;
  const double after = diversity_sigma(make_embedding_matrix(rows)).sigma_hat;
  // The mean row adds nothing to the scatter; only 1/(m-1) changes.
  CHECK(after == doctest::Approx(before * double(a.m - 1) / double(a.m))
                     .epsilon(1e-9));
}

TEST_CASE("distinct-n oracle values") {
  CHECK(distinct_n({cap({4, 5, 6})}, 1) == 1.0);
  CHECK(distinct_n({cap({4, 5}), cap({4, 5})}, 2) == 0.5);
  CHECK(distinct_n({cap({4}), cap({5})}, 1) == 1.0);
  // Reserved tokens never form n-grams.
  CHECK(distinct_n({{kS, 4, kE, kP, kP}}, 1) == 1.0);
  CHECK_THROWS_AS(distinct_n({{kS, 4, kE, kP, kP}}, 2), DataError);
  CHECK_THROWS_AS(distinct_n({cap({4, 5, 6})}, 4), DataError);
  CHECK_THROWS_AS(distinct_n({}, 1), DataError);
  CHECK_THROWS_AS(distinct_n({cap({4})}, 0), DataError);
}

TEST_CASE("bleu4 oracle values") {
  const auto long_ref = cap({4, 5, 6, 7, 8});

  SUBCASE("identity scores 1") {
    CHECK(bleu4(long_ref, {long_ref}) == doctest::Approx(1.0).epsilon(1e-12));
    // Shorter than 4 tokens: the empty 4-gram precision is smoothed,
    // so self-comparison still scores 1.
    CHECK(bleu4(cap({4, 5, 6}), {cap({4, 5, 6})}) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("zero unigram overlap scores 0") {
    CHECK(bleu4(cap({9, 10, 11, 12}), {long_ref}) == 0.0);
  }

  SUBCASE("hand-worked value") {
    // Candidate and reference share a 4-token prefix and differ on the
    // last word: precisions 4/5, 3/4, 2/3, 1/2 and no brevity penalty,
    // so the score is 0.2^(1/4) = 0.66874...
    const double got = bleu4(cap({4, 5, 6, 7, 8}), {cap({4, 5, 6, 7, 9})});
    CHECK(got == doctest::Approx(std::pow(0.2, 0.25)).epsilon(1e-12));
    CHECK(got == doctest::Approx(0.66874).epsilon(1e-4));
  }

  SUBCASE("brevity penalty") {
    // Perfect precisions but one token short of the reference.
    const double got = bleu4(cap({4, 5, 6, 7}), {cap({4, 5, 6, 7, 9})});
    CHECK(got == doctest::Approx(std::exp(-0.25)).epsilon(1e-12));
  }

  SUBCASE("candidate and reference roles differ") {
    const double a = bleu4(cap({4, 5, 6, 7}), {cap({4, 5, 6, 7, 9})});
    const double b = bleu4(cap({4, 5, 6, 7, 9}), {cap({4, 5, 6, 7})});
    CHECK(a != b);
  }

  SUBCASE("repeated candidate words are clipped") {
    // "4 4" against "4 5": unigram 1/2 after clipping, smoothed higher
    // orders, no brevity penalty.
    const double got = bleu4(cap({4, 4}), {cap({4, 5})});
    CHECK(got == doctest::Approx(std::pow(0.25, 0.25)).epsilon(1e-12));
  }

  SUBCASE("closest reference length, ties toward shorter") {
    // Candidate length 3 between references of lengths 2 and 4: the
    // tie picks 2, so no brevity penalty applies.
    const double got =
        bleu4(cap({4, 5, 6}), {cap({4, 5}), cap({4, 5, 6, 7})});
    CHECK(got == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("empty candidate body scores 0") {
    CHECK(bleu4({kS, kE}, {long_ref}) == 0.0);
  }

  SUBCASE("no references rejected") {
    CHECK_THROWS_AS(bleu4(long_ref, {}), DataError);
  }
}

TEST_CASE("retrieval recall oracles") {
  std::vector<ImageRecord> images;
  std::vector<std::vector<int>> captions;
  for (int i = 0; i < 5; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "img%03d", i);
    images.push_back(image_at(id, {double(i), 1.0}));
    captions.push_back(cap({4 + i}));
  }

  SUBCASE("single image is always found") {
    const auto r = retrieval_recall({images[0]}, {captions[0]},
                                    [](const auto&, const auto&) { return 0.0; },
                                    {1, 5});
    CHECK(r.recall[0] == 1.0);
    CHECK(r.recall[1] == 1.0);
  }

  SUBCASE("perfect scorer ranks the true image first") {
    const auto scorer = [&](const std::vector<int>& caption,
                            const ImageRecord& image) {
      // Caption q encodes token 4+q; image features encode its index.
      return caption[1] == 4 + int(image.features[0]) ? 1.0 : 0.0;
    };
    const auto r = retrieval_recall(images, captions, scorer, {1});
    CHECK(r.recall[0] == 1.0);
  }

  SUBCASE("constant scores rank by image id") {
    const auto r = retrieval_recall(
        images, captions, [](const auto&, const auto&) { return 0.5; },
        {1, 3, 5});
    // Query q's own image sits at rank q under the id tie-break.
    CHECK(r.recall[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(r.recall[1] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(r.recall[2] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("recall is monotone in k") {
    SeededRng rng(7);
    const auto scorer = [&](const std::vector<int>&, const ImageRecord&) {
      return rng.uniform();
    };
    const auto r = retrieval_recall(images, captions, scorer, {1, 2, 3, 4, 5});
    for (std::size_t j = 1; j < r.recall.size(); ++j) {
      CHECK(r.recall[j] >= r.recall[j - 1]);
    }
    CHECK(r.recall.back() == 1.0);
  }

  SUBCASE("random scorer matches the k/N expectation") {
    std::vector<ImageRecord> many;
    std::vector<std::vector<int>> their_caps;
    for (int i = 0; i < 10; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "rnd%03d", i);
      many.push_back(image_at(id, {double(i)}));
      their_caps.push_back(cap({4 + i}));
    }
    double hits = 0.0;
    const int runs = 40;
    for (int s = 0; s < runs; ++s) {
      SeededRng rng(100 + s);
      const auto scorer = [&](const std::vector<int>&, const ImageRecord&) {
        return rng.uniform();
      };
      hits += retrieval_recall(many, their_caps, scorer, {1}).recall[0];
    }
    const double mean = hits / double(runs);
    // 400 near-independent Bernoulli(0.1) trials; 3 sigma ~ 0.045.
    CHECK(std::abs(mean - 0.1) < 0.045);
  }

  SUBCASE("input validation") {
    const auto zero = [](const std::vector<int>&, const ImageRecord&) {
      return 0.0;
    };
    CHECK_THROWS_AS(retrieval_recall(images, {captions[0]}, zero, {1}),
                    DataError);
    CHECK_THROWS_AS(retrieval_recall(images, captions, zero, {}), DataError);
    CHECK_THROWS_AS(retrieval_recall(images, captions, zero, {0}), DataError);
    const auto bad = [](const std::vector<int>&, const ImageRecord&) {
      return std::numeric_limits<double>::quiet_NaN();
    };
    CHECK_THROWS_AS(retrieval_recall(images, captions, bad, {1}),
                    NumericError);
  }
}

TEST_CASE("k-means oracle behaviour") {
  SUBCASE("k equal to point count separates everything") {
    std::vector<std::vector<double>> points;
    for (int i = 0; i < 6; ++i) points.push_back({double(3 * i), 0.0});
    const auto r = kmeans_cluster(points, points.size(), 5);
    std::set<std::size_t> seen(r.assignments.begin(), r.assignments.end());
    CHECK(seen.size() == points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      CHECK(r.centers[r.assignments[i]] == points[i]);
    }
  }

  SUBCASE("identical points collapse to their own value") {
    const std::vector<std::vector<double>> points(4, {1.5, -2.0});
    const auto one = kmeans_cluster(points, 1, 9);
    for (std::size_t a : one.assignments) CHECK(a == 0);
    CHECK(one.centers[0] == points[0]);
    // k=2 on identical points survives seeding with no spread.
    const auto two = kmeans_cluster(points, 2, 9);
    for (std::size_t a : two.assignments) CHECK(a == 0);
  }

  SUBCASE("well-separated blobs are recovered") {
    SeededRng rng(11);
    std::vector<std::vector<double>> points;
    for (int i = 0; i < 30; ++i) {
      points.push_back({rng.gaussian() * 0.5, rng.gaussian() * 0.5});
    }
    for (int i = 0; i < 30; ++i) {
      points.push_back({20.0 + rng.gaussian() * 0.5, rng.gaussian() * 0.5});
    }
    const auto r = kmeans_cluster(points, 2, 1);
    for (int i = 1; i < 30; ++i) {
      CHECK(r.assignments[i] == r.assignments[0]);
      CHECK(r.assignments[30 + i] == r.assignments[30]);
    }
    CHECK(r.assignments[0] != r.assignments[30]);
  }

  SUBCASE("same seed, same clustering") {
    SeededRng rng(12);
    std::vector<std::vector<double>> points;
    for (int i = 0; i < 25; ++i) {
      points.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3)});
    }
    const auto a = kmeans_cluster(points, 4, 77);
    const auto b = kmeans_cluster(points, 4, 77);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centers == b.centers);
  }

  SUBCASE("input validation") {
    const std::vector<std::vector<double>> points{{0.0}, {1.0}};
    CHECK_THROWS_AS(kmeans_cluster(points, 0, 1), DataError);
    CHECK_THROWS_AS(kmeans_cluster(points, 3, 1), DataError);
    CHECK_THROWS_AS(kmeans_cluster({{0.0}, {1.0, 2.0}}, 1, 1), DataError);
    CHECK_THROWS_AS(
        kmeans_cluster({{0.0}, {std::numeric_limits<double>::infinity()}}, 1,
                       1),
        DataError);
  }
}

namespace {

DiscriminatorParams tiny_encoder(std::uint64_t seed) {
  DiscriminatorDims dims;
  dims.vocab = 10;
  dims.d_img = 2;
  dims.d_e = 3;
  dims.d_emb = 3;
  SeededRng rng(seed);
  return make_discriminator(dims, rng);
}

}  // namespace

TEST_CASE("category diversity report") {
  // Two far-apart feature blobs, sizes 4 and 2.
  std::vector<ImageRecord> images;
  std::vector<double> offsets{0.0, 0.1, -0.1, 0.2, 30.0, 30.1};
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "cat%03zu", i);
    images.push_back(image_at(id, {offsets[i], 0.5}));
  }

  ModelCaptions varied{"varied", {}};
  ModelCaptions constant{"constant", {}};
  for (std::size_t i = 0; i < images.size(); ++i) {
    varied.captions.push_back(cap({int(4 + i), int(4 + (i + 1) % 6)}));
    constant.captions.push_back(cap({4, 5}));
  }

  const auto encoder = tiny_encoder(21);
  const auto report =
      category_diversity_report(images, {varied, constant}, encoder, 2, 3);

  REQUIRE(report.assignments.size() == images.size());
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(report.assignments[i] == report.assignments[0]);
  }
  CHECK(report.assignments[5] == report.assignments[4]);
  CHECK(report.assignments[4] != report.assignments[0]);

  // Per model: one All* row plus one row per 2+ member cluster.
  REQUIRE(report.rows.size() == 6);
  CHECK(report.rows[0].cluster == "All*");
  CHECK(report.rows[0].model == "varied");
  CHECK(report.rows[3].cluster == "All*");
  CHECK(report.rows[3].model == "constant");
  CHECK(report.notices.empty());

  const std::uint64_t expected_hash = encoder.store.value_hash();
  for (const auto& row : report.rows) {
    CHECK(row.encoder_hash == expected_hash);
    CHECK(row.n == encoder.dims.d_emb);
  }
  CHECK(report.rows[0].m == images.size());

  SUBCASE("constant captions have zero diversity everywhere") {
    for (std::size_t r = 3; r < 6; ++r) {
      CHECK(report.rows[r].sigma_hat == 0.0);
    }
    CHECK(report.rows[0].sigma_hat > 0.0);
  }

  SUBCASE("the All* row matches a direct computation") {
    std::vector<std::vector<double>> rows;
    for (const auto& caption : varied.captions) {
      rows.push_back(embed_caption(caption, encoder));
    }
    const auto direct = diversity_sigma(make_embedding_matrix(rows));
    CHECK(report.rows[0].sigma_hat == direct.sigma_hat);
  }

  SUBCASE("clusters below 2 members are skipped with a notice") {
    // Shrink the far blob to one image: cluster sizes become 4 and 1.
    std::vector<ImageRecord> fewer(images.begin(), images.end() - 1);
    ModelCaptions model{"varied", {}};
    for (std::size_t i = 0; i < fewer.size(); ++i) {
      model.captions.push_back(varied.captions[i]);
    }
    const auto skipped =
        category_diversity_report(fewer, {model}, encoder, 2, 3);
    REQUIRE(skipped.notices.size() == 1);
    CHECK(skipped.notices[0].find("skipped") != std::string::npos);
    REQUIRE(skipped.rows.size() == 2);
    CHECK(skipped.rows[0].cluster == "All*");
    CHECK(skipped.rows[1].m == 4);
  }

  SUBCASE("csv emission and the encoder guard") {
    const auto csv = diversity_rows_csv(report.rows);
    CHECK(csv.rfind("cluster,model,sigma_hat,m,n,encoder_hash\n", 0) == 0);
    CHECK(csv.find("All*,varied,") != std::string::npos);
    CHECK(csv.find("All*,constant,") != std::string::npos);

    auto mixed = report.rows;
    mixed[1].encoder_hash ^= 1;
    CHECK_THROWS_AS(diversity_rows_csv(mixed), DataError);
  }

  SUBCASE("caption count mismatch is rejected") {
    ModelCaptions broken{"broken", {cap({4})}};
    CHECK_THROWS_AS(
        category_diversity_report(images, {broken}, encoder, 2, 3), DataError);
  }
}

TEST_CASE("word frequency table") {
  const Vocabulary vocab({"a", "cat", "dog"});
  const int a = vocab.id("a"), cat = vocab.id("cat"), dog = vocab.id("dog");

  SUBCASE("positional frequencies") {
    const auto table = word_frequency_table(
        {cap({a, cat}), cap({a, dog})}, vocab, 3, 0.0);
    REQUIRE(table.rows.size() == 4);
    CHECK(table.rows[0] == std::map<std::string, double>{{"<s>", 1.0}});
    CHECK(table.rows[1] == std::map<std::string, double>{{"a", 1.0}});
    CHECK(table.rows[2].at("cat") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(table.rows[2].at("dog") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(table.rows[3] == std::map<std::string, double>{{"</s>", 1.0}});
    for (const auto& row : table.rows) {
      double sum = 0.0;
      for (const auto& [token, freq] : row) sum += freq;
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }

  SUBCASE("positions past END contribute nothing") {
    // First caption ends at position 2; its padding must not count.
    const auto table = word_frequency_table(
        {{kS, a, kE, kP, kP}, cap({a, cat, dog})}, vocab, 6, 0.0);
    CHECK(table.rows[2].at("</s>") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(table.rows[2].at("cat") == doctest::Approx(0.5).epsilon(1e-12));
    // Only the longer caption reaches positions 3 and 4.
    CHECK(table.rows[3] == std::map<std::string, double>{{"dog", 1.0}});
    CHECK(table.rows[4] == std::map<std::string, double>{{"</s>", 1.0}});
    CHECK(table.rows[5].empty());
    CHECK(table.rows[6].empty());
  }

  SUBCASE("rare words pool into the tail bucket") {
    std::vector<std::vector<int>> captions(399, cap({a}));
    captions.push_back(cap({cat}));
    const auto table = word_frequency_table(captions, vocab, 1, 0.005);
    CHECK(table.rows[1].at("a") ==
          doctest::Approx(399.0 / 400.0).epsilon(1e-12));
    CHECK(table.rows[1].at("*") ==
          doctest::Approx(1.0 / 400.0).epsilon(1e-12));
    CHECK(table.rows[1].count("cat") == 0);
  }

  SUBCASE("input validation") {
    CHECK_THROWS_AS(word_frequency_table({}, vocab, 3), DataError);
    CHECK_THROWS_AS(word_frequency_table({{a, kE}}, vocab, 3), DataError);
    CHECK_THROWS_AS(word_frequency_table({cap({a})}, vocab, 3, 1.0),
                    DataError);
  }

  SUBCASE("csv emission") {
    const auto table =
        word_frequency_table({cap({a, cat}), cap({a, dog})}, vocab, 1, 0.0);
    CHECK(word_frequency_csv(table) ==
          "position,token,frequency\n0,<s>,1\n1,a,1\n");
  }
}

TEST_CASE("sampled one-step frequencies match the policy") {
  // A one-step generator's position-1 frequencies are binomial draws
  // from the exact next-word distribution.
  GeneratorDims dims;
  dims.vocab = 8;
  dims.d_img = 2;
  dims.d_z = 1;
  dims.d_e = 2;
  dims.d_h = 2;
  dims.t_max = 1;
  SeededRng init(31);
  const auto params = make_generator(dims, init);
  const std::vector<double> features{0.4, -0.7};

  const auto [probs, state] =
      decoder_step(init_state(features, {}, params), Vocabulary::kStart,
                   params);

  const int n_samples = 2000;
  SeededRng rng(32);
  std::vector<std::vector<int>> captions;
  for (int i = 0; i < n_samples; ++i) {
    captions.push_back(
        sample_from_prefix(features, {}, {kS}, params, rng, 1.0).tokens);
  }

  const Vocabulary vocab({"w4", "w5", "w6", "w7"});
  const auto table = word_frequency_table(captions, vocab, 1, 0.0);
  for (int id = 0; id < int(dims.vocab); ++id) {
    if (id == kS || id == kP) continue;
    const auto it = table.rows[1].find(vocab.token(id));
    const double observed = it == table.rows[1].end() ? 0.0 : it->second;
    const double p = probs[id];
    const double bound =
        3.0 * std::sqrt(p * (1.0 - p) / double(n_samples)) + 1e-12;
    CHECK(std::abs(observed - p) <= bound);
  }
}
