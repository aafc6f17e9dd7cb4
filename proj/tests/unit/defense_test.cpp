// Copyright 2026 The tfisim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>

#include "../common/oracles.hpp"
#include "tfi/defense_eval.hpp"

namespace tfi {
namespace {

using Vectors = std::vector<std::vector<double>>;

// Two-class sign model on scalar inputs: logits (x, -x).
Network SignModel() {
  Network n = oracle::RandomNetwork("input 1\ndense 2 tap\n", 1);
  n.set_values({1.0, -1.0, 0.0, 0.0});
  return n;
}

// Always predicts `target` among `classes`.
Network ConstantModel(std::size_t classes, int target) {
  Network n = oracle::RandomNetwork("input 1\ndense " + std::to_string(classes) + " tap\n", 1);
  std::vector<double> v(2 * classes, 0.0);
  v[classes + static_cast<std::size_t>(target)] = 1.0;
  n.set_values(v);
  return n;
}

Dataset ScalarSet(std::vector<double> xs, std::vector<int> labels, std::size_t classes) {
  Dataset d;
  d.sample_shape = {1};
  d.classes = classes;
  for (double x : xs) d.images.push_back(Tensor({1}, std::vector<double>{x}));
  d.labels = std::move(labels);
  return d;
}

TEST(MtaTest, MemorizedPermutedAndConstant) {
  const Dataset d = ScalarSet({0.5, 0.2, 0.9, 0.1}, {0, 1, 0, 1}, 2);
  Dataset memorized = d;
  memorized.images[1][0] = -0.2;
  memorized.images[3][0] = -0.1;
  EXPECT_EQ(Mta(SignModel(), memorized), 1.0);
  Dataset permuted = memorized;
  for (int& l : permuted.labels) l = 1 - l;
  EXPECT_EQ(Mta(SignModel(), permuted), 0.0);

  std::vector<double> xs;
  std::vector<int> labels;
  for (int i = 0; i < 64; ++i) xs.push_back(0.1 * i), labels.push_back(i % 8);
  EXPECT_EQ(Mta(ConstantModel(8, 3), ScalarSet(xs, labels, 8)), 0.125);
  EXPECT_THROW(Mta(SignModel(), Dataset{}), ConfigError);
}

TEST(AsrTest, ConstantAndHalfTarget) {
  std::vector<double> xs;
  std::vector<int> labels;
  for (int i = 0; i < 64; ++i) xs.push_back(0.01 * i), labels.push_back(i % 8);
  const Dataset d = ScalarSet(xs, labels, 8);
  EXPECT_EQ(Asr(ConstantModel(8, 2), d, Tensor({1}), 2), 1.0);
  EXPECT_EQ(Asr(ConstantModel(8, 2), d, Tensor({1}), 5), 0.0);

  // Threshold at 0.5 after the shift: two of four non-target inputs cross.
  Network threshold = SignModel();
  threshold.set_values({1.0, -1.0, -0.5, 0.5});
  const Dataset half = ScalarSet({0.1, 0.2, 0.4, 0.6, 0.9}, {1, 1, 1, 1, 0}, 2);
  EXPECT_EQ(Asr(threshold, half, Tensor({1}, std::vector<double>{0.2}), 0), 0.5);
  EXPECT_THROW(Asr(SignModel(), ScalarSet({0.1}, {0}, 2), Tensor({1}), 0), ConfigError);
}

TEST(SimilarityTest, CosineToBenignMean) {
  EXPECT_NEAR(UpdateSimilarity({{2, 2}}, {{1, 0}, {0, 1}}), 1.0, 1e-15);
  EXPECT_NEAR(UpdateSimilarity({{1, -1}}, {{1, 1}}), 0.0, 1e-15);
  EXPECT_NEAR(UpdateSimilarity({{1, 0}}, {{1, 1}}), 0.70711, 1e-5);
  EXPECT_NEAR(UpdateSimilarity({{1, 0}, {0, 1}}, {{1, 0}}), 0.5, 1e-15);
  EXPECT_THROW(UpdateSimilarity({}, {{1, 1}}), ConfigError);
}

TEST(RetentionTest, DpTableArithmetic) {
  // Defended/undefended ASR pairs at sigma 0.10 and 0.05; the reference
  // retentions are 65.8% and 78.5%.
  EXPECT_EQ(std::round(Retention(0.587, 0.892) * 1000.0) / 10.0, 65.8);
  EXPECT_NEAR(Retention(0.701, 0.892) * 100.0, 78.5, 0.1 + 0.05);
  EXPECT_EQ(std::round(Retention(0.701, 0.892) * 1000.0) / 10.0, 78.6);
  EXPECT_EQ(Retention(0.4, 0.4), 1.0);
  EXPECT_THROW(Retention(0.4, 0.0), DegenerateError);
}

Vectors PlantedOutliers(std::uint64_t seed, std::vector<bool>& truth, std::size_t d = 16) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> dir(d);
  for (double& v : dir) v = normal(rng);
  const double len = vec::Norm(dir);
  for (double& v : dir) v /= len;
  Vectors reps(100, std::vector<double>(d));
  truth.assign(100, false);
  for (std::size_t i = 0; i < 100; ++i) {
    for (double& v : reps[i]) v = normal(rng);
    if (i % 10 == 3) {
      truth[i] = true;
      vec::Axpy(5.0, dir, reps[i]);
    }
  }
  return reps;
}

TEST(SpectralTest, PlantedPointsAtExactOrigin) {
  Vectors reps(100, std::vector<double>(4, 0.0));
  std::unique_ptr<bool[]> truth(new bool[100]());
  for (std::size_t i = 90; i < 100; ++i) {
    reps[i] = {0.0, 5.0, 0.0, 0.0};
    truth[i] = true;
  }
  const DetectionReport r = SpectralSignatures(reps, 0.1, {truth.get(), 100});
  EXPECT_EQ(r.flag_count(), 10u);
  EXPECT_EQ(r.detection_rate, 1.0);
  EXPECT_EQ(r.false_positive_rate, 0.0);
}

TEST(SpectralTest, PlantedOutliersInNoise) {
  // Outliers carry the same unit noise as inliers, so totals over 20 seeds
  // are checked: at least 9 of 10 found and at most 2 false alarms per seed.
  int tp = 0, fp = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::vector<bool> truth;
    const Vectors reps = PlantedOutliers(seed, truth);
    const DetectionReport r = SpectralSignatures(reps, 0.1);
    EXPECT_LE(r.flag_count(), 15u);
    for (std::size_t i = 0; i < 100; ++i) {
      if (r.flagged[i]) (truth[i] ? tp : fp) += 1;
    }
  }
  EXPECT_GE(tp, 180);
  EXPECT_LE(fp, 40);
}

TEST(SpectralTest, ScoresAreSquaredTopDirectionProjections) {
  // Centered rows along one axis: the top direction is that axis.
  const Vectors reps{{1, 0}, {-1, 0}, {3, 0}, {-3, 0}};
  const DetectionReport r = SpectralSignatures(reps, 0.0);
  EXPECT_NEAR(r.scores[0], 1.0, 1e-12);
  EXPECT_NEAR(r.scores[2], 9.0, 1e-12);
  EXPECT_EQ(r.flag_count(), 0u);
}

TEST(SpectralTest, IdenticalRepresentationsFlagNothing) {
  const DetectionReport r = SpectralSignatures(Vectors(10, std::vector<double>{1.0, 2.0}), 0.5);
  EXPECT_EQ(r.flag_count(), 0u);
  EXPECT_THROW(SpectralSignatures(Vectors(1, std::vector<double>{1.0}), 0.1), ConfigError);
}

TEST(CosineDetectorTest, ConsensusSignFlipAndVacuousThreshold) {
  const Vectors same(10, std::vector<double>{1.0, 2.0});
  EXPECT_EQ(CosineAnomalyDetector(same, 0.99).flag_count(), 0u);
  Vectors flipped(10, std::vector<double>{1.0, 2.0});
  flipped[4] = {-1.0, -2.0};
  const DetectionReport r = CosineAnomalyDetector(flipped, 0.0);
  EXPECT_EQ(r.flag_count(), 1u);
  EXPECT_TRUE(r.flagged[4]);
  EXPECT_NEAR(r.scores[4], -1.0, 1e-15);
  EXPECT_EQ(CosineAnomalyDetector(flipped, -1.0).flag_count(), 0u);
  EXPECT_THROW(CosineAnomalyDetector(Vectors(2, std::vector<double>{1.0}), 0.5), ConfigError);
}

TEST(CosineDetectorTest, ScoresAgainstTruth) {
  Vectors ups(10, std::vector<double>{1.0, 2.0});
  ups[4] = {-1.0, -2.0};
  std::unique_ptr<bool[]> truth(new bool[10]());
  truth[4] = true;
  truth[5] = true;
  const DetectionReport r = CosineAnomalyDetector(ups, 0.0, {truth.get(), 10});
  EXPECT_EQ(r.detection_rate, 0.5);
  EXPECT_EQ(r.false_positive_rate, 0.0);
}

TEST(FeasibilityTest, MarginArithmetic) {
  FeasibilityLedger ledger;
  ledger.Add({3, 1, 0.5});
  ledger.Add({3, 1, 0.5});
  EXPECT_EQ(FeasibilityMargin(ledger), 3.0);

  FeasibilityLedger benign;
  benign.Add({0, 1, 0.2});
  benign.Add({0, 2, 0.3});
  EXPECT_EQ(FeasibilityMargin(benign), -3.5);
  EXPECT_THROW(FeasibilityMargin(FeasibilityLedger{}), ConfigError);
  EXPECT_THROW(benign.Add({-1, 0, 0}), ConfigError);
}

TEST(FeasibilityTest, MarginDecreasesWithNoise) {
  double prev = std::numeric_limits<double>::infinity();
  for (double xi : {0.0, 0.5, 1.0, 4.0}) {
    FeasibilityLedger l;
    for (int t = 0; t < 5; ++t) l.Add({2.0, 1.0, xi});
    EXPECT_LT(FeasibilityMargin(l), prev);
    prev = FeasibilityMargin(l);
  }
}

TEST(PearsonTest, HandValues) {
  EXPECT_NEAR(Pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{2, 4, 6, 8}), 1.0, 1e-15);
  EXPECT_NEAR(Pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}), 0.5, 1e-15);
  EXPECT_NEAR(Pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-15);
  EXPECT_THROW(Pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ConfigError);
  EXPECT_THROW(Pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateError);
}

}  // namespace
}  // namespace tfi
