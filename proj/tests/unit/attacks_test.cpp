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
#include "tfi/architectures.hpp"
#include "tfi/attacks.hpp"
#include "tfi/data.hpp"
#include "tfi/defense_eval.hpp"
#include "tfi/parallel.hpp"

namespace tfi {
namespace {

TEST(AttackMethodTest, NamesRoundTrip) {
  for (const char* name : {"none", "tfi", "mr", "dba", "lp"}) {
    EXPECT_EQ(AttackMethodName(ParseAttackMethod(name)), name);
  }
  EXPECT_THROW(ParseAttackMethod("tfl"), ConfigError);
}

TEST(ClientValueTest, ProductOrUnknown) {
  EXPECT_DOUBLE_EQ(*ClientValue(0.01, 1.0), 0.01);
  EXPECT_NEAR(*ClientValue(0.02, 1.8), 0.036, 1e-15);
  EXPECT_FALSE(ClientValue(0.02, std::nullopt).has_value());
  EXPECT_FALSE(ClientValue(0.02, std::numeric_limits<double>::infinity()).has_value());
}

TEST(SelectClientsTest, CountBoundTakesHighestValues) {
  EXPECT_EQ(SelectClients({{1, 0.1, 0.3}, {2, 0.1, 0.5}}, {1, std::nullopt}), (std::vector<int>{2}));
  EXPECT_EQ(SelectClients({{0, 0.1, 0.5}, {1, 0.1, 0.4}, {2, 0.1, 0.3}}, {2, std::nullopt}),
            (std::vector<int>{0, 1}));
  EXPECT_EQ(SelectClients({{4, 0.1, 0.5}, {3, 0.1, 0.5}, {2, 0.1, 0.1}}, {1, std::nullopt}),
            (std::vector<int>{3}));
}

TEST(SelectClientsTest, WeightCapSkipsOverflow) {
  const std::vector<Candidate> c{{0, 0.03, 0.9}, {1, 0.03, 0.8}, {2, 0.01, 0.7}};
  EXPECT_EQ(SelectClients(c, {std::nullopt, 0.05}), (std::vector<int>{0, 2}));
  EXPECT_EQ(SelectClients(c, {1, 0.05}), (std::vector<int>{0}));
  EXPECT_THROW(SelectClients(c, {}), ConfigError);
  EXPECT_THROW(SelectClients({}, {1, std::nullopt}), ConfigError);
  EXPECT_THROW(AttackBudget({5, std::nullopt}).Validate(3), ConfigError);
}

TEST(BaseStrengthTest, RatioWithClamp) {
  EXPECT_EQ(BaseStrength(2.0, 0.3, 2.0), 0.3);
  EXPECT_EQ(BaseStrength(0.5, 0.3, 2.0), 0.6);
  EXPECT_EQ(BaseStrength(0.01, 0.3, 2.0), 0.6);
  EXPECT_EQ(BaseStrength(4.0, 0.3, 2.0), 0.15);
  EXPECT_THROW(BaseStrength(0.0, 0.3, 2.0), ConfigError);
}

TEST(ScheduleTest, ExponentialRamp) {
  const TemporalSchedule s{2.0, 0.1};
  EXPECT_EQ(s.Intensity(0), 0.0);
  EXPECT_NEAR(s.Intensity(10), 0.63212055882855767 * 2.0, 1e-9);
  EXPECT_NEAR(s.Intensity(250), 2.0, 1e-9);
  EXPECT_THROW(s.Intensity(-1), ConfigError);
  EXPECT_THROW((TemporalSchedule{0.0, 0.1}).Validate(), ConfigError);
}

TEST(RoundStrengthTest, FactorProduct) {
  EXPECT_EQ(RoundStrength(0.7, 0.3, 0.3, 1.0, 1), 0.7);
  EXPECT_EQ(RoundStrength(0.7, 0.6, 0.3, 0.5, 2), 0.35);
  EXPECT_EQ(RoundStrength(0.7, 0.3, 0.3, TemporalSchedule{}.Intensity(0), 1), 0.0);
  EXPECT_EQ(RoundStrength(0.7, 0.3, 0.3, 1.0, 0), 0.0);
}

std::vector<Example> GrayBatch(std::size_t n) {
  std::vector<Example> b;
  for (std::size_t i = 0; i < n; ++i) b.push_back({Tensor({3, 16, 16}, 0.5), static_cast<int>(1 + i % 7)});
  return b;
}

TEST(PoisonTfiTest, CountsAndEmbedding) {
  const Trigger t{TriggerSpec{}};
  auto batch = GrayBatch(32);
  PoisonBatchTfi(batch, t.fractal(), EmbeddingSpec{}, 2.0, 0, 0.5);
  int relabeled = 0;
  for (std::size_t j = 0; j < 32; ++j) {
    const bool poisoned = std::get<int>(batch[j].target) == 0;
    relabeled += poisoned;
    const double moved = (batch[j].input - Tensor({3, 16, 16}, 0.5)).Norm();
    if (poisoned) {
      EXPECT_GT(moved, 0.0);
    } else {
      EXPECT_EQ(moved, 0.0);
    }
  }
  EXPECT_EQ(relabeled, 16);
}

TEST(PoisonTfiTest, ZeroFractionAndZeroStrength) {
  const Trigger t{TriggerSpec{}};
  auto batch = GrayBatch(8);
  const auto before = batch;
  PoisonBatchTfi(batch, t.fractal(), EmbeddingSpec{}, 2.0, 0, 0.0);
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(batch[j].input, before[j].input);
    EXPECT_EQ(batch[j].target, before[j].target);
  }
  PoisonBatchTfi(batch, t.fractal(), EmbeddingSpec{}, 0.0, 0, 1.0);
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(batch[j].input, before[j].input);
    EXPECT_EQ(std::get<int>(batch[j].target), 0);
  }
}

TEST(PoisonCountTest, CeilingWithoutRepresentationDrift) {
  EXPECT_EQ(PoisonCount(0.5, 32), 16u);
  EXPECT_EQ(PoisonCount(0.1, 30), 3u);
  EXPECT_EQ(PoisonCount(0.1, 31), 4u);
  EXPECT_EQ(PoisonCount(1.0, 7), 7u);
  EXPECT_THROW(PoisonCount(1.5, 7), ConfigError);
}

TEST(ModelReplacementTest, ExactReplacementAndScaling) {
  const std::vector<double> target{1.0, -2.0, 0.5}, global{0.5, 0.5, 0.5};
  const auto u1 = ModelReplacementUpdate(target, global, 1.0);
  Rng rng(1);
  const auto alone = Aggregate(global, {u1}, std::vector<double>{1.0}, AggregationRule::FedAvg(), rng);
  EXPECT_EQ(alone.params, target);
  const auto u2 = ModelReplacementUpdate(target, global, 0.5);
  EXPECT_NEAR(vec::Norm(u2), 2.0 * vec::Norm(u1), 1e-15);

  std::vector<std::vector<double>> ups(10, std::vector<double>(3, 0.0));
  ups[0] = ModelReplacementUpdate(target, global, 0.1);
  const auto mixed = Aggregate(global, ups, std::vector<double>(10, 1.0), AggregationRule::FedAvg(), rng);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(mixed.params[i], target[i], 1e-15);
}

TEST(DbaTest, QuadrantsPartitionThePatch) {
  const Tensor patch = StaticPatch({3, 16, 16}, 3, 1.0);
  Tensor sum({3, 16, 16});
  for (int q = 0; q < 4; ++q) {
    const Tensor part = PatchQuadrant(patch, q);
    for (std::size_t i = 0; i < part.size(); ++i) {
      if (part[i] != 0.0) {
        EXPECT_EQ(sum[i], 0.0);
      }
    }
    sum += part;
  }
  EXPECT_EQ(sum, patch);
  // 3x3 box split at row/column 2: quadrant 0 is 2x2, quadrant 3 is 1x1.
  EXPECT_NEAR(PatchQuadrant(patch, 0).SquaredNorm(), 4.0 / 9.0, 1e-15);
  EXPECT_NEAR(PatchQuadrant(patch, 3).SquaredNorm(), 1.0 / 9.0, 1e-15);
  EXPECT_THROW(PatchQuadrant(patch, 4), ConfigError);
}

TEST(DbaTest, QuadrantZeroLeavesOtherPixels) {
  const Tensor patch = StaticPatch({3, 16, 16}, 4, 2.0);
  auto batch = GrayBatch(4);
  PoisonBatchDba(batch, patch, 0, 0, 1.0);
  const Tensor part = PatchQuadrant(patch, 0);
  for (const Example& e : batch) {
    EXPECT_EQ(std::get<int>(e.target), 0);
    for (std::size_t i = 0; i < part.size(); ++i) {
      if (part[i] == 0.0) {
        EXPECT_EQ(e.input[i], 0.5);
      } else {
        EXPECT_NE(e.input[i], 0.5);
      }
    }
  }
}

// Four malicious clients each train with one quadrant; the composed patch
// should trigger the backdoor more reliably than any single quadrant.
TEST(DbaTest, ComposedPatchBeatsSingleQuadrants) {
  ProceduralSpec ds;
  ds.train_size = 800;
  ds.test_size = 200;
  ds.probe_size = 1;
  ds.image_size = 16;
  ds.seed = 3;
  const DatasetSplits data = MakeProcedural(ds);
  auto arch = BuildArchitecture("plain_cnn", {3, 16, 16}, 8);
  Network net = Network::Initialize(arch, 1);
  const Tensor patch = StaticPatch({3, 16, 16}, 4, 3.0);
  TrainingConfig cfg;
  cfg.local_epochs = 1;
  cfg.batch_size = 16;
  cfg.momentum = 0.9;
  const std::size_t clients = 8;
  for (int round = 0; round < 15; ++round) {
    std::vector<std::vector<double>> ups(clients);
    ParallelFor(clients, 2, [&](std::size_t c) {
      std::vector<Example> shard;
      for (std::size_t i = c; i < data.train.size(); i += clients) {
        shard.push_back({data.train.images[i], data.train.labels[i]});
      }
      const int q = static_cast<int>(c);
      const Poisoner p = [&](std::vector<Example>& b) { PoisonBatchDba(b, patch, q, 0, 0.25); };
      ups[c] = LocalTrain(net, shard, cfg, 0.05, DeriveSeed(1, "local", {c, static_cast<std::uint64_t>(round)}),
                          c < 4 ? &p : nullptr).delta;
    });
    Rng rng(1);
    net.set_values(Aggregate(net.params().values, ups, std::vector<double>(clients, 1.0),
                             AggregationRule::FedAvg(), rng).params);
  }
  const double full = Asr(net, data.test, patch, 0);
  for (int q = 0; q < 4; ++q) EXPECT_GT(full, Asr(net, data.test, PatchQuadrant(patch, q), 0)) << q;
  EXPECT_GT(full, Asr(net, data.test, Tensor(patch.shape()), 0));
}

TEST(LabelFlipTest, CountsAndInputsUntouched) {
  auto batch = GrayBatch(32);
  const auto before = batch;
  PoisonBatchLabels(batch, 0.25, 0);
  int flipped = 0;
  for (std::size_t j = 0; j < 32; ++j) {
    EXPECT_EQ(batch[j].input, before[j].input);
    flipped += std::get<int>(batch[j].target) == 0;
  }
  EXPECT_EQ(flipped, 8);
  const auto flipped_once = batch;
  PoisonBatchLabels(batch, 0.0, 5);
  for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(batch[j].target, flipped_once[j].target);
  PoisonBatchLabels(batch, 1.0, 5);
  for (const Example& e : batch) EXPECT_EQ(std::get<int>(e.target), 5);
}

}  // namespace
}  // namespace tfi
