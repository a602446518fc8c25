#include <gtest/gtest.h>

#include <cmath>

#include "leo/metrics.hpp"
#include "support/oracles.hpp"

using leo::EvalScene;
using leo::GtTriplet;
using leo::TripletPrediction;

namespace {

leo::SceneScores two_objects(std::vector<double> pred_probs) {
  leo::SceneScores s;
  s.object_ids = {4, 9};
  s.gt_classes = {1, 0};
  s.num_object_classes = 2;
  s.object_probs = {0.3, 0.7, 0.9, 0.1};
  s.edges = {{0, 1}, {1, 0}};
  s.num_predicate_columns = 4;
  s.predicate_probs = std::move(pred_probs);
  return s;
}

// Three objects, four predicates, every (pair, predicate) scored; see the
// expectations in HandcraftedTable below.
EvalScene handcrafted() {
  EvalScene s;
  const std::pair<int, int> pairs[] = {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}};
  for (int pi = 0; pi < 6; ++pi)
    for (int p = 0; p < 4; ++p) {
      const auto [i, j] = pairs[pi];
      s.predictions.push_back({i, j, p, 0.01 * (pi * 4 + p + 1), i, j});
    }
  const auto set = [&](int i, int j, int p, double score) {
    for (auto& c : s.predictions)
      if (c.subject_id == i && c.object_id == j && c.predicate_id == p) c.score = score;
  };
  set(0, 1, 2, 0.9);
  set(0, 1, 0, 0.8);
  set(1, 2, 1, 0.7);
  set(2, 0, 3, 0.6);
  s.gt = {{0, 1, 0, 0, 1}, {0, 1, 2, 0, 1}, {1, 2, 1, 1, 2}, {2, 1, 3, 2, 1}};
  return s;
}

}  // namespace

TEST(ScoreTriplets, EveryPairAndPredicateExceptNone) {
  const auto s = two_objects({0.1, 0.2, 0.3, 0.4, 0.5, 0.1, 0.1, 0.3});
  const auto c = leo::score_triplets(s, leo::EvalTask::kPredCls);
  ASSERT_EQ(c.size(), 6u);
  for (const auto& t : c) EXPECT_LT(t.predicate_id, 3);
  EXPECT_EQ(c[0].subject_id, 4);
  EXPECT_EQ(c[0].subject_class, 1);  // ground-truth classes in PredCls
  EXPECT_DOUBLE_EQ(c[4].score, 0.1);
}

TEST(ScoreTriplets, SgClsMultipliesObjectConfidences) {
  const auto s = two_objects({0.1, 0.2, 0.3, 0.4, 0.5, 0.1, 0.1, 0.3});
  const auto c = leo::score_triplets(s, leo::EvalTask::kSgCls);
  EXPECT_EQ(c[0].subject_class, 1);
  EXPECT_EQ(c[0].object_class, 0);
  EXPECT_DOUBLE_EQ(c[1].score, 0.7 * 0.2 * 0.9);
  EXPECT_DOUBLE_EQ(c[3].score, 0.9 * 0.5 * 0.7);
}

TEST(ScoreTriplets, MismatchedTableThrows) {
  EXPECT_THROW(leo::score_triplets(two_objects({0.1, 0.2}), leo::EvalTask::kPredCls), leo::ShapeError);
}

TEST(RankTriplets, UniformScoresFallBackToLexicographicOrder) {
  const auto c = leo::score_triplets(two_objects(std::vector<double>(8, 0.25)), leo::EvalTask::kPredCls);
  const auto ranked = leo::rank_triplets(c, false);
  ASSERT_EQ(ranked.size(), 6u);
  for (std::size_t r = 1; r < ranked.size(); ++r) {
    const auto& a = ranked[r - 1];
    const auto& b = ranked[r];
    EXPECT_LT(std::tie(a.subject_id, a.object_id, a.predicate_id), std::tie(b.subject_id, b.object_id, b.predicate_id));
  }
  const auto best = leo::rank_triplets(c, true);
  ASSERT_EQ(best.size(), 2u);
  EXPECT_EQ(best[0].predicate_id, 0);
}

TEST(Recall, ConstrainedModeCapsTwoLabelsOnOnePairAtOneHalf) {
  EvalScene s;
  s.predictions = {{0, 1, 0, 0.9, 0, 0}, {0, 1, 1, 0.8, 0, 0}, {1, 0, 0, 0.1, 0, 0}, {1, 0, 1, 0.1, 0, 0}};
  s.gt = {{0, 1, 0, 0, 0}, {0, 1, 1, 0, 0}};
  const std::vector<EvalScene> scenes = {s};
  for (std::size_t k : {1, 2, 5, 100}) EXPECT_LE(leo::recall_at_k(scenes, k, true), 0.5);
  EXPECT_EQ(leo::recall_at_k(scenes, 2, false), 1.0);
}

TEST(Recall, HandcraftedTable) {
  const std::vector<EvalScene> scenes = {handcrafted()};
  ASSERT_EQ(scenes[0].predictions.size(), 24u);
  EXPECT_EQ(leo::recall_at_k(scenes, 1, false), 0.25);
  EXPECT_EQ(leo::recall_at_k(scenes, 3, false), 0.75);
  EXPECT_EQ(leo::recall_at_k(scenes, 5, false), 1.0);
  EXPECT_EQ(leo::recall_at_k(scenes, 1, true), 0.25);
  EXPECT_EQ(leo::recall_at_k(scenes, 3, true), 0.5);
  EXPECT_EQ(leo::recall_at_k(scenes, 5, true), 0.75);
  EXPECT_EQ(leo::recall_at_k(scenes, 50, true), 0.75);
  for (std::size_t k : {1, 2, 3, 4, 5, 6, 24})
    for (bool c : {true, false}) EXPECT_EQ(leo::recall_at_k(scenes, k, c), oracle::recall(scenes, k, c)) << k << c;
}

TEST(Recall, ClassMismatchIsAMiss) {
  auto s = handcrafted();
  s.gt[1].subject_class = 2;
  const std::vector<EvalScene> scenes = {s};
  EXPECT_EQ(leo::recall_at_k(scenes, 1, false), 0.0);
}

TEST(Recall, ScenesWithoutGroundTruthAreSkipped) {
  EvalScene empty;
  empty.predictions = {{0, 1, 0, 0.5, 0, 0}};
  const std::vector<EvalScene> scenes = {handcrafted(), empty};
  EXPECT_EQ(leo::recall_at_k(scenes, 1, false), 0.25);
  EXPECT_THROW(leo::recall_at_k(scenes, 0, false), leo::ValidationError);
}

TEST(MeanRecall, TwoClassesHalfRecalled) {
  EvalScene s;
  s.predictions = {{0, 1, 0, 0.9, 0, 0}, {0, 1, 1, 0.1, 0, 0}, {1, 0, 0, 0.2, 0, 0}, {1, 0, 1, 0.3, 0, 0}};
  s.gt = {{0, 1, 0, 0, 0}, {1, 0, 0, 0, 0}};
  const std::vector<EvalScene> scenes = {s};
  // predicate 0 recalls 1 of 2 at k=1; it is the only class present.
  EXPECT_EQ(leo::mean_recall_at_k(scenes, 1, true), 0.5);
  s.gt = {{0, 1, 0, 0, 0}, {1, 0, 1, 0, 0}};
  const std::vector<EvalScene> two = {s};
  EXPECT_EQ(leo::mean_recall_at_k(two, 1, true), 0.5);
}

TEST(MeanRecall, SingleClassSingleSceneEqualsRecall) {
  EvalScene s = handcrafted();
  for (auto& g : s.gt) g.predicate_id = 1;
  for (auto& p : s.predictions) p.predicate_id = 1;
  const std::vector<EvalScene> scenes = {s};
  for (std::size_t k : {1, 3, 5}) EXPECT_EQ(leo::mean_recall_at_k(scenes, k, false), leo::recall_at_k(scenes, k, false));
}

TEST(MeanRecall, PoolsHitsAcrossScenes) {
  EvalScene a, b;
  a.predictions = {{0, 1, 0, 0.9, 0, 0}};
  a.gt = {{0, 1, 0, 0, 0}};
  b.predictions = {{0, 1, 0, 0.9, 0, 0}, {0, 2, 0, 0.8, 0, 0}, {0, 3, 0, 0.7, 0, 0}};
  b.gt = {{0, 2, 0, 0, 0}, {0, 3, 0, 0, 0}, {0, 1, 0, 0, 0}};
  const std::vector<EvalScene> scenes = {a, b};
  // Pooled: 2 hits of 4, not the mean of per-scene recalls (1 and 1/3).
  EXPECT_EQ(leo::mean_recall_at_k(scenes, 1, true), 0.5);
  EXPECT_DOUBLE_EQ(leo::recall_at_k(scenes, 1, true), (1.0 + 1.0 / 3) / 2);
}

TEST(Metrics, RandomFixturesMatchTheExhaustiveOracle) {
  leo::SplitMix64 rng(2718);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EvalScene> scenes;
    for (int s = 0; s < 5; ++s) scenes.push_back(oracle::random_fixture(rng));
    for (std::size_t k : {1, 2, 3, 5, 10, 20, 50}) {
      for (bool c : {true, false}) {
        ASSERT_EQ(leo::recall_at_k(scenes, k, c), oracle::recall(scenes, k, c)) << trial << " k=" << k;
        ASSERT_EQ(leo::mean_recall_at_k(scenes, k, c), oracle::mean_recall(scenes, k, c)) << trial << " k=" << k;
      }
    }
  }
}

TEST(Metrics, UnconstrainedCoversConstrainedAndRecallGrowsWithK) {
  leo::SplitMix64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EvalScene> scenes;
    for (int s = 0; s < 3; ++s) scenes.push_back(oracle::random_fixture(rng));
    double prev_r = 0, prev_ngc = 0;
    for (std::size_t k = 1; k <= 40; ++k) {
      const double r = leo::recall_at_k(scenes, k, true), ngc = leo::recall_at_k(scenes, k, false);
      // The k-th constrained pick can be outranked only by predicates of at most k pairs.
      EXPECT_GE(leo::recall_at_k(scenes, 3 * k, false), r);
      EXPECT_GE(leo::recall_at_k(scenes, 1000, false), leo::recall_at_k(scenes, 1000, true));
      EXPECT_GE(r, prev_r);
      EXPECT_GE(ngc, prev_ngc);
      prev_r = r;
      prev_ngc = ngc;
    }
  }
}

TEST(Metrics, UnconstrainedCanTrailConstrainedAtEqualK) {
  // Two confident wrong labels on one pair fill the unconstrained top-2; the
  // constrained list keeps one of them and reaches the other pair.
  EvalScene s;
  s.predictions = {{0, 1, 0, 0.9, 0, 0}, {0, 1, 1, 0.8, 0, 0}, {1, 0, 0, 0.6, 0, 0}, {1, 0, 1, 0.1, 0, 0}};
  s.gt = {{1, 0, 0, 0, 0}};
  const std::vector<EvalScene> scenes = {s};
  EXPECT_EQ(leo::recall_at_k(scenes, 2, true), 1.0);
  EXPECT_EQ(leo::recall_at_k(scenes, 2, false), 0.0);
  EXPECT_EQ(leo::recall_at_k(scenes, 3, false), 1.0);
}

TEST(Metrics, InvariantUnderMonotoneScoreTransform) {
  leo::SplitMix64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<EvalScene> scenes, squared;
    for (int s = 0; s < 3; ++s) scenes.push_back(oracle::random_fixture(rng));
    squared = scenes;
    for (auto& s : squared)
      for (auto& p : s.predictions) p.score = p.score * p.score;
    for (std::size_t k : {1, 3, 10})
      for (bool c : {true, false}) {
        EXPECT_EQ(leo::recall_at_k(scenes, k, c), leo::recall_at_k(squared, k, c));
        EXPECT_EQ(leo::mean_recall_at_k(scenes, k, c), leo::mean_recall_at_k(squared, k, c));
      }
  }
}

TEST(LinkAuc, Examples) {
  const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> t = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(leo::link_auc(s, t), 0.75);
  const std::vector<double> flat = {0.5, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(leo::link_auc(flat, std::vector<int>{1, 0, 0}), 0.5);
  EXPECT_DOUBLE_EQ(leo::link_auc(std::vector<double>{0.2, 0.9}, std::vector<int>{0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(leo::link_auc(std::vector<double>{0.2, 0.9}, std::vector<int>{1, 0}), 0.0);
}

TEST(LinkAuc, RandomScoresMatchPairwiseCount) {
  leo::SplitMix64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(200);
    std::vector<double> s(n);
    std::vector<int> t(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(20)) / 19.0;
      t[i] = rng.uniform() < 0.3 ? 1 : 0;
    }
    t[0] = 1;
    t[1] = 0;
    EXPECT_NEAR(leo::link_auc(s, t), oracle::pairwise_auc(s, t), 1e-9);
  }
}

TEST(LinkAuc, DegenerateInputThrows) {
  EXPECT_THROW(leo::link_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), leo::ValidationError);
  EXPECT_THROW(leo::link_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), leo::ShapeError);
}

TEST(GtTriplets, DeduplicateAndCarryClasses) {
  leo::Scene s;
  for (int i = 0; i < 2; ++i) {
    leo::ObjectInstance o;
    o.id = 10 + i;
    o.class_id = 3 + i;
    o.bbox = {{0, 0, 0}, {1, 1, 1}};
    s.objects.push_back(o);
  }
  s.relationships = {{10, 11, 2}, {10, 11, 2}, {11, 10, 0}};
  const auto gt = leo::gt_triplets(s);
  ASSERT_EQ(gt.size(), 2u);
  EXPECT_EQ(gt[0], (GtTriplet{10, 11, 2, 3, 4}));
  EXPECT_EQ(gt[1], (GtTriplet{11, 10, 0, 4, 3}));
}

TEST(RecallReport, DefaultKsAndSerialisation) {
  EXPECT_EQ(leo::default_ks(), (std::vector<std::size_t>{1, 3, 5, 10, 20, 50, 100}));
  const std::vector<EvalScene> scenes = {handcrafted()};
  const std::vector<std::size_t> ks = {1, 5};
  const auto rep = leo::evaluate_recalls(leo::EvalTask::kPredCls, scenes, ks);
  EXPECT_EQ(rep.value("predcls", "r", 5), 0.75);
  EXPECT_EQ(rep.value("predcls", "ngc_r", 5), 1.0);
  EXPECT_THROW(rep.value("sgcls", "r", 5), leo::ValidationError);
  const auto csv = rep.to_csv();
  EXPECT_EQ(csv.rfind("task,metric,k,value\n", 0), 0u);
  EXPECT_NE(csv.find("predcls,ngc_r,5,1\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_EQ(rep.to_json()["predcls"]["r"]["1"].get<double>(), 0.25);
  const auto per = rep.per_predicate_csv({"a", "b", "c", "d"});
  EXPECT_NE(per.find("predcls,1,5,2,c,1,1,1\n"), std::string::npos);
}
