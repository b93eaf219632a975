#include <gtest/gtest.h>

#include <random>
#include <set>

#include "oracles.h"
#include "see/error.h"
#include "see/metrics.h"

using namespace see;

namespace {

std::vector<std::vector<double>> random_lower_triangular(std::mt19937_64& rng, std::size_t t) {
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<std::vector<double>> a(t);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j <= i; ++j) a[i].push_back(u(rng));
  return a;
}

ScoreMatrix to_matrix(const std::vector<std::vector<double>>& a) {
  ScoreMatrix m(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) m.set_row(i, a[i]);
  return m;
}

RoutingTrace handled_by(std::optional<std::string> expert) {
  RoutingTrace t;
  t.handler_expert = std::move(expert);
  return t;
}

}  // namespace

TEST(RougeLTest, FixedExamples) {
  EXPECT_DOUBLE_EQ(rouge_l("the cat sat", "the cat sat"), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l("", "the cat"), 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("the cat", ""), 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("", ""), 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("the cat sat", "the cat on the mat"), 0.5);
  EXPECT_DOUBLE_EQ(rouge_l("dog", "cat"), 0.0);
}

TEST(RougeLTest, LowercasesAndSplitsOnWhitespace) {
  EXPECT_DOUBLE_EQ(rouge_l("The  CAT\tsat\n", "the cat sat"), 1.0);
  EXPECT_EQ(rouge_tokens("  A b\t\nC "), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(RougeLTest, MatchesBruteForceOnRandomPairs) {
  std::mt19937_64 rng(1);
  const std::vector<std::string> alphabet{"a", "b", "c", "d"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> x(rng() % 11), y(rng() % 11);
    for (auto& t : x) t = alphabet[rng() % alphabet.size()];
    for (auto& t : y) t = alphabet[rng() % alphabet.size()];
    ASSERT_EQ(lcs_length(x, y), oracle::brute_force_lcs(x, y));
    std::string xs, ys;
    for (const auto& t : x) xs += t + " ";
    for (const auto& t : y) ys += t + " ";
    const double r = rouge_l(xs, ys);
    ASSERT_NEAR(r, oracle::brute_force_rouge_l(x, y), 1e-15);
    ASSERT_GE(r, 0.0);
    ASSERT_LE(r, 1.0);
    if (!x.empty()) ASSERT_DOUBLE_EQ(rouge_l(xs, xs), 1.0);
  }
}

TEST(AverageRougeTest, ScalesToHundred) {
  const std::vector<double> ones(7, 1.0);
  EXPECT_DOUBLE_EQ(average_rouge(ones), 100.0);
  EXPECT_THROW(average_rouge(std::vector<double>{}), ValidationError);
  const std::vector<double> mixed{0.2, 0.5, 0.8, 0.1};
  EXPECT_NEAR(average_rouge(mixed), (0.2 + 0.5 + 0.8 + 0.1) / 4 * 100, 1e-12);
}

TEST(ScoreMatrixTest, ArBwtExamples) {
  ScoreMatrix constant(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j <= i; ++j) constant.set(i, j, 50.0);
  EXPECT_DOUBLE_EQ(ar(constant), 50.0);
  EXPECT_DOUBLE_EQ(bwt(constant), 0.0);

  ScoreMatrix two(2);
  two.set(0, 0, 40);
  two.set_row(1, std::vector<double>{40, 60});
  EXPECT_DOUBLE_EQ(ar(two), 50.0);

  ScoreMatrix three(3);
  three.set(0, 0, 50);
  three.set_row(1, std::vector<double>{48, 50});
  three.set_row(2, std::vector<double>{40, 45, 70});
  EXPECT_DOUBLE_EQ(bwt(three), -7.5);
}

TEST(ScoreMatrixTest, ErrorsForMissingEntriesAndSmallT) {
  ScoreMatrix one(1);
  one.set(0, 0, 30);
  EXPECT_DOUBLE_EQ(ar(one), 30.0);
  EXPECT_THROW(bwt(one), ValidationError);
  ScoreMatrix partial(3);
  partial.set(2, 0, 1);
  EXPECT_THROW(ar(partial), ValidationError);
  EXPECT_THROW(partial.set(0, 1, 5), std::out_of_range);
}

TEST(ScoreMatrixTest, MatchesIndependentRecomputation) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_lower_triangular(rng, 2 + rng() % 11);
    const auto m = to_matrix(a);
    ASSERT_NEAR(ar(m), oracle::ar(a), 1e-9);
    ASSERT_NEAR(bwt(m), oracle::bwt(a), 1e-9);

    // BWT ignores the last task's own column.
    auto b = a;
    b.back().back() += 13.0;
    ASSERT_DOUBLE_EQ(bwt(to_matrix(b)), bwt(m));

    // Unchanged matrix: final row equals the diagonal.
    auto c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.back()[i] = c[i][i];
    ASSERT_DOUBLE_EQ(bwt(to_matrix(c)), 0.0);
  }
}

TEST(ScoreMatrixTest, JsonRoundTrip) {
  std::mt19937_64 rng(3);
  const auto m = to_matrix(random_lower_triangular(rng, 5));
  EXPECT_EQ(ScoreMatrix::from_json(nlohmann::json::parse(m.to_json().dump())), m);
}

TEST(RoutingF1Test, PerfectAndAllBase) {
  const std::vector<std::string> truth{"A", "A", "B", "C"};
  EXPECT_DOUBLE_EQ(routing_f1(truth, truth).macro, 1.0);
  const std::vector<std::string> base(4, "base");
  const auto f = routing_f1(base, truth);
  EXPECT_DOUBLE_EQ(f.per_task.at("A"), 0.0);
  EXPECT_DOUBLE_EQ(f.per_task.at("B"), 0.0);
  EXPECT_DOUBLE_EQ(f.macro, 0.0);
  EXPECT_THROW(routing_f1(std::vector<std::string>{"A"}, truth), ValidationError);
}

TEST(RoutingF1Test, MatchesConfusionMatrixOracle) {
  std::mt19937_64 rng(23);
  const std::vector<std::string> labels{"A", "B", "C", "D", "base"};
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 1 + rng() % 300;
    std::vector<std::string> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = labels[rng() % 4];
      pred[i] = rng() % 3 == 0 ? labels[rng() % 5] : truth[i];
    }
    const std::vector<std::string> tasks{"A", "B", "C", "D"};
    const auto got = routing_f1(pred, truth, tasks);
    const auto want = oracle::confusion_f1(pred, truth);
    double sum = 0;
    for (const auto& t : tasks) {
      const double w = want.count(t) ? want.at(t) : 0.0;
      ASSERT_NEAR(got.per_task.at(t), w, 1e-12) << t;
      sum += w;
    }
    ASSERT_NEAR(got.macro, sum / 4, 1e-12);
    // With every task present, macro == 1 iff every prediction is right.
    const std::set<std::string> present(truth.begin(), truth.end());
    if (present.size() == tasks.size()) ASSERT_EQ(got.macro == 1.0, pred == truth);
  }
}

TEST(RoutingF1Test, TraceOverloadMapsExpertsToTasks) {
  Registry reg(BaseModel{"b", "b"});
  const auto ind = IndicatorConfig::preset(IndicatorKind::NonSemantic);
  reg = reg.register_expert({"E1", "QA", 1, "e", "m1", ind});
  reg = reg.register_expert({"E2", "QG", 2, "e", "m2", ind});
  const std::vector<RoutingTrace> traces{handled_by("E1"), handled_by("E2"), handled_by(std::nullopt)};
  const std::vector<std::string> truth{"QA", "QG", "QG"};
  const auto f = routing_f1(traces, truth, reg);
  EXPECT_DOUBLE_EQ(f.per_task.at("QA"), 1.0);
  EXPECT_NEAR(f.per_task.at("QG"), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(f.macro, (1.0 + 2.0 / 3.0) / 2, 1e-12);
}

TEST(RbAccTest, FractionHandledByBase) {
  const std::vector<RoutingTrace> all_base(5, handled_by(std::nullopt));
  EXPECT_DOUBLE_EQ(rb_acc(all_base), 1.0);
  const std::vector<RoutingTrace> none(5, handled_by("E1"));
  EXPECT_DOUBLE_EQ(rb_acc(none), 0.0);
  const std::vector<RoutingTrace> mixed{handled_by(std::nullopt), handled_by("E1"),
                                        handled_by(std::nullopt), handled_by(std::nullopt)};
  EXPECT_DOUBLE_EQ(rb_acc(mixed), 0.75);
  EXPECT_THROW(rb_acc(std::vector<RoutingTrace>{}), ValidationError);
  EXPECT_EQ(handler_counts(mixed).at("base"), 3u);
}
