#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "see/error.h"
#include "see/reconstruct.h"
#include "test_util.h"

using namespace see;
using see::testing::TempDir;

namespace {

TaskDataset make_task(const std::string& id, std::size_t n) {
  TaskDataset ds{id, {}, Split::Train};
  for (std::size_t i = 0; i < n; ++i)
    ds.instances.push_back({id + "-q" + std::to_string(i), id + "-r" + std::to_string(i)});
  return ds;
}

std::vector<TaskDataset> make_history(std::size_t tasks, std::size_t n) {
  std::vector<TaskDataset> out;
  for (std::size_t i = 0; i < tasks; ++i) out.push_back(make_task("H" + std::to_string(i), n));
  return out;
}

const IndicatorConfig kNonSemantic = IndicatorConfig::preset(IndicatorKind::NonSemantic);

}  // namespace

TEST(IndicatorConfigTest, PresetsMatchTheThreeKinds) {
  EXPECT_EQ(IndicatorConfig::preset(IndicatorKind::Semantic).positive, "Yes");
  EXPECT_EQ(IndicatorConfig::preset(IndicatorKind::Semantic).negative, "No");
  EXPECT_EQ(kNonSemantic.positive, "<<pos>>");
  EXPECT_EQ(kNonSemantic.negative, "<<neg>>");
  for (auto k : {IndicatorKind::AdditionalToken, IndicatorKind::NonSemantic, IndicatorKind::Semantic})
    EXPECT_NO_THROW(IndicatorConfig::preset(k).validate());
}

TEST(IndicatorConfigTest, RejectsEmptyEqualAndPrefixStrings) {
  EXPECT_THROW((IndicatorConfig{"", "x", IndicatorKind::NonSemantic}.validate()), ValidationError);
  EXPECT_THROW((IndicatorConfig{"x", "x", IndicatorKind::NonSemantic}.validate()), ValidationError);
  EXPECT_THROW((IndicatorConfig{"<pos", "<pos>", IndicatorKind::NonSemantic}.validate()),
               ValidationError);
  EXPECT_THROW((IndicatorConfig{"Nope", "No", IndicatorKind::Semantic}.validate()), ValidationError);
}

TEST(SampleRehearsalTest, FourTasksAtTenPercent) {
  const auto history = make_history(4, 2000);
  const auto sample = sample_rehearsal(history, 0.10, 7);
  ASSERT_EQ(sample.size(), 800u);
  std::map<std::string, std::set<std::string>> per_task;
  for (const auto& s : sample) per_task[s.origin_task].insert(s.query);
  ASSERT_EQ(per_task.size(), 4u);
  for (const auto& [task, queries] : per_task) {
    EXPECT_EQ(queries.size(), 200u) << task;  // distinct
    for (const auto& q : queries) EXPECT_TRUE(q.starts_with(task + "-q"));
  }
}

TEST(SampleRehearsalTest, ZeroTauIsEmpty) {
  EXPECT_TRUE(sample_rehearsal(make_history(3, 2000), 0.0, 1).empty());
  EXPECT_TRUE(sample_rehearsal({}, 0.5, 1).empty());
}

TEST(SampleRehearsalTest, SameSeedSameSet) {
  const auto history = make_history(1, 2000);
  const auto a = sample_rehearsal(history, 0.01, 42);
  const auto b = sample_rehearsal(history, 0.01, 42);
  ASSERT_EQ(a.size(), 20u);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, sample_rehearsal(history, 0.01, 43));
}

TEST(SampleRehearsalTest, TauOutsideUnitIntervalIsAnError) {
  const auto history = make_history(1, 10);
  EXPECT_THROW(sample_rehearsal(history, -0.01, 1), ValidationError);
  EXPECT_THROW(sample_rehearsal(history, 1.01, 1), ValidationError);
  EXPECT_EQ(sample_rehearsal(history, 1.0, 1).size(), 10u);
}

TEST(SampleRehearsalTest, RoundsDown) {
  EXPECT_EQ(rehearsal_count(2000, 0.1), 200u);
  EXPECT_EQ(rehearsal_count(15, 0.1), 1u);
  EXPECT_EQ(rehearsal_count(9, 0.1), 0u);
  EXPECT_EQ(rehearsal_count(100, 0.29), 29u);
  EXPECT_EQ(rehearsal_count(7, 1.0), 7u);
}

TEST(ReconstructTaskTest, CountsFollowTheConstruction) {
  const auto ds = reconstruct_task(make_task("CUR", 2000), make_history(3, 2000), 0.10, kNonSemantic, 3);
  EXPECT_EQ(ds.n_positive, 2000u);
  EXPECT_EQ(ds.n_negative, 600u);
  EXPECT_EQ(ds.samples.size(), 2600u);
}

TEST(ReconstructTaskTest, FirstStageHasNoNegatives) {
  const auto ds = reconstruct_task(make_task("CUR", 50), {}, 0.10, kNonSemantic, 3);
  EXPECT_EQ(ds.n_negative, 0u);
  EXPECT_TRUE(std::all_of(ds.samples.begin(), ds.samples.end(),
                          [](const auto& s) { return s.indicator == Polarity::Positive; }));
}

TEST(ReconstructTaskTest, NineHistoryTasksCountMatchesLineCountOracle) {
  TempDir dir;
  std::vector<TaskDataset> history;
  std::size_t expected = 0;
  for (int i = 0; i < 9; ++i) {
    const auto path = dir / ("h" + std::to_string(i) + ".jsonl");
    write_task_dataset(make_task("H" + std::to_string(i), 2000), path);
    // Oracle: integer floor of 20% of each file's line count.
    expected += see::testing::count_lines(path) * 20 / 100;
    history.push_back(load_task_dataset(path, "H" + std::to_string(i), Split::Train));
  }
  const auto ds = reconstruct_task(make_task("CUR", 2000), history, 0.20, kNonSemantic, 11);
  EXPECT_EQ(expected, 3600u);
  EXPECT_EQ(ds.n_negative, expected);
}

TEST(ReconstructTaskTest, CurrentInstanceWithoutResponseIsAnError) {
  auto cur = make_task("CUR", 3);
  cur.instances[1].response.clear();
  EXPECT_THROW(reconstruct_task(cur, {}, 0.1, kNonSemantic, 0), ValidationError);
}

TEST(ReconstructTaskTest, PositivesAreExactlyTheCurrentTask) {
  const auto cur = make_task("CUR", 100);
  const auto ds = reconstruct_task(cur, make_history(2, 100), 0.3, kNonSemantic, 5);
  std::multiset<std::pair<std::string, std::string>> want, got;
  for (const auto& i : cur.instances) want.emplace(i.query, i.response);
  for (const auto& s : ds.samples)
    if (s.indicator == Polarity::Positive) got.emplace(s.query, *s.response);
  EXPECT_EQ(want, got);
}

TEST(ReconstructTaskTest, InvariantsHoldOverRandomInputs) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n_hist = static_cast<std::size_t>(rng() % 5);
    std::vector<TaskDataset> history;
    for (std::size_t j = 0; j < n_hist; ++j)
      history.push_back(make_task("H" + std::to_string(j), 1 + rng() % 200));
    const auto cur = make_task("C", 1 + rng() % 100);
    const double tau = static_cast<double>(rng() % 101) / 100.0;
    const auto seed = rng();
    const auto ds = reconstruct_task(cur, history, tau, kNonSemantic, seed);

    std::size_t pos = 0, neg = 0, want_neg = 0;
    for (const auto& s : ds.samples) {
      if (s.indicator == Polarity::Positive) {
        ++pos;
        ASSERT_TRUE(s.response.has_value());
      } else {
        ++neg;
        ASSERT_FALSE(s.response.has_value());
        ASSERT_NE(s.origin_task, "C");
      }
    }
    for (const auto& h : history) want_neg += rehearsal_count(h.size(), tau);
    ASSERT_EQ(pos, ds.n_positive);
    ASSERT_EQ(neg, ds.n_negative);
    ASSERT_EQ(pos, cur.size());
    ASSERT_EQ(neg, want_neg);
    ASSERT_EQ(pos + neg, ds.samples.size());

    // Monotone in tau for fixed history.
    std::size_t prev = 0;
    for (int t = 0; t <= 20; ++t) {
      const auto m = sample_rehearsal(history, t / 20.0, seed).size();
      ASSERT_GE(m, prev);
      prev = m;
    }
  }
}

TEST(PseudoNegativeTest, NegativesComeFromTheExternalCorpus) {
  const auto external = make_task("alpaca", 52000);
  const auto ds = make_pseudo_negative(make_task("CUR", 2000), external, 600, kNonSemantic, 9);
  EXPECT_EQ(ds.n_positive, 2000u);
  EXPECT_EQ(ds.n_negative, 600u);
  std::set<std::string> distinct;
  for (const auto& s : ds.samples) {
    if (s.indicator == Polarity::Negative) {
      EXPECT_EQ(s.origin_task, "alpaca");
      distinct.insert(s.query);
    }
  }
  EXPECT_EQ(distinct.size(), 600u);
}

TEST(PseudoNegativeTest, ZeroCountAndOverdraw) {
  const auto external = make_task("ext", 10);
  const auto ds = make_pseudo_negative(make_task("CUR", 5), external, 0, kNonSemantic, 1);
  EXPECT_EQ(ds.n_negative, 0u);
  EXPECT_EQ(ds.samples.size(), 5u);
  EXPECT_THROW(make_pseudo_negative(make_task("CUR", 5), external, 11, kNonSemantic, 1),
               ValidationError);
}

TEST(PseudoNegativeTest, SameSeedSameSelection) {
  const auto external = make_task("ext", 1000);
  const auto a = make_pseudo_negative(make_task("CUR", 20), external, 30, kNonSemantic, 77);
  const auto b = make_pseudo_negative(make_task("CUR", 20), external, 30, kNonSemantic, 77);
  EXPECT_EQ(a.samples, b.samples);
}

TEST(WriteReconstructedTest, WritesRecordsAndManifest) {
  TempDir dir;
  const auto ds = reconstruct_task(make_task("CUR", 2), {make_task("OLD", 1)}, 1.0, kNonSemantic, 0);
  write_reconstructed(ds, dir / "d1.jsonl");
  EXPECT_EQ(see::testing::count_lines(dir / "d1.jsonl"), 3u);
  const auto manifest = nlohmann::json::parse(see::testing::read_file(dir / "d1.manifest.json"));
  EXPECT_EQ(manifest["task_id"], "CUR");
  EXPECT_EQ(manifest["n_positive"], 2);
  EXPECT_EQ(manifest["n_negative"], 1);
  EXPECT_EQ(manifest["tau"], 1.0);
  EXPECT_EQ(manifest["seed"], 0);
  EXPECT_EQ(manifest["indicator"]["positive"], "<<pos>>");
  EXPECT_EQ(manifest["indicator"]["negative"], "<<neg>>");
  EXPECT_EQ(manifest["indicator"]["kind"], "non_semantic");
}

TEST(WriteReconstructedTest, RoundTripPreservesCountsAndOrder) {
  TempDir dir;
  const auto ds = reconstruct_task(make_task("CUR", 40), make_history(3, 30), 0.2, kNonSemantic, 8);
  write_reconstructed(ds, dir / "r.jsonl");
  const auto back = read_reconstructed(dir / "r.jsonl");
  EXPECT_EQ(back.samples, ds.samples);
  EXPECT_EQ(back.n_positive, ds.n_positive);
  EXPECT_EQ(back.n_negative, ds.n_negative);
  EXPECT_EQ(back.indicators, ds.indicators);
  EXPECT_EQ(back.seed, ds.seed);
}

TEST(WriteReconstructedTest, SemanticIndicatorsAreWrittenLiterally) {
  TempDir dir;
  const auto sem = IndicatorConfig::preset(IndicatorKind::Semantic);
  const auto ds = reconstruct_task(make_task("CUR", 3), {make_task("OLD", 3)}, 1.0, sem, 0);
  write_reconstructed(ds, dir / "s.jsonl");
  std::size_t yes = 0, no = 0;
  std::ifstream in(dir / "s.jsonl");
  for (std::string line; std::getline(in, line);) {
    const auto rec = nlohmann::json::parse(line);
    if (rec["indicator"] == "Yes") {
      ++yes;
      EXPECT_TRUE(rec.contains("response"));
    } else {
      EXPECT_EQ(rec["indicator"], "No");
      EXPECT_FALSE(rec.contains("response"));
      ++no;
    }
  }
  EXPECT_EQ(yes, 3u);
  EXPECT_EQ(no, 3u);
}

TEST(WriteReconstructedTest, ByteIdenticalForIdenticalInputs) {
  TempDir dir;
  const auto history = make_history(4, 300);
  write_reconstructed(reconstruct_task(make_task("CUR", 200), history, 0.1, kNonSemantic, 5),
                      dir / "a.jsonl");
  write_reconstructed(reconstruct_task(make_task("CUR", 200), history, 0.1, kNonSemantic, 5),
                      dir / "b.jsonl");
  EXPECT_EQ(see::testing::read_file(dir / "a.jsonl"), see::testing::read_file(dir / "b.jsonl"));
  EXPECT_EQ(see::testing::read_file(dir / "a.manifest.json"),
            see::testing::read_file(dir / "b.manifest.json"));
}

TEST(WriteReconstructedTest, UnwritablePathIsAnError) {
  const auto ds = reconstruct_task(make_task("CUR", 2), {}, 0.1, kNonSemantic, 0);
  EXPECT_THROW(write_reconstructed(ds, "/nonexistent-dir/x.jsonl"), Error);
}
