#include <gtest/gtest.h>

#include <random>
#include <set>

#include "scripted_client.h"
#include "see/gateway.h"

using namespace see;
using see::testing::ScriptedClient;

namespace {

const IndicatorConfig kInd = IndicatorConfig::preset(IndicatorKind::NonSemantic);

Registry chain(int n, const IndicatorConfig& ind = kInd) {
  Registry r(BaseModel{"http://base", "base"});
  for (int s = 1; s <= n; ++s)
    r = r.register_expert({"E" + std::to_string(s), "T" + std::to_string(s), s, "http://experts",
                           "E" + std::to_string(s), ind});
  return r;
}

}  // namespace

TEST(ClassifyHeadTest, PositiveStripsIndicator) {
  EXPECT_EQ(classify_head("<<pos>> The answer is 42", kInd), Decision(Positive{"The answer is 42"}));
  EXPECT_EQ(classify_head("  \n<<pos>>x", kInd), Decision(Positive{"x"}));
  EXPECT_EQ(classify_head("<<pos>>", kInd), Decision(Positive{""}));
}

TEST(ClassifyHeadTest, NegativeAndNoIndicator) {
  EXPECT_EQ(classify_head("<<neg>>", kInd), Decision(Negative{}));
  EXPECT_EQ(classify_head(" <<neg>> trailing", kInd), Decision(Negative{}));
  EXPECT_EQ(classify_head("I think the answer is...", kInd),
            Decision(NoIndicator{"I think the answer is..."}));
  EXPECT_EQ(classify_head("", kInd), Decision(NoIndicator{""}));
  // Prefix match only: an indicator later in the text does not count.
  EXPECT_EQ(classify_head("answer <<pos>>", kInd), Decision(NoIndicator{"answer <<pos>>"}));
}

TEST(ClassifyHeadTest, SemanticIndicatorsMatchAsPlainPrefixes) {
  const auto sem = IndicatorConfig::preset(IndicatorKind::Semantic);
  EXPECT_EQ(classify_head("Yes Paris", sem), Decision(Positive{"Paris"}));
  EXPECT_EQ(classify_head("No", sem), Decision(Negative{}));
  // In-vocabulary indicators collide with ordinary words.
  EXPECT_EQ(classify_head("Nothing to add", sem), Decision(Negative{}));
}

TEST(RouteTest, StopsAtFirstPositiveNewestFirst) {
  ScriptedClient client;
  client.on_text("E3", "<<neg>>");
  client.on_text("E2", "<<pos>> x");
  client.on_text("E1", "<<pos>> never");
  const auto trace = route(chain(3), "q", {}, client);
  ASSERT_EQ(trace.hops.size(), 2u);
  EXPECT_EQ(trace.hops[0].expert_id, "E3");
  EXPECT_EQ(trace.hops[1].expert_id, "E2");
  EXPECT_EQ(trace.handler_expert, "E2");
  EXPECT_EQ(trace.answer, "x");
}

TEST(RouteTest, AllNegativeGoesToBase) {
  ScriptedClient client;
  for (auto m : {"E1", "E2", "E3"}) client.on_text(m, "<<neg>>");
  client.on_text("base", "base answer");
  const auto trace = route(chain(3), "q", {}, client);
  EXPECT_EQ(trace.hops.size(), 3u);
  EXPECT_TRUE(trace.handled_by_base());
  EXPECT_EQ(trace.answer, "base answer");
  EXPECT_EQ(trace.handler_label(), "base");
}

TEST(RouteTest, NoIndicatorGoesStraightToBase) {
  ScriptedClient client;
  client.on_text("E3", "rambling");
  client.on_text("E2", "<<pos>> unreachable");
  client.on_text("base", "b");
  const auto trace = route(chain(3), "q", {}, client);
  ASSERT_EQ(trace.hops.size(), 1u);
  EXPECT_TRUE(std::holds_alternative<NoIndicator>(trace.hops[0].decision));
  EXPECT_TRUE(trace.handled_by_base());
}

TEST(RouteTest, EmptyChainUsesBase) {
  ScriptedClient client;
  client.on_text("base", "b");
  const auto trace = route(chain(0), "q", {}, client);
  EXPECT_TRUE(trace.hops.empty());
  EXPECT_EQ(trace.answer, "b");
}

TEST(RouteTest, RequestShape) {
  ScriptedClient client;
  client.on_text("E2", "<<neg>>");
  client.on_text("E1", "<<neg>>");
  client.on_text("base", "b");
  RouteParams params;
  params.max_tokens = 77;
  route(chain(2), "raw query", params, client);
  const auto calls = client.calls();
  ASSERT_EQ(calls.size(), 3u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(calls[i].endpoint, "http://experts");
    EXPECT_EQ(calls[i].request.prompt, "raw query");
    EXPECT_EQ(calls[i].request.temperature, 0.0);
    EXPECT_EQ(calls[i].request.max_tokens, 77);
    EXPECT_EQ(calls[i].request.stop, std::vector<std::string>{"<<neg>>"});
  }
  EXPECT_EQ(calls[2].endpoint, "http://base");
  EXPECT_EQ(calls[2].request.model, "base");
  EXPECT_EQ(calls[2].request.prompt, "raw query");
  EXPECT_TRUE(calls[2].request.stop.empty());
}

TEST(RouteTest, MatchedStopSequenceCountsAsNegative) {
  ScriptedClient client;
  client.on("E1", [](const CompletionRequest&) { return CompletionResult{"", "<<neg>>"}; });
  client.on_text("base", "b");
  const auto trace = route(chain(1), "q", {}, client);
  EXPECT_TRUE(std::holds_alternative<Negative>(trace.hops[0].decision));
  EXPECT_TRUE(trace.handled_by_base());
}

TEST(RouteTest, ExpertTransportErrorFallsBackAndIsRecorded) {
  ScriptedClient client;
  client.fail("E2", TransportError::Kind::Timeout);
  client.on_text("E1", "<<pos>> unreachable");
  client.on_text("base", "b");
  const auto trace = route(chain(2), "q", {}, client);
  ASSERT_EQ(trace.hops.size(), 1u);
  ASSERT_TRUE(trace.hops[0].transport_error.has_value());
  EXPECT_NE(trace.hops[0].transport_error->find("timeout"), std::string::npos);
  EXPECT_NE(trace.hops[0].transport_error->find("E2"), std::string::npos);
  EXPECT_TRUE(trace.handled_by_base());
  EXPECT_EQ(trace_to_json(trace, false)["hops"][0]["transport_error"].is_string(), true);
}

TEST(RouteTest, StrictPolicyFailsOnExpertError) {
  ScriptedClient client;
  client.fail("E1");
  client.on_text("base", "b");
  RouteParams params;
  params.on_expert_error = TransportPolicy::Strict;
  EXPECT_THROW(route(chain(1), "q", params, client), RouteError);
}

TEST(RouteTest, BaseFailureFailsTheRequest) {
  ScriptedClient client;
  client.on_text("E1", "<<neg>>");
  client.fail("base");
  EXPECT_THROW(route(chain(1), "q", {}, client), RouteError);
}

TEST(RouteTest, ShadowingNewerExpertWins) {
  ScriptedClient client;
  for (auto m : {"E1", "E2", "E3", "E4"})
    client.on_text(m, std::string("<<pos>> from ") + m);
  EXPECT_EQ(route(chain(4), "q", {}, client).handler_expert, "E4");
}

// Property: against random scripted decision sequences the trace always
// matches a direct reading of the protocol.
TEST(RouteTest, PropertyOverRandomDecisionSequences) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = static_cast<int>(rng() % 9);
    std::vector<int> kinds(n + 1);  // 0 neg, 1 pos, 2 no indicator, 3 transport error
    ScriptedClient client;
    for (int s = 1; s <= n; ++s) {
      kinds[s] = static_cast<int>(rng() % 10 < 6 ? 0 : rng() % 3 + 1);
      const auto m = "E" + std::to_string(s);
      switch (kinds[s]) {
        case 0: client.on_text(m, "<<neg>>"); break;
        case 1: client.on_text(m, "<<pos>> ans-" + m); break;
        case 2: client.on_text(m, "free text"); break;
        default: client.fail(m); break;
      }
    }
    client.on_text("base", "base-ans");
    const auto reg = chain(n);
    const auto trace = route(reg, "q", {}, client);

    // Expected by direct reading: walk n..1.
    std::optional<int> handler;
    std::size_t expected_hops = 0;
    for (int s = n; s >= 1; --s) {
      ++expected_hops;
      if (kinds[s] == 1) { handler = s; break; }
      if (kinds[s] != 0) break;
    }
    ASSERT_EQ(trace.hops.size(), expected_hops);
    ASSERT_LE(trace.hops.size(), static_cast<std::size_t>(n));
    std::set<std::string> seen;
    for (const auto& h : trace.hops) ASSERT_TRUE(seen.insert(h.expert_id).second);
    ASSERT_EQ(client.calls().size(), expected_hops + (handler ? 0 : 1));
    if (handler) {
      ASSERT_EQ(trace.handler_expert, "E" + std::to_string(*handler));
      ASSERT_EQ(trace.answer, "ans-E" + std::to_string(*handler));
      for (std::size_t i = 0; i + 1 < trace.hops.size(); ++i)
        ASSERT_TRUE(std::holds_alternative<Negative>(trace.hops[i].decision));
    } else {
      ASSERT_TRUE(trace.handled_by_base());
      ASSERT_EQ(trace.answer, "base-ans");
    }
    // Deterministic replay.
    ASSERT_EQ(trace_to_json(route(reg, "q", {}, client), false), trace_to_json(trace, false));
  }
}

TEST(GatewayConfigTest, ParsesAndRejectsUnknownFields) {
  const auto c = GatewayConfig::from_json(nlohmann::json::parse(
      R"({"listen":"0.0.0.0:9001","registry":"r.json","expert_timeout_ms":250,"error_policy":"strict"})"));
  EXPECT_EQ(c.host, "0.0.0.0");
  EXPECT_EQ(c.port, 9001);
  EXPECT_EQ(c.registry_path, "r.json");
  EXPECT_EQ(c.expert_timeout.count(), 250);
  EXPECT_EQ(c.on_expert_error, TransportPolicy::Strict);
  EXPECT_THROW(GatewayConfig::from_json(nlohmann::json::parse(R"({"bogus":1})")), ValidationError);
}
