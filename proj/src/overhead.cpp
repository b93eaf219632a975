#include "see/overhead.h"

#include <string>

#include "see/error.h"
#include "see/hashing.h"

namespace see {

void LatencyParams::validate() const {
  if (!(ttft > 0.0)) throw ValidationError("ttft must be positive");
  if (!(tpot > 0.0)) throw ValidationError("tpot must be positive");
  if (n_out < 0) throw ValidationError("n must be non-negative");
  if (m_experts < 1) throw ValidationError("m must be at least 1");
}

double expected_hops(long m_experts) {
  if (m_experts < 1) throw ValidationError("m must be at least 1");
  return (static_cast<double>(m_experts) + 1.0) / 2.0;
}

double latency_single_model(const LatencyParams& p) {
  p.validate();
  return p.ttft + p.tpot * static_cast<double>(p.n_out);
}

double latency_sequential(const LatencyParams& p) {
  p.validate();
  return p.ttft * expected_hops(p.m_experts) + p.tpot * static_cast<double>(p.n_out);
}

double extra_overhead(const LatencyParams& p) {
  p.validate();
  if (p.m_experts == 1) return 0.0;
  const double n = static_cast<double>(p.n_out);
  const double m = static_cast<double>(p.m_experts);
  return 0.5 / (1.0 + n / (m - 1.0) * (p.tpot / p.ttft));
}

double extra_overhead_from_latencies(const LatencyParams& p) {
  const double l0 = latency_single_model(p);
  const double l1 = latency_sequential(p);
  return (l1 - l0) / l0;
}

nlohmann::ordered_json SimulationReport::to_json() const {
  nlohmann::ordered_json j;
  j["trials"] = trials;
  j["mean_overhead"] = mean_overhead;
  j["mean_hops"] = mean_hops;
  j["mean_latency"] = mean_latency;
  j["outcome_counts"] = outcome_counts;
  j["outcome_latency"] = outcome_latency;
  return j;
}

SimulationReport simulate_latency(const LatencyParams& p, long trials, std::uint64_t seed) {
  p.validate();
  if (trials < 1) throw ValidationError("trials must be at least 1");
  const auto m = static_cast<std::uint64_t>(p.m_experts);
  const double decode = p.tpot * static_cast<double>(p.n_out);
  const double l0 = p.ttft + decode;

  SimulationReport r;
  r.trials = trials;
  r.outcome_counts.assign(m + 1, 0);
  r.outcome_latency.resize(m + 1);
  for (std::uint64_t k = 0; k < m; ++k) r.outcome_latency[k] = p.ttft * static_cast<double>(k + 1) + decode;
  r.outcome_latency[m] = p.ttft * expected_hops(p.m_experts) + decode;

  DeterministicRng rng(seed);
  double overhead_sum = 0.0;
  double hops_sum = 0.0;
  double latency_sum = 0.0;
  for (long t = 0; t < trials; ++t) {
    const auto outcome = rng.below(m + 1);
    const auto hops = outcome < m ? outcome + 1 : rng.below(m) + 1;
    ++r.outcome_counts[outcome];
    const double latency = p.ttft * static_cast<double>(hops) + decode;
    overhead_sum += (latency - l0) / l0;
    hops_sum += static_cast<double>(hops);
    latency_sum += latency;
  }
  r.mean_overhead = overhead_sum / static_cast<double>(trials);
  r.mean_hops = hops_sum / static_cast<double>(trials);
  r.mean_latency = latency_sum / static_cast<double>(trials);
  return r;
}

}  // namespace see
