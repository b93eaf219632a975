#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

namespace see {

// Latency model of sequential routing. Durations share one arbitrary unit;
// only TPOT/TTFT, N and M affect the overhead.
struct LatencyParams {
  double ttft = 1.0;      // time to first token (one prefill)
  double tpot = 0.1;      // time per output token
  long n_out = 0;         // output tokens N
  long m_experts = 1;     // experts M

  void validate() const;  // throws ValidationError
};

// E[X] = (M+1)/2 routing steps under uniform outcomes over {1..M, exception}.
double expected_hops(long m_experts);

double latency_single_model(const LatencyParams& p);  // TTFT + TPOT*N
double latency_sequential(const LatencyParams& p);    // TTFT*(M+1)/2 + TPOT*N

/// Simplified closed form 1/2 * 1 / (1 + N/(M-1) * TPOT/TTFT); 0 for M = 1.
double extra_overhead(const LatencyParams& p);

/// (Latency_seq - Latency_single) / Latency_single from the two latencies.
/// Equals extra_overhead only for M <= 2.
double extra_overhead_from_latencies(const LatencyParams& p);

struct SimulationReport {
  long trials = 0;
  double mean_overhead = 0.0;
  double mean_hops = 0.0;
  double mean_latency = 0.0;
  // counts[k] for k = 0..M-1 -> routed to the expert reached after k+1 hops;
  // counts[M] -> exception.
  std::vector<long> outcome_counts;
  // Latency of each discrete outcome; the exception entry is its mean.
  std::vector<double> outcome_latency;

  nlohmann::ordered_json to_json() const;
};

/// Monte-Carlo over routing outcomes: uniform over M experts plus an
/// exception; an exception costs a hop count drawn uniformly from {1..M}.
SimulationReport simulate_latency(const LatencyParams& p, long trials, std::uint64_t seed);

}  // namespace see
