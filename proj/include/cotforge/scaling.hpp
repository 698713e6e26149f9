#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cotforge/backends.hpp"
#include "cotforge/types.hpp"

namespace cotforge {

enum class Strategy { single_chain, multi_chain, hybrid, vanilla };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct PlanOverrides {
  std::optional<int> chains;
  std::optional<int> images_per_chain;
};

// C chains × K images per chain; C·K == N always.
struct ScalingPlan {
  Strategy strategy = Strategy::hybrid;
  int chains = 1;
  int images_per_chain = 1;
  SamplingParams chain_sampling;
  std::int64_t seed_base = 0;

  int total() const { return chains * images_per_chain; }
  void validate() const;
};

void to_json(json& j, const ScalingPlan& p);

// (C, K) pairs a hybrid plan of size n accepts as overrides.
std::vector<std::pair<int, int>> hybrid_configurations(int n);

ScalingPlan expand_plan(Strategy strategy, int n, PlanOverrides overrides = {}, SamplingParams chain_sampling = {},
                        std::int64_t seed_base = 0);

struct ScaledJob {
  int chain_index = 0;
  std::int64_t seed = 0;
  std::optional<ImageRef> image;
  std::string error;  // set when the job failed

  bool ok() const { return image.has_value(); }
};

struct ScaledOutcome {
  ScalingPlan plan;
  std::vector<ReasoningChain> chains;  // empty text for vanilla
  std::vector<ScaledJob> jobs;         // ordered by (chain_index, seed)
  std::vector<double> verifier_scores;
  int best_index = -1;
  bool passed = false;
};

void to_json(json& j, const ScaledOutcome& o);

// Generates C chains (none for vanilla), then K images per chain with seeds
// seed_base .. seed_base + K - 1. Per-job failures are recorded; throws only
// when no job succeeds.
ScaledOutcome execute_plan(const Backends& backends, const MultimodalContext& ctx, const ScalingPlan& plan);

// Picks the highest score (lowest index on ties); passed = max >= threshold.
ScaledOutcome best_of_n(ScaledOutcome outcome, std::span<const double> verifier_scores, double threshold);

// True when any of the first n scores reaches the threshold.
bool passes_at(std::span<const double> scores, int n, double threshold);

struct PassCurve {
  std::vector<double> thresholds;
  std::vector<int> ns;
  std::vector<std::vector<double>> rates;  // rates[threshold][n]
};

void to_json(json& j, const PassCurve& c);

PassCurve pass_curve(const std::vector<std::vector<double>>& score_lists, const std::vector<double>& thresholds,
                     const std::vector<int>& ns);

// Scores a job in [0, 1] given its chain and the task it belongs to.
using Verifier = std::function<double(const ScaledJob& job, const ReasoningChain& chain, const TaskSpec& task)>;

// 1 when every whitespace-separated word of the task's verifier_target
// occurs (case-insensitively) in the chain text, else 0.
double keyword_verifier(const ScaledJob& job, const ReasoningChain& chain, const TaskSpec& task);

std::vector<double> verify_outcome(const ScaledOutcome& outcome, const TaskSpec& task, const Verifier& verifier);

}  // namespace cotforge
