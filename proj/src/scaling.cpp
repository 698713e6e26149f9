#include "cotforge/scaling.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <sstream>

#include "cotforge/errors.hpp"
#include "cotforge/inference.hpp"
#include "cotforge/parallel.hpp"

namespace cotforge {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string plan_label(int c, int k) { return "(" + std::to_string(c) + "," + std::to_string(k) + ")"; }

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::single_chain: return "single";
    case Strategy::multi_chain: return "multi";
    case Strategy::hybrid: return "hybrid";
    case Strategy::vanilla: return "vanilla";
  }
  return "hybrid";
}

Strategy strategy_from_string(std::string_view s) {
  auto l = lower(s);
  if (l == "single" || l == "single_chain") return Strategy::single_chain;
  if (l == "multi" || l == "multi_chain") return Strategy::multi_chain;
  if (l == "hybrid") return Strategy::hybrid;
  if (l == "vanilla") return Strategy::vanilla;
  fail(ErrorKind::invalid_plan, "unknown strategy '" + std::string(s) + "'");
}

void ScalingPlan::validate() const {
  require(chains >= 1 && images_per_chain >= 1, ErrorKind::invalid_plan, "chains and images per chain must be >= 1");
  switch (strategy) {
    case Strategy::single_chain:
    case Strategy::vanilla:
      require(chains == 1, ErrorKind::invalid_plan, std::string(to_string(strategy)) + " plans use exactly one chain");
      break;
    case Strategy::multi_chain:
      require(images_per_chain == 1, ErrorKind::invalid_plan, "multi-chain plans render one image per chain");
      break;
    case Strategy::hybrid: {
      auto allowed = hybrid_configurations(total());
      require(std::find(allowed.begin(), allowed.end(), std::pair{chains, images_per_chain}) != allowed.end(),
              ErrorKind::invalid_plan,
              "hybrid@" + std::to_string(total()) + " does not admit " + plan_label(chains, images_per_chain));
      break;
    }
  }
  chain_sampling.validate();
}

void to_json(json& j, const ScalingPlan& p) {
  j = json{{"strategy", std::string(to_string(p.strategy))},
           {"chains", p.chains},
           {"images_per_chain", p.images_per_chain},
           {"total", p.total()},
           {"chain_sampling", p.chain_sampling},
           {"seed_base", p.seed_base}};
}

std::vector<std::pair<int, int>> hybrid_configurations(int n) {
  require(n >= 1, ErrorKind::invalid_plan, "N must be >= 1");
  switch (n) {
    case 2: return {{1, 2}, {2, 1}};
    case 4: return {{2, 2}};
    case 8: return {{2, 4}, {4, 2}};
    case 16: return {{4, 4}};
    default: break;
  }
  std::vector<std::pair<int, int>> out;
  for (int c = 2; c <= n / 2; ++c)
    if (n % c == 0 && n / c >= 2) out.emplace_back(c, n / c);
  if (out.empty()) {
    out.emplace_back(1, n);
    if (n > 1) out.emplace_back(n, 1);
  }
  return out;
}

ScalingPlan expand_plan(Strategy strategy, int n, PlanOverrides overrides, SamplingParams chain_sampling,
                        std::int64_t seed_base) {
  require(n >= 1, ErrorKind::invalid_plan, "N must be >= 1");
  ScalingPlan plan;
  plan.strategy = strategy;
  plan.chain_sampling = chain_sampling;
  plan.seed_base = seed_base;

  switch (strategy) {
    case Strategy::single_chain:
    case Strategy::vanilla: plan.chains = 1; break;
    case Strategy::multi_chain: plan.chains = n; break;
    case Strategy::hybrid:
      // Largest divisor not above sqrt(N): 2→(1,2), 4→(2,2), 8→(2,4), 16→(4,4).
      plan.chains = 1;
      for (int c = 1; c * c <= n; ++c)
        if (n % c == 0) plan.chains = c;
      break;
  }
  plan.images_per_chain = n / plan.chains;

  if (overrides.chains || overrides.images_per_chain) {
    int c = overrides.chains.value_or(0);
    int k = overrides.images_per_chain.value_or(0);
    require(c >= 0 && k >= 0, ErrorKind::invalid_plan, "override values must be positive");
    if (overrides.chains && overrides.images_per_chain) {
      require(static_cast<long long>(c) * k == n, ErrorKind::invalid_plan,
              "override " + plan_label(c, k) + " does not multiply to N=" + std::to_string(n));
    } else if (overrides.chains) {
      require(c >= 1 && n % c == 0, ErrorKind::invalid_plan,
              "chain override " + std::to_string(c) + " does not divide N=" + std::to_string(n));
      k = n / c;
    } else {
      require(k >= 1 && n % k == 0, ErrorKind::invalid_plan,
              "images-per-chain override " + std::to_string(k) + " does not divide N=" + std::to_string(n));
      c = n / k;
    }
    plan.chains = c;
    plan.images_per_chain = k;
  }
  plan.validate();
  return plan;
}

ScaledOutcome execute_plan(const Backends& backends, const MultimodalContext& ctx, const ScalingPlan& plan) {
  plan.validate();
  validate(ctx);
  ScaledOutcome out;
  out.plan = plan;

  struct ChainSlot {
    std::optional<ReasoningChain> chain;
    std::exception_ptr error;
    std::string message;
  };
  std::vector<ChainSlot> slots;
  if (plan.strategy == Strategy::vanilla) {
    ReasoningChain empty;
    empty.sampling = plan.chain_sampling;
    empty.backend_id = "none";
    slots.push_back({empty, nullptr, {}});
  } else {
    slots = parallel_map<ChainSlot>(static_cast<std::size_t>(plan.chains), backends.config().parallelism,
                                    [&](std::size_t c) {
                                      ChainSlot s;
                                      auto params = plan.chain_sampling;
                                      params.seed += static_cast<std::int64_t>(c);
                                      try {
                                        s.chain = generate_reasoning(backends, ctx, params, static_cast<int>(c));
                                      } catch (const std::exception& e) {
                                        s.error = std::current_exception();
                                        s.message = e.what();
                                      }
                                      return s;
                                    });
  }
  for (std::size_t c = 0; c < slots.size(); ++c) {
    if (slots[c].chain) {
      out.chains.push_back(*slots[c].chain);
    } else {
      ReasoningChain failed;
      failed.chain_index = static_cast<int>(c);
      failed.backend_id = "failed";
      out.chains.push_back(failed);
    }
  }

  const auto k = static_cast<std::size_t>(plan.images_per_chain);
  std::vector<std::exception_ptr> job_errors(slots.size() * k);
  out.jobs = parallel_map<ScaledJob>(slots.size() * k, backends.config().parallelism, [&](std::size_t j) {
    ScaledJob job;
    const auto c = j / k;
    job.chain_index = static_cast<int>(c);
    job.seed = plan.seed_base + static_cast<std::int64_t>(j % k);
    if (!slots[c].chain) {
      job.error = "chain failed: " + slots[c].message;
      job_errors[j] = slots[c].error;
      return job;
    }
    try {
      job.image = generate_image_for_chain(backends, ctx, *slots[c].chain, job.seed);
    } catch (const std::exception& e) {
      job.error = e.what();
      job_errors[j] = std::current_exception();
    }
    return job;
  });

  if (std::none_of(out.jobs.begin(), out.jobs.end(), [](const ScaledJob& j) { return j.ok(); })) {
    for (auto& e : job_errors)
      if (e) std::rethrow_exception(e);
    fail(ErrorKind::backend_unavailable, "no scaled job succeeded");
  }
  return out;
}

ScaledOutcome best_of_n(ScaledOutcome outcome, std::span<const double> verifier_scores, double threshold) {
  require(!verifier_scores.empty(), ErrorKind::invalid_input, "best_of_n needs at least one score");
  require(outcome.jobs.empty() || verifier_scores.size() == outcome.jobs.size(), ErrorKind::invalid_input,
          "verifier scores are not parallel to jobs");
  outcome.verifier_scores.assign(verifier_scores.begin(), verifier_scores.end());
  std::size_t best = 0;
  for (std::size_t i = 1; i < verifier_scores.size(); ++i)
    if (verifier_scores[i] > verifier_scores[best]) best = i;
  outcome.best_index = static_cast<int>(best);
  outcome.passed = verifier_scores[best] >= threshold;
  return outcome;
}

bool passes_at(std::span<const double> scores, int n, double threshold) {
  require(n >= 1 && static_cast<std::size_t>(n) <= scores.size(), ErrorKind::invalid_input,
          "N=" + std::to_string(n) + " exceeds the " + std::to_string(scores.size()) + " available jobs");
  return std::any_of(scores.begin(), scores.begin() + n, [&](double s) { return s >= threshold; });
}

PassCurve pass_curve(const std::vector<std::vector<double>>& score_lists, const std::vector<double>& thresholds,
                     const std::vector<int>& ns) {
  require(!score_lists.empty(), ErrorKind::invalid_input, "pass_curve needs at least one task");
  require(!thresholds.empty() && !ns.empty(), ErrorKind::invalid_input, "pass_curve needs thresholds and N values");
  PassCurve curve{thresholds, ns, {}};
  for (double t : thresholds) {
    std::vector<double> row;
    for (int n : ns) {
      std::size_t passed = 0;
      for (const auto& scores : score_lists) passed += passes_at(scores, n, t) ? 1 : 0;
      row.push_back(static_cast<double>(passed) / static_cast<double>(score_lists.size()));
    }
    curve.rates.push_back(std::move(row));
  }
  return curve;
}

void to_json(json& j, const PassCurve& c) {
  j = json{{"thresholds", c.thresholds}, {"ns", c.ns}, {"rates", c.rates}};
}

void to_json(json& j, const ScaledOutcome& o) {
  json jobs = json::array();
  for (std::size_t i = 0; i < o.jobs.size(); ++i) {
    const auto& job = o.jobs[i];
    json jj{{"index", i}, {"chain_index", job.chain_index}, {"seed", job.seed}};
    if (job.image) jj["image"] = *job.image;
    if (!job.error.empty()) jj["error"] = job.error;
    if (i < o.verifier_scores.size()) jj["score"] = o.verifier_scores[i];
    jobs.push_back(std::move(jj));
  }
  j = json{{"plan", o.plan}, {"chains", o.chains}, {"jobs", jobs}, {"best_index", o.best_index},
           {"passed", o.passed}};
}

double keyword_verifier(const ScaledJob& job, const ReasoningChain& chain, const TaskSpec& task) {
  if (!job.ok() || !task.verifier_target || chain.text.empty()) return 0.0;
  auto haystack = lower(chain.text);
  std::istringstream words(lower(*task.verifier_target));
  bool any = false;
  for (std::string w; words >> w;) {
    any = true;
    if (haystack.find(w) == std::string::npos) return 0.0;
  }
  return any ? 1.0 : 0.0;
}

std::vector<double> verify_outcome(const ScaledOutcome& outcome, const TaskSpec& task, const Verifier& verifier) {
  std::vector<double> scores;
  scores.reserve(outcome.jobs.size());
  for (const auto& job : outcome.jobs)
    scores.push_back(verifier(job, outcome.chains.at(static_cast<std::size_t>(job.chain_index)), task));
  return scores;
}

}  // namespace cotforge
