#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cotforge/errors.hpp"
#include "cotforge/types.hpp"

namespace cotforge {

// Negative mean token log-probability.
template <typename Derived>
typename Derived::Scalar lm_loss(const Eigen::DenseBase<Derived>& logprobs) {
  using Scalar = typename Derived::Scalar;
  require(logprobs.size() > 0, ErrorKind::invalid_input, "lm_loss needs at least one token");
  require((logprobs.derived().array() <= Scalar(0)).all(), ErrorKind::invalid_input,
          "lm_loss got a positive log-probability");
  return -logprobs.mean();
}

inline double lm_loss(std::span<const double> logprobs) {
  return lm_loss(Eigen::Map<const Eigen::VectorXd>(logprobs.data(), static_cast<Eigen::Index>(logprobs.size())));
}

// Squared Euclidean distance, not averaged over components.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar mse_loss(const Eigen::MatrixBase<DerivedA>& predicted,
                                   const Eigen::MatrixBase<DerivedB>& target) {
  require(predicted.rows() == target.rows() && predicted.cols() == target.cols(), ErrorKind::invalid_input,
          "mse_loss inputs differ in shape");
  return (predicted - target).squaredNorm();
}

inline double mse_loss(std::span<const double> predicted, std::span<const double> target) {
  require(predicted.size() == target.size(), ErrorKind::invalid_input, "mse_loss inputs differ in length");
  using Vec = Eigen::Map<const Eigen::VectorXd>;
  return mse_loss(Vec(predicted.data(), static_cast<Eigen::Index>(predicted.size())),
                  Vec(target.data(), static_cast<Eigen::Index>(target.size())));
}

enum class Benchmark { cobsat, dreambench };

std::string_view to_string(Benchmark b);
Benchmark benchmark_from_string(std::string_view s);

inline constexpr std::array<std::string_view, 10> kCobsatTasks{
    "Color-I", "Bkg-I", "Style-I", "Action-I", "Texture-I",
    "Color-II", "Bkg-II", "Style-II", "Action-II", "Texture-II"};

struct TaskScores {
  std::map<std::string, double> per_task;
  Benchmark benchmark = Benchmark::cobsat;
};

// Mean over exactly the ten CoBSAT tasks.
double aggregate_cobsat(const TaskScores& scores);

// Truncates toward zero at `decimals` places and drops the leading zero of
// values in (-1, 1): 0.3496 → ".349".
std::string render_truncated(double value, int decimals = 3);

struct SampleCPPF {
  double cp = 0.0;
  double pf = 0.0;
  std::string category;
};

struct DreamBenchAggregate {
  double cp_mean = 0.0;
  double pf_mean = 0.0;
  double cp_pf = 0.0;             // mean of per-sample products
  double product_of_means = 0.0;  // cp_mean · pf_mean
};

DreamBenchAggregate aggregate_dreambench(std::span<const SampleCPPF> samples);

// A reported CP·PF cell checked against the product of its overall CP and PF.
struct CpPfRowCheck {
  std::string label;
  double cp = 0.0;
  double pf = 0.0;
  double displayed = 0.0;
  double product = 0.0;
  bool consistent = false;
};

CpPfRowCheck check_cp_pf_row(std::string label, double cp, double pf, double displayed, double tolerance = 0.001);

struct AblationReport {
  std::vector<std::string> metrics;
  std::map<std::string, double> without_refine;
  std::map<std::string, double> with_refine;
  std::map<std::string, double> delta;  // with - without, rounded to 3 places

  std::string render_markdown() const;
  json to_json() const;
};

// `order` fixes column order; metrics missing from it follow alphabetically.
AblationReport ablation_report(const std::map<std::string, double>& with_refine,
                               const std::map<std::string, double>& without_refine,
                               const std::vector<std::string>& order = {});

// Ten CoBSAT scores per row plus the truncated average.
std::string render_cobsat_table(const std::vector<std::pair<std::string, TaskScores>>& rows, std::string_view format);
std::string render_dreambench_table(const std::vector<std::pair<std::string, DreamBenchAggregate>>& rows,
                                    std::string_view format);

}  // namespace cotforge
