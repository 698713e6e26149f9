#pragma once

// Embedding-based self-consistency selection. Candidates are the rows of a
// dense matrix; similarities are raw inner products unless normalization is
// requested.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cotforge/backends.hpp"
#include "cotforge/errors.hpp"
#include "cotforge/types.hpp"

namespace cotforge {

template <typename Scalar>
using SimilarityMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// S(i, j) = <v_i, v_j> over the rows of `embeddings`. Only the upper
// triangle is computed, so S is exactly symmetric.
template <typename Derived>
SimilarityMatrix<typename Derived::Scalar> similarity_matrix(const Eigen::MatrixBase<Derived>& embeddings) {
  using Scalar = typename Derived::Scalar;
  const auto m = embeddings.rows();
  require(m >= 2, ErrorKind::invalid_input, "similarity matrix needs at least two candidates");
  SimilarityMatrix<Scalar> s(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i; j < m; ++j) s(i, j) = s(j, i) = embeddings.row(i).dot(embeddings.row(j));
  return s;
}

// Mean of each row excluding the diagonal, divided by exactly M - 1.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> average_similarity(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  const auto m = s.rows();
  require(m >= 2 && s.cols() == m, ErrorKind::invalid_input, "average similarity needs a square matrix with M >= 2");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> avg(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    Scalar sum(0);
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) sum += s(i, j);
    avg(i) = sum / static_cast<Scalar>(m - 1);
  }
  return avg;
}

// First index holding the maximum.
template <typename Derived>
Eigen::Index argmax_lowest(const Eigen::DenseBase<Derived>& v) {
  require(v.size() >= 1, ErrorKind::invalid_input, "argmax of an empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> normalized_rows(
    const Eigen::MatrixBase<Derived>& embeddings) {
  auto out = embeddings.eval();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    auto norm = out.row(i).norm();
    if (norm > 0) out.row(i) /= norm;
  }
  return out;
}

struct ConsistencyOptions {
  bool normalize = false;  // cosine instead of raw inner product
};

struct ConsistencyResult {
  Eigen::Index index = 0;
  Eigen::VectorXd average;  // empty when M == 1
};

template <typename Derived>
ConsistencyResult select_consistent(const Eigen::MatrixBase<Derived>& embeddings, ConsistencyOptions opts = {}) {
  require(embeddings.rows() >= 1, ErrorKind::invalid_input, "select_consistent needs at least one candidate");
  if (embeddings.rows() == 1) return {0, {}};
  Eigen::MatrixXd e = embeddings.template cast<double>();
  if (opts.normalize) e = normalized_rows(e);
  ConsistencyResult r;
  r.average = average_similarity(similarity_matrix(e));
  r.index = argmax_lowest(r.average);
  return r;
}

// Stacks embeddings as rows; all must share one dimension.
Eigen::MatrixXd stack_embeddings(const std::vector<Embedding>& embeddings);

// One prompt per chain, in order, via the prompt-derivation template.
std::vector<std::string> derive_prompts(const Backends& backends, const std::vector<ReasoningChain>& cots,
                                        const MultimodalContext& ctx);

std::vector<Embedding> embed_all(const Backends& backends, const std::vector<std::string>& texts);

// Prompt-level form; prompts and embeddings are parallel lists.
ConsistencyResult select_consistent(const std::vector<std::string>& prompts, const std::vector<Embedding>& embeddings,
                                    ConsistencyOptions opts = {});

}  // namespace cotforge
