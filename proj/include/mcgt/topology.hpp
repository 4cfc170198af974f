#pragma once

#include <Eigen/Dense>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mcgt/common.hpp"
#include "mcgt/digraph.hpp"

namespace mcgt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Per-cluster decision dimensions q_h with prefix-sum offsets into the
/// stacked decision vector of length q = sum q_h.
struct DecisionLayout {
  std::vector<int> dims;
  std::vector<int> offsets;  // size H+1, offsets.back() == total
  int total = 0;

  static DecisionLayout from_dims(std::vector<int> dims) {
    DecisionLayout l;
    l.dims = std::move(dims);
    l.offsets.resize(l.dims.size() + 1, 0);
    for (std::size_t h = 0; h < l.dims.size(); ++h) {
      if (l.dims[h] <= 0)
        throw ValidationError("layout: dimension of block " +
                              std::to_string(h) + " must be positive");
      l.offsets[h + 1] = l.offsets[h] + l.dims[h];
    }
    l.total = l.offsets.back();
    return l;
  }

  int block_count() const { return static_cast<int>(dims.size()); }
  int dim(int h) const { return dims[h]; }
  int offset(int h) const { return offsets[h]; }
};

/// Contiguous grouping of agents 0..n-1 into clusters: the first n_1 agents
/// form cluster 0, the next n_2 cluster 1, and so on.
struct AgentPartition {
  std::vector<int> sizes;
  std::vector<int> offsets;  // size H+1
  int total = 0;
  std::vector<int> cluster_index;  // per agent

  static AgentPartition from_sizes(std::vector<int> sizes) {
    AgentPartition p;
    p.sizes = std::move(sizes);
    if (p.sizes.empty()) throw ValidationError("partition: no clusters");
    p.offsets.resize(p.sizes.size() + 1, 0);
    for (std::size_t h = 0; h < p.sizes.size(); ++h) {
      if (p.sizes[h] <= 0)
        throw ValidationError("partition: cluster " + std::to_string(h) +
                              " must be non-empty");
      p.offsets[h + 1] = p.offsets[h] + p.sizes[h];
    }
    p.total = p.offsets.back();
    p.cluster_index.resize(p.total);
    for (std::size_t h = 0; h < p.sizes.size(); ++h)
      for (int i = p.offsets[h]; i < p.offsets[h + 1]; ++i)
        p.cluster_index[i] = static_cast<int>(h);
    return p;
  }

  int cluster_count() const { return static_cast<int>(sizes.size()); }
  int cluster_of(int agent) const { return cluster_index[agent]; }
  int local_index(int agent) const {
    return agent - offsets[cluster_of(agent)];
  }
};

/// The two-layer communication architecture: one global digraph mixing all
/// n agents and, per cluster, an intra-cluster digraph over its n_h agents
/// (node ids local to the cluster). All graphs must be strongly connected.
class ClusterTopology {
public:
  ClusterTopology(Digraph global, std::vector<Digraph> cluster_graphs,
                  DecisionLayout layout)
      : global_(std::move(global)),
        cluster_graphs_(std::move(cluster_graphs)),
        layout_(std::move(layout)) {
    std::vector<int> sizes(cluster_graphs_.size());
    for (std::size_t h = 0; h < cluster_graphs_.size(); ++h)
      sizes[h] = cluster_graphs_[h].node_count();
    partition_ = AgentPartition::from_sizes(std::move(sizes));
    if (partition_.total != global_.node_count())
      throw ValidationError(
          "topology: cluster sizes sum to " + std::to_string(partition_.total) +
          " but global graph has " + std::to_string(global_.node_count()) +
          " nodes");
    if (layout_.block_count() != partition_.cluster_count())
      throw ValidationError("topology: layout has " +
                            std::to_string(layout_.block_count()) +
                            " blocks for " +
                            std::to_string(partition_.cluster_count()) +
                            " clusters");
    if (!is_strongly_connected(global_))
      throw ValidationError("topology: global graph is not strongly connected");
    for (std::size_t h = 0; h < cluster_graphs_.size(); ++h)
      if (!is_strongly_connected(cluster_graphs_[h]))
        throw ValidationError("topology: cluster graph " + std::to_string(h) +
                              " is not strongly connected");
  }

  int agent_count() const { return partition_.total; }
  int cluster_count() const { return partition_.cluster_count(); }
  const Digraph& global() const { return global_; }
  const Digraph& cluster_graph(int h) const { return cluster_graphs_[h]; }
  const AgentPartition& partition() const { return partition_; }
  const DecisionLayout& layout() const { return layout_; }

private:
  Digraph global_;
  std::vector<Digraph> cluster_graphs_;
  DecisionLayout layout_;
  AgentPartition partition_;
};

/// R_ij = 1 / (1 + in-degree of i) for every in-neighbor j of i and for
/// j = i. Each row i is uniform over the self-inclusive in-neighborhood,
/// so rows sum to one by construction.
inline Matrix row_stochastic_weights(const Digraph& g) {
  if (!is_strongly_connected(g))
    throw ValidationError("weights: graph is not strongly connected");
  const int n = g.node_count();
  Matrix R = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double w = 1.0 / (1.0 + g.in_degree(i));
    R(i, i) = w;
    for (int j : g.in_neighbors(i)) R(i, j) = w;
  }
  return R;
}

/// C_ij = 1 / (1 + out-degree of j) for every out-neighbor i of j and for
/// i = j: each column is uniform over the sender's self-inclusive
/// out-neighborhood, so columns sum to one.
inline Matrix column_stochastic_weights(const Digraph& g) {
  if (!is_strongly_connected(g))
    throw ValidationError("weights: graph is not strongly connected");
  const int n = g.node_count();
  Matrix C = Matrix::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    const double w = 1.0 / (1.0 + g.out_degree(j));
    C(j, j) = w;
    for (int i : g.out_neighbors(j)) C(i, j) = w;
  }
  return C;
}

namespace detail {

// Power iteration for the eigenvalue-1 eigenvector of a stochastic matrix
// applied as `apply`. The iterate keeps entry sum 1; positive diagonal plus
// irreducibility make the fixed point unique and the iteration geometric.
template <class Apply>
Vector stationary_vector(int n, Apply&& apply) {
  constexpr double kTol = 1e-14;
  constexpr long kMaxIter = 1'000'000;
  Vector x = Vector::Constant(n, 1.0 / n);
  for (long it = 0; it < kMaxIter; ++it) {
    Vector next = apply(x);
    next /= next.sum();
    const double change = (next - x).lpNorm<Eigen::Infinity>();
    x = std::move(next);
    if (change <= kTol) return x;
  }
  throw NumericalError(
      "perron: power iteration did not converge; input is likely not an "
      "irreducible stochastic matrix with positive diagonal");
}

}  // namespace detail

/// Left eigenvector of a row-stochastic irreducible R for eigenvalue 1,
/// normalized to u^T 1 = 1, u > 0.
inline Vector left_perron(const Matrix& R) {
  return detail::stationary_vector(
      static_cast<int>(R.rows()),
      [&](const Vector& x) -> Vector { return R.transpose() * x; });
}

/// Right eigenvector of a column-stochastic irreducible C for eigenvalue 1,
/// normalized to 1^T v = 1, v > 0.
inline Vector right_perron(const Matrix& C) {
  return detail::stationary_vector(
      static_cast<int>(C.rows()),
      [&](const Vector& x) -> Vector { return C * x; });
}

/// The mixing matrices of a topology together with their eigenvectors:
/// global row-stochastic R with left eigenvector u, per-cluster
/// column-stochastic C^h with right eigenvectors v^h.
struct WeightPair {
  Matrix R;
  Vector u;
  std::vector<Matrix> C;
  std::vector<Vector> v;

  static WeightPair build(const ClusterTopology& topo) {
    WeightPair w;
    w.R = row_stochastic_weights(topo.global());
    w.u = left_perron(w.R);
    w.C.reserve(topo.cluster_count());
    w.v.reserve(topo.cluster_count());
    for (int h = 0; h < topo.cluster_count(); ++h) {
      w.C.push_back(column_stochastic_weights(topo.cluster_graph(h)));
      w.v.push_back(right_perron(w.C.back()));
    }
    return w;
  }

  /// Stochasticity and eigenvector residuals, all required within tol.
  void validate(double tol = 1e-12) const {
    const int n = static_cast<int>(R.rows());
    if ((R.array() < 0).any()) throw ValidationError("weights: R has negative entries");
    if (R.diagonal().minCoeff() <= 0)
      throw ValidationError("weights: R diagonal not strictly positive");
    if ((R.rowwise().sum().array() - 1.0).abs().maxCoeff() > tol)
      throw ValidationError("weights: R rows do not sum to 1");
    if (u.minCoeff() <= 0) throw ValidationError("weights: u not positive");
    if (std::abs(u.sum() - 1.0) > tol)
      throw ValidationError("weights: u does not sum to 1");
    if ((R.transpose() * u - u).lpNorm<Eigen::Infinity>() > tol)
      throw ValidationError("weights: u^T R != u^T");
    for (std::size_t h = 0; h < C.size(); ++h) {
      const std::string tag = "weights: cluster " + std::to_string(h);
      if ((C[h].array() < 0).any()) throw ValidationError(tag + ": C has negative entries");
      if (C[h].diagonal().minCoeff() <= 0)
        throw ValidationError(tag + ": C diagonal not strictly positive");
      if ((C[h].colwise().sum().array() - 1.0).abs().maxCoeff() > tol)
        throw ValidationError(tag + ": C columns do not sum to 1");
      if (v[h].minCoeff() <= 0) throw ValidationError(tag + ": v not positive");
      if (std::abs(v[h].sum() - 1.0) > tol)
        throw ValidationError(tag + ": v does not sum to 1");
      if ((C[h] * v[h] - v[h]).lpNorm<Eigen::Infinity>() > tol)
        throw ValidationError(tag + ": C v != v");
    }
    (void)n;
  }
};

}  // namespace mcgt
