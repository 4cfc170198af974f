#pragma once

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mcgt/common.hpp"

namespace mcgt {

using Edge = std::pair<int, int>;

/// Directed graph over nodes 0..n-1. Stored edges never include self-loops;
/// every node carries an implicit self-loop, which the weighting rules use
/// to guarantee positive diagonals.
class Digraph {
public:
  Digraph() = default;

  Digraph(int node_count, std::vector<Edge> edges)
      : n_(node_count), edges_(std::move(edges)) {
    if (n_ <= 0) throw ValidationError("digraph: node_count must be positive");
    std::sort(edges_.begin(), edges_.end());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const auto [from, to] = edges_[e];
      if (from < 0 || from >= n_ || to < 0 || to >= n_)
        throw ValidationError("digraph: edge (" + std::to_string(from) + "," +
                              std::to_string(to) + ") outside node range");
      if (from == to)
        throw ValidationError("digraph: explicit self-loop on node " +
                              std::to_string(from));
      if (e > 0 && edges_[e] == edges_[e - 1])
        throw ValidationError("digraph: duplicate edge (" +
                              std::to_string(from) + "," + std::to_string(to) +
                              ")");
    }
    in_.assign(n_, {});
    out_.assign(n_, {});
    for (const auto& [from, to] : edges_) {
      out_[from].push_back(to);
      in_[to].push_back(from);
    }
  }

  int node_count() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }

  /// In-neighbors of i (excluding the implicit self-loop).
  const std::vector<int>& in_neighbors(int i) const { return in_[i]; }
  const std::vector<int>& out_neighbors(int i) const { return out_[i]; }

  int in_degree(int i) const { return static_cast<int>(in_[i].size()); }
  int out_degree(int i) const { return static_cast<int>(out_[i].size()); }

  bool has_edge(int from, int to) const {
    return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
  }

private:
  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> in_, out_;
};

namespace detail {

inline void reach(const Digraph& g, bool forward, std::vector<char>& seen) {
  seen.assign(g.node_count(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    const auto& next = forward ? g.out_neighbors(v) : g.in_neighbors(v);
    for (int w : next) {
      if (!seen[w]) {
        seen[w] = 1;
        stack.push_back(w);
      }
    }
  }
}

}  // namespace detail

/// True iff every node reaches every other node along directed edges.
/// Self-loops are irrelevant. A single node is strongly connected.
inline bool is_strongly_connected(const Digraph& g) {
  if (g.node_count() == 1) return true;
  std::vector<char> seen;
  detail::reach(g, /*forward=*/true, seen);
  if (std::count(seen.begin(), seen.end(), 1) != g.node_count()) return false;
  detail::reach(g, /*forward=*/false, seen);
  return std::count(seen.begin(), seen.end(), 1) == g.node_count();
}

inline Digraph ring_digraph(int n) {
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  if (n > 1) edges.emplace_back(n - 1, 0);
  return Digraph(n, std::move(edges));
}

inline Digraph complete_digraph(int n) {
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) edges.emplace_back(i, j);
  return Digraph(n, std::move(edges));
}

/// Seeded random strongly connected digraph: a directed Hamiltonian cycle
/// through a random permutation plus `extra_edges` distinct random edges.
inline Digraph random_strongly_connected_digraph(int n, std::uint64_t seed,
                                                 int extra_edges = 0) {
  if (n <= 0) throw ValidationError("digraph: node_count must be positive");
  detail::Rng rng(seed);
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(detail::bounded_rand(rng, i + 1));
    std::swap(perm[i], perm[j]);
  }
  std::vector<Edge> edges;
  if (n > 1)
    for (int i = 0; i < n; ++i) edges.emplace_back(perm[i], perm[(i + 1) % n]);
  std::sort(edges.begin(), edges.end());

  const long max_extra = static_cast<long>(n) * (n - 1) - static_cast<long>(edges.size());
  long want = std::min<long>(extra_edges, max_extra);
  while (want > 0) {
    const int from = static_cast<int>(detail::bounded_rand(rng, n));
    const int to = static_cast<int>(detail::bounded_rand(rng, n));
    if (from == to) continue;
    const Edge e{from, to};
    const auto pos = std::lower_bound(edges.begin(), edges.end(), e);
    if (pos != edges.end() && *pos == e) continue;
    edges.insert(pos, e);
    --want;
  }
  return Digraph(n, std::move(edges));
}

/// Edge-list text format: first line `nodes <n>`, then one `from to` pair
/// per line, 0-based.
inline void write_edge_list(std::ostream& os, const Digraph& g) {
  os << "nodes " << g.node_count() << "\n";
  for (const auto& [from, to] : g.edges()) os << from << " " << to << "\n";
}

inline Digraph read_edge_list(std::istream& is) {
  std::string tag;
  int n = 0;
  if (!(is >> tag >> n) || tag != "nodes")
    throw ValidationError("edge list: expected header `nodes <count>`");
  std::vector<Edge> edges;
  int from, to;
  while (is >> from >> to) edges.emplace_back(from, to);
  if (!is.eof() && is.fail() && !edges.empty())
    throw ValidationError("edge list: malformed edge line");
  return Digraph(n, std::move(edges));
}

inline void write_edge_list_file(const std::string& path, const Digraph& g) {
  std::ofstream os(path);
  if (!os) throw ValidationError("edge list: cannot open " + path);
  write_edge_list(os, g);
}

inline Digraph read_edge_list_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("edge list: cannot open " + path);
  return read_edge_list(is);
}

}  // namespace mcgt
