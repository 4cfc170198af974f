#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcgt/common.hpp"
#include "mcgt/digraph.hpp"
#include "mcgt/game.hpp"
#include "mcgt/topology.hpp"

namespace mcgt {

using Json = nlohmann::json;

struct GraphSpec {
  enum class Kind { ring, complete, random, file };
  Kind kind = Kind::ring;
  std::uint64_t seed = 0;
  int extra_edges = 0;
  std::string path;
  bool leader_follower = false;  // global graph only
};

struct CoefficientTriple {
  double a = 1.0, b = 0.0, c = 0.0;
};

struct ClusterSpec {
  int size = 0;
  std::vector<CoefficientTriple> coefficients;  // empty when seeded
  std::optional<std::uint64_t> coefficient_seed;
};

struct CoefficientRanges {
  double a_lo = 1.0, a_hi = 2.0;
  double b_lo = 0.0, b_hi = 2.0;
  double c_lo = 0.0, c_hi = 1.0;
};

struct OutputSpec {
  std::string trace = "trace.csv";
  std::string report = "report.txt";
};

/// One experiment: a Cournot instance, its two-layer topology, and the run
/// controls. `alpha` empty means "certify": pick the largest step size the
/// convergence certificate admits.
struct ExperimentConfig {
  std::vector<ClusterSpec> clusters;
  double price_constant = 0.0;
  std::vector<GraphSpec> cluster_graphs;  // one per cluster
  GraphSpec global_graph;
  std::optional<double> alpha;
  long max_iter = 1000;
  double consensus_tol = 0.0;
  double gradient_tol = 0.0;
  std::uint64_t x0_seed = 0;
  long record_every = 1;
  double compare_epsilon = 5e-3;
  CoefficientRanges coefficient_ranges;
  OutputSpec output;
  Json raw;  // exact parsed document, embedded in reports
};

namespace detail {

inline const Json& require_field(const Json& j, const char* key,
                                 const std::string& where) {
  if (!j.is_object())
    throw ValidationError("config: " + where + " must be an object");
  auto it = j.find(key);
  if (it == j.end())
    throw ValidationError("config: missing field `" + where +
                          (where.empty() ? "" : ".") + key + "`");
  return *it;
}

inline double require_number(const Json& j, const char* key,
                             const std::string& where) {
  const Json& v = require_field(j, key, where);
  if (!v.is_number())
    throw ValidationError("config: field `" + where +
                          (where.empty() ? "" : ".") + key +
                          "` must be a number");
  return v.get<double>();
}

inline GraphSpec parse_graph_spec(const Json& j, const std::string& where,
                                  bool allow_leader_follower) {
  if (!j.is_object())
    throw ValidationError("config: `" + where + "` must be an object");
  GraphSpec g;
  const std::string kind = require_field(j, "kind", where).get<std::string>();
  if (kind == "ring") g.kind = GraphSpec::Kind::ring;
  else if (kind == "complete") g.kind = GraphSpec::Kind::complete;
  else if (kind == "random") g.kind = GraphSpec::Kind::random;
  else if (kind == "file") g.kind = GraphSpec::Kind::file;
  else
    throw ValidationError("config: `" + where + ".kind` must be one of "
                          "ring|complete|random|file, got `" + kind + "`");
  for (auto& [key, value] : j.items()) {
    if (key == "kind") continue;
    if (key == "seed") g.seed = value.get<std::uint64_t>();
    else if (key == "extra_edges") g.extra_edges = value.get<int>();
    else if (key == "path") g.path = value.get<std::string>();
    else if (key == "leader_follower" && allow_leader_follower)
      g.leader_follower = value.get<bool>();
    else
      throw ValidationError("config: unknown field `" + where + "." + key + "`");
  }
  if (g.kind == GraphSpec::Kind::file && g.path.empty())
    throw ValidationError("config: `" + where + ".path` required for kind file");
  if (g.extra_edges < 0)
    throw ValidationError("config: `" + where + ".extra_edges` must be >= 0");
  return g;
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
  using detail::require_field;
  using detail::require_number;
  if (!j.is_object()) throw ValidationError("config: document must be an object");

  static const std::vector<std::string> known = {
      "clusters",      "price_constant", "cluster_graphs", "global_graph",
      "alpha",         "max_iter",       "consensus_tol",  "gradient_tol",
      "x0_seed",       "record_every",   "compare_epsilon",
      "coefficient_ranges", "output"};
  for (auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ValidationError("config: unknown field `" + key + "`");

  ExperimentConfig cfg;
  cfg.raw = j;

  const Json& clusters = require_field(j, "clusters", "");
  if (!clusters.is_array() || clusters.empty())
    throw ValidationError("config: `clusters` must be a non-empty array");
  for (std::size_t h = 0; h < clusters.size(); ++h) {
    const std::string where = "clusters[" + std::to_string(h) + "]";
    const Json& cj = clusters[h];
    ClusterSpec spec;
    spec.size = static_cast<int>(require_number(cj, "size", where));
    if (spec.size <= 0)
      throw ValidationError("config: `" + where + ".size` must be positive");
    const bool has_list = cj.contains("coefficients");
    const bool has_seed = cj.contains("coefficient_seed");
    if (has_list == has_seed)
      throw ValidationError("config: `" + where +
                            "` needs exactly one of `coefficients` or "
                            "`coefficient_seed`");
    if (has_seed) {
      spec.coefficient_seed = cj.at("coefficient_seed").get<std::uint64_t>();
    } else {
      const Json& list = cj.at("coefficients");
      if (!list.is_array() || static_cast<int>(list.size()) != spec.size)
        throw ValidationError("config: `" + where +
                              ".coefficients` must list one {a,b,c} per agent");
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string cw = where + ".coefficients[" + std::to_string(i) + "]";
        CoefficientTriple t;
        t.a = require_number(list[i], "a", cw);
        t.b = require_number(list[i], "b", cw);
        t.c = require_number(list[i], "c", cw);
        if (t.a <= 0)
          throw ValidationError("config: `" + cw + ".a` must be positive");
        spec.coefficients.push_back(t);
      }
    }
    for (auto& [key, value] : cj.items())
      if (key != "size" && key != "coefficients" && key != "coefficient_seed")
        throw ValidationError("config: unknown field `" + where + "." + key + "`");
    cfg.clusters.push_back(std::move(spec));
  }
  const int H = static_cast<int>(cfg.clusters.size());

  cfg.price_constant = require_number(j, "price_constant", "");
  if (cfg.price_constant <= 0)
    throw ValidationError("config: `price_constant` must be positive");

  const Json& cg = require_field(j, "cluster_graphs", "");
  if (cg.is_object()) {
    const GraphSpec one = detail::parse_graph_spec(cg, "cluster_graphs", false);
    cfg.cluster_graphs.assign(H, one);
  } else if (cg.is_array() && static_cast<int>(cg.size()) == H) {
    for (int h = 0; h < H; ++h)
      cfg.cluster_graphs.push_back(detail::parse_graph_spec(
          cg[h], "cluster_graphs[" + std::to_string(h) + "]", false));
  } else {
    throw ValidationError(
        "config: `cluster_graphs` must be a graph spec or an array with one "
        "spec per cluster");
  }

  cfg.global_graph =
      detail::parse_graph_spec(require_field(j, "global_graph", ""),
                               "global_graph", true);

  const Json& alpha = require_field(j, "alpha", "");
  if (alpha.is_string()) {
    if (alpha.get<std::string>() != "certify")
      throw ValidationError("config: `alpha` must be a number or \"certify\"");
    cfg.alpha = std::nullopt;
  } else if (alpha.is_number()) {
    cfg.alpha = alpha.get<double>();
    if (*cfg.alpha <= 0)
      throw ValidationError("config: `alpha` must be positive");
  } else {
    throw ValidationError("config: `alpha` must be a number or \"certify\"");
  }

  cfg.max_iter = static_cast<long>(require_number(j, "max_iter", ""));
  if (cfg.max_iter < 0)
    throw ValidationError("config: `max_iter` must be >= 0");

  if (j.contains("consensus_tol")) cfg.consensus_tol = j.at("consensus_tol").get<double>();
  if (j.contains("gradient_tol")) cfg.gradient_tol = j.at("gradient_tol").get<double>();
  if (cfg.consensus_tol < 0 || cfg.gradient_tol < 0)
    throw ValidationError("config: tolerances must be nonnegative");
  if (j.contains("x0_seed")) cfg.x0_seed = j.at("x0_seed").get<std::uint64_t>();
  if (j.contains("record_every")) {
    cfg.record_every = j.at("record_every").get<long>();
    if (cfg.record_every < 1)
      throw ValidationError("config: `record_every` must be >= 1");
  }
  if (j.contains("compare_epsilon")) {
    cfg.compare_epsilon = j.at("compare_epsilon").get<double>();
    if (cfg.compare_epsilon <= 0)
      throw ValidationError("config: `compare_epsilon` must be positive");
  }
  if (j.contains("coefficient_ranges")) {
    const Json& r = j.at("coefficient_ranges");
    auto get_range = [&](const char* key, double& lo, double& hi) {
      if (!r.contains(key)) return;
      const Json& pair = r.at(key);
      if (!pair.is_array() || pair.size() != 2)
        throw ValidationError(std::string("config: `coefficient_ranges.") +
                              key + "` must be [lo, hi]");
      lo = pair[0].get<double>();
      hi = pair[1].get<double>();
      if (!(lo <= hi))
        throw ValidationError(std::string("config: `coefficient_ranges.") +
                              key + "` must satisfy lo <= hi");
    };
    get_range("a", cfg.coefficient_ranges.a_lo, cfg.coefficient_ranges.a_hi);
    get_range("b", cfg.coefficient_ranges.b_lo, cfg.coefficient_ranges.b_hi);
    get_range("c", cfg.coefficient_ranges.c_lo, cfg.coefficient_ranges.c_hi);
    if (cfg.coefficient_ranges.a_lo <= 0)
      throw ValidationError("config: `coefficient_ranges.a` must be positive");
  }
  if (j.contains("output")) {
    const Json& o = j.at("output");
    if (o.contains("trace")) cfg.output.trace = o.at("trace").get<std::string>();
    if (o.contains("report")) cfg.output.report = o.at("report").get<std::string>();
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("config: cannot open " + path);
  Json j;
  try {
    is >> j;
  } catch (const Json::parse_error& e) {
    throw ValidationError("config: " + std::string(e.what()));
  }
  return parse_config(j);
}

/// Everything built from a config: validated topology, mixing weights,
/// the Cournot game, and the seeded initial estimates.
struct Instance {
  std::shared_ptr<ClusterTopology> topology;
  WeightPair weights;
  std::shared_ptr<QuadraticCournotGame> game;
  Matrix x0;
};

namespace detail {

inline Digraph make_graph(const GraphSpec& spec, int n,
                          const std::string& where) {
  switch (spec.kind) {
    case GraphSpec::Kind::ring: return ring_digraph(n);
    case GraphSpec::Kind::complete: return complete_digraph(n);
    case GraphSpec::Kind::random:
      return random_strongly_connected_digraph(n, spec.seed, spec.extra_edges);
    case GraphSpec::Kind::file: {
      Digraph g = read_edge_list_file(spec.path);
      if (g.node_count() != n)
        throw ValidationError("config: `" + where + "` file has " +
                              std::to_string(g.node_count()) +
                              " nodes, expected " + std::to_string(n));
      return g;
    }
  }
  throw ValidationError("config: bad graph kind");
}

// Leader-follower global graph: the cluster graphs embedded at their agent
// offsets plus the inter-cluster pattern applied to the first agent of each
// cluster only.
inline Digraph leader_follower_global(const GraphSpec& spec,
                                      const std::vector<Digraph>& cluster_graphs,
                                      const AgentPartition& p) {
  std::vector<Edge> edges;
  for (int h = 0; h < p.cluster_count(); ++h)
    for (const auto& [from, to] : cluster_graphs[h].edges())
      edges.emplace_back(p.offsets[h] + from, p.offsets[h] + to);
  const Digraph leaders =
      make_graph(spec, p.cluster_count(), "global_graph");
  for (const auto& [from, to] : leaders.edges())
    edges.emplace_back(p.offsets[from], p.offsets[to]);
  return Digraph(p.total, std::move(edges));
}

}  // namespace detail

inline Instance build_instance(const ExperimentConfig& cfg,
                               std::optional<std::uint64_t> seed_override =
                                   std::nullopt) {
  const int H = static_cast<int>(cfg.clusters.size());
  std::vector<int> sizes(H);
  for (int h = 0; h < H; ++h) sizes[h] = cfg.clusters[h].size;
  const AgentPartition partition = AgentPartition::from_sizes(sizes);
  const int n = partition.total;

  std::vector<Digraph> cluster_graphs;
  cluster_graphs.reserve(H);
  for (int h = 0; h < H; ++h)
    cluster_graphs.push_back(detail::make_graph(
        cfg.cluster_graphs[h], sizes[h],
        "cluster_graphs[" + std::to_string(h) + "]"));

  Digraph global =
      cfg.global_graph.leader_follower
          ? detail::leader_follower_global(cfg.global_graph, cluster_graphs,
                                           partition)
          : detail::make_graph(cfg.global_graph, n, "global_graph");

  Instance inst;
  inst.topology = std::make_shared<ClusterTopology>(
      std::move(global), std::move(cluster_graphs),
      DecisionLayout::from_dims(sizes));
  inst.weights = WeightPair::build(*inst.topology);

  Vector a(n), b(n), c(n);
  for (int h = 0; h < H; ++h) {
    const ClusterSpec& spec = cfg.clusters[h];
    const int off = partition.offsets[h];
    if (spec.coefficient_seed) {
      detail::Rng rng(*spec.coefficient_seed);
      const CoefficientRanges& r = cfg.coefficient_ranges;
      for (int i = 0; i < spec.size; ++i) {
        a[off + i] = detail::uniform_in(rng, r.a_lo, r.a_hi);
        b[off + i] = detail::uniform_in(rng, r.b_lo, r.b_hi);
        c[off + i] = detail::uniform_in(rng, r.c_lo, r.c_hi);
      }
    } else {
      for (int i = 0; i < spec.size; ++i) {
        a[off + i] = spec.coefficients[i].a;
        b[off + i] = spec.coefficients[i].b;
        c[off + i] = spec.coefficients[i].c;
      }
    }
  }
  inst.game = std::make_shared<QuadraticCournotGame>(
      partition, std::move(a), std::move(b), std::move(c), cfg.price_constant);

  detail::Rng rng(seed_override.value_or(cfg.x0_seed));
  inst.x0.resize(n, inst.game->decision_dim());
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < inst.game->decision_dim(); ++d)
      inst.x0(i, d) = detail::uniform01(rng);
  return inst;
}

}  // namespace mcgt
