#pragma once

// Shared fixtures and independent oracles for the test suite.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "relgraph/graph.hpp"
#include "relgraph/model.hpp"
#include "relgraph/relational.hpp"
#include "relgraph/rng.hpp"

namespace support {

using namespace relgraph;

// Fresh scratch directory under the system temp root, removed on scope exit.
class TempDir {
  public:
    explicit TempDir(const std::string& hint) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (hint + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }
    std::string sub(const std::string& name) const { return (path_ / name).string(); }

  private:
    std::filesystem::path path_;
};

// Two-table fixture used across modules: planets(id, color) with 2 rows,
// moons(name, planet) with 3 rows, one foreign key moons.planet -> planets.id
// matching all three moon rows.
inline RelationalDatabase planets_moons() {
    RelationalDatabase db;
    db.name = "solar";
    TableDef planets;
    planets.name = "planets";
    planets.columns = {{"id", Dtype::Text, false}, {"color", Dtype::Text, false}};
    planets.primary_key = "id";
    db.tables.push_back(planets);
    db.rows.push_back({{Cell::of("Jupiter"), Cell::of("red")},
                       {Cell::of("Saturn"), Cell::of("gold")}});

    TableDef moons;
    moons.name = "moons";
    moons.columns = {{"name", Dtype::Text, false}, {"planet", Dtype::Text, false}};
    moons.primary_key = "name";
    db.tables.push_back(moons);
    db.rows.push_back({{Cell::of("Io"), Cell::of("Jupiter")},
                       {Cell::of("Europa"), Cell::of("Jupiter")},
                       {Cell::of("Titan"), Cell::of("Saturn")}});

    db.foreign_keys.push_back({"moons", "planet", "planets", "id"});
    validate_database(db);
    return db;
}

// One-table toy corpus small enough to memorize: 4 rows, a handful of
// distinct tokens.
inline RelationalDatabase toy_database() {
    RelationalDatabase db;
    db.name = "toy";
    TableDef t;
    t.name = "items";
    t.columns = {{"code", Dtype::Text, false},
                 {"kind", Dtype::Text, false},
                 {"place", Dtype::Text, false}};
    t.primary_key = "code";
    db.tables.push_back(t);
    db.rows.push_back({{Cell::of("a1"), Cell::of("stone"), Cell::of("north")},
                       {Cell::of("b2"), Cell::of("wood"), Cell::of("south")},
                       {Cell::of("c3"), Cell::of("glass"), Cell::of("east")},
                       {Cell::of("d4"), Cell::of("iron"), Cell::of("west")}});
    validate_database(db);
    return db;
}

// Random undirected multigraph in SchemaGraph form (node kinds are irrelevant
// to the GCN math). Edges are stored as symmetric pairs, no self-edges.
inline SchemaGraph random_graph(Rng& rng, std::size_t max_nodes) {
    SchemaGraph g;
    std::size_t n = 1 + rng.next_index(max_nodes);
    for (std::size_t i = 0; i < n; ++i) g.nodes.push_back({i, NodeKind::Row, 0, i});
    if (n > 1) {
        std::size_t m = rng.next_index(2 * n + 1);
        for (std::size_t e = 0; e < m; ++e) {
            std::size_t u = rng.next_index(n);
            std::size_t v = rng.next_index(n);
            if (u == v) continue;
            g.edges.push_back({u, v, EdgeType::CellLink});
            g.edges.push_back({v, u, EdgeType::CellLink});
        }
    }
    g.adj.resize(n);
    for (const Edge& e : g.edges) g.adj[e.src].push_back(e.dst);
    return g;
}

inline NodeFeatures random_features(Rng& rng, std::size_t n, std::size_t d) {
    NodeFeatures f;
    f.d_model = d;
    f.features.resize(n);
    for (auto& row : f.features) {
        row.resize(d);
        for (double& x : row) x = rng.uniform(-1.0, 1.0);
    }
    return f;
}

// Dense reference for the GCN layer stack: per layer
//   Z = D^{-1/2} (A + I) D^{-1/2} · H · W + b,  H = act(Z) + H,
// with ReLU between layers and a linear last layer, exactly the documented
// propagation rule. Adjacency entries carry edge multiplicity.
inline std::vector<std::vector<double>> dense_gcn_oracle(GCNParams& p, const SchemaGraph& g,
                                                         const NodeFeatures& f) {
    std::size_t n = g.nodes.size();
    std::size_t d = f.d_model;
    std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
    for (const Edge& e : g.edges) A[e.dst][e.src] += 1.0;
    for (std::size_t i = 0; i < n; ++i) A[i][i] += 1.0;
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += A[i][j];
        inv_sqrt[i] = 1.0 / std::sqrt(deg);
    }
    std::vector<std::vector<double>> norm(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) norm[i][j] = inv_sqrt[i] * A[i][j] * inv_sqrt[j];

    std::vector<std::vector<double>> h = f.features;
    for (std::size_t l = 0; l < p.num_layers; ++l) {
        std::vector<std::vector<double>> prop(n, std::vector<double>(d, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < d; ++c) prop[i][c] += norm[i][j] * h[j][c];
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> z(d, 0.0);
            for (std::size_t c = 0; c < d; ++c) {
                for (std::size_t k = 0; k < d; ++k)
                    z[c] += prop[i][k] * p.W[l].value.at(k, c);
                z[c] += p.b[l].value.at(0, c);
                if (l + 1 < p.num_layers) z[c] = std::max(0.0, z[c]);
                h[i][c] += z[c];
            }
        }
    }
    return h;
}

// Independent breadth-first n-hop ball.
inline std::set<std::size_t> bfs_ball(const SchemaGraph& g, std::size_t seed, std::size_t hops) {
    std::set<std::size_t> ball{seed};
    std::vector<std::size_t> frontier{seed};
    for (std::size_t h = 0; h < hops; ++h) {
        std::vector<std::size_t> next;
        for (std::size_t u : frontier)
            for (std::size_t v : g.adj[u])
                if (ball.insert(v).second) next.push_back(v);
        frontier = std::move(next);
    }
    return ball;
}

// Central finite differences over the entries of `probe` against the
// analytic gradient filled by one backward pass. `f(true)` must run forward
// plus backward and return the loss; `f(false)` forward only. Entries are
// compared as |analytic - fd| / max(0.01, |analytic|, |fd|), which is a true
// relative check for gradients of meaningful size and an absolute 1e-7-scale
// check for vanishing ones.
template <typename F>
double max_rel_grad_error(const std::vector<Param*>& probe, F&& f, double step = 1e-5) {
    for (Param* p : probe) p->grad.zero();
    f(true);
    double worst = 0.0;
    for (Param* p : probe) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            double saved = p->value.v[i];
            p->value.v[i] = saved + step;
            double up = f(false);
            p->value.v[i] = saved - step;
            double down = f(false);
            p->value.v[i] = saved;
            double fd = (up - down) / (2.0 * step);
            double an = p->grad.v[i];
            double err = std::abs(an - fd) / std::max({0.01, std::abs(an), std::abs(fd)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

inline std::vector<Param*> all_params(ModelState& s) {
    std::vector<Param*> out;
    s.for_each_param([&](Param& p, bool) { out.push_back(&p); });
    return out;
}

inline std::uint64_t state_fingerprint(ModelState& s) {
    std::uint64_t h = fnv1a_init();
    s.for_each_param([&](Param& p, bool) {
        h = fnv1a_bytes(h, p.value.v.data(), p.value.v.size() * sizeof(double));
        h = fnv1a_bytes(h, p.m.v.data(), p.m.v.size() * sizeof(double));
        h = fnv1a_bytes(h, p.v.v.data(), p.v.v.size() * sizeof(double));
    });
    h = fnv1a_u64(h, s.step);
    return h;
}

}  // namespace support
