#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "relgraph/errors.hpp"
#include "relgraph/relational.hpp"
#include "relgraph/rng.hpp"
#include "relgraph/tokenizer.hpp"
#include "relgraph/vocabulary.hpp"

namespace relgraph {

enum class NodeKind { Table, Column, Row };

inline const char* node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::Table: return "table";
        case NodeKind::Column: return "column";
        case NodeKind::Row: return "row";
    }
    return "?";
}

enum class EdgeType { RowInTable, ColInTable, CellLink, FkLink };

inline const char* edge_type_name(EdgeType e) {
    switch (e) {
        case EdgeType::RowInTable: return "row_in_table";
        case EdgeType::ColInTable: return "col_in_table";
        case EdgeType::CellLink: return "cell_link";
        case EdgeType::FkLink: return "fk_link";
    }
    return "?";
}

struct Node {
    std::size_t id = 0;
    NodeKind kind = NodeKind::Table;
    std::size_t table = 0;
    std::size_t index = 0;  // column index or row index; unused for table nodes
};

struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    EdgeType etype = EdgeType::RowInTable;
};

// Undirected heterogeneous schema graph. Every undirected edge is stored as
// two consecutive directed entries (u,v),(v,u); self-edges never appear in
// the stored list (self-loops belong to the GCN normalization).
struct SchemaGraph {
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    // adj[u] = neighbor ids with edge multiplicity, in stored edge order.
    std::vector<std::vector<std::size_t>> adj;
    // Node-id layout: tables, then columns, then rows, in schema/file order.
    std::vector<std::size_t> col_start;  // per table
    std::vector<std::size_t> row_start;  // per table

    std::size_t table_node(std::size_t ti) const { return ti; }
    std::size_t column_node(std::size_t ti, std::size_t ci) const { return col_start[ti] + ci; }
    std::size_t row_node(std::size_t ti, std::size_t ri) const { return row_start[ti] + ri; }
    std::size_t degree(std::size_t u) const { return adj[u].size(); }
    std::size_t undirected_edge_count() const { return edges.size() / 2; }

    std::vector<std::size_t> unique_neighbors(std::size_t u) const {
        std::vector<std::size_t> out = adj[u];
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

inline SchemaGraph build_graph(const RelationalDatabase& db) {
    SchemaGraph g;
    const std::size_t n_tables = db.tables.size();
    for (std::size_t ti = 0; ti < n_tables; ++ti)
        g.nodes.push_back({g.nodes.size(), NodeKind::Table, ti, 0});
    for (std::size_t ti = 0; ti < n_tables; ++ti) {
        g.col_start.push_back(g.nodes.size());
        for (std::size_t ci = 0; ci < db.tables[ti].columns.size(); ++ci)
            g.nodes.push_back({g.nodes.size(), NodeKind::Column, ti, ci});
    }
    for (std::size_t ti = 0; ti < n_tables; ++ti) {
        g.row_start.push_back(g.nodes.size());
        for (std::size_t ri = 0; ri < db.rows[ti].size(); ++ri)
            g.nodes.push_back({g.nodes.size(), NodeKind::Row, ti, ri});
    }

    auto link = [&](std::size_t u, std::size_t v, EdgeType e) {
        if (u == v) return;
        g.edges.push_back({u, v, e});
        g.edges.push_back({v, u, e});
    };

    for (std::size_t ti = 0; ti < n_tables; ++ti)
        for (std::size_t ri = 0; ri < db.rows[ti].size(); ++ri)
            link(g.row_node(ti, ri), g.table_node(ti), EdgeType::RowInTable);
    for (std::size_t ti = 0; ti < n_tables; ++ti)
        for (std::size_t ci = 0; ci < db.tables[ti].columns.size(); ++ci)
            link(g.column_node(ti, ci), g.table_node(ti), EdgeType::ColInTable);
    for (std::size_t ti = 0; ti < n_tables; ++ti)
        for (std::size_t ri = 0; ri < db.rows[ti].size(); ++ri)
            for (std::size_t ci = 0; ci < db.tables[ti].columns.size(); ++ci)
                link(g.row_node(ti, ri), g.column_node(ti, ci), EdgeType::CellLink);

    for (const ForeignKey& fk : db.foreign_keys) {
        std::size_t ct = *db.table_index(fk.from_table);
        std::size_t pt = *db.table_index(fk.to_table);
        std::size_t cc = *db.tables[ct].column_index(fk.from_column);
        std::size_t pc = *db.tables[pt].column_index(fk.to_column);
        std::map<std::string, std::size_t> pk_row;
        for (std::size_t ri = 0; ri < db.rows[pt].size(); ++ri)
            if (!db.rows[pt][ri][pc].null) pk_row[db.rows[pt][ri][pc].value] = ri;
        for (std::size_t ri = 0; ri < db.rows[ct].size(); ++ri) {
            const Cell& cell = db.rows[ct][ri][cc];
            if (cell.null) continue;
            auto it = pk_row.find(cell.value);
            if (it == pk_row.end()) continue;  // validate_database already rejects this
            link(g.row_node(ct, ri), g.row_node(pt, it->second), EdgeType::FkLink);
        }
    }

    g.adj.resize(g.nodes.size());
    for (const Edge& e : g.edges) g.adj[e.src].push_back(e.dst);
    return g;
}

// --- node features ----------------------------------------------------------

inline constexpr std::size_t kStatsDim = 4;

struct NodeFeatures {
    std::size_t d_model = 0;
    std::vector<std::vector<double>> features;  // num_nodes × d_model
    bool stats_enabled = false;
    std::vector<std::array<double, kStatsDim>> stats;  // num_nodes × 4 when enabled
};

// Name sequence for a column node; includes the table name so a table-name
// mask reaches column nodes too (see materialize_graph_sample).
inline TokenSequence column_node_sequence(const RelationalDatabase& db, std::size_t ti,
                                          std::size_t ci, const Vocabulary& vocab) {
    return column_name_sequence(db, ti, ci, vocab);
}

inline TokenSequence table_node_sequence(const RelationalDatabase& db, std::size_t ti,
                                         const Vocabulary& vocab) {
    return table_name_sequence(db, ti, vocab);
}

// Raw (un-normalized) column statistics vector:
// (min, max, distinct/rows, null/rows); min/max zero for non-numeric columns.
inline std::array<double, kStatsDim> raw_column_stats(const RelationalDatabase& db, std::size_t ti,
                                                      std::size_t ci) {
    ColumnStats s = column_statistics(db, db.tables[ti].name, db.tables[ti].columns[ci].name);
    double rows = static_cast<double>(db.rows[ti].size());
    std::array<double, kStatsDim> out{};
    out[0] = s.min.value_or(0.0);
    out[1] = s.max.value_or(0.0);
    out[2] = rows > 0 ? static_cast<double>(s.distinct_count) / rows : 0.0;
    out[3] = rows > 0 ? static_cast<double>(s.null_count) / rows : 0.0;
    return out;
}

// Normalization keeps stats bounded and finite: x/(1+|x|) for the unbounded
// min/max entries; the two ratios already live in [0,1].
inline std::array<double, kStatsDim> normalize_stats(std::array<double, kStatsDim> s) {
    s[0] = s[0] / (1.0 + std::abs(s[0]));
    s[1] = s[1] / (1.0 + std::abs(s[1]));
    return s;
}

// encode must map a TokenSequence to a d_model vector (pure).
template <typename EncodeFn>
NodeFeatures attach_features(const SchemaGraph& g, const RelationalDatabase& db,
                             const Vocabulary& vocab, std::size_t max_seq_len, EncodeFn&& encode,
                             bool stats_enabled = false) {
    NodeFeatures nf;
    nf.stats_enabled = stats_enabled;
    nf.features.resize(g.nodes.size());
    if (stats_enabled) nf.stats.assign(g.nodes.size(), {});
    for (const Node& node : g.nodes) {
        TokenSequence seq;
        switch (node.kind) {
            case NodeKind::Table:
                seq = table_node_sequence(db, node.table, vocab);
                break;
            case NodeKind::Column:
                seq = column_node_sequence(db, node.table, node.index, vocab);
                if (stats_enabled)
                    nf.stats[node.id] = normalize_stats(raw_column_stats(db, node.table, node.index));
                break;
            case NodeKind::Row:
                seq = serialize_row(db, db.tables[node.table].name, node.index, vocab, max_seq_len);
                break;
        }
        std::vector<double> v = encode(seq);
        if (nf.d_model == 0) nf.d_model = v.size();
        if (v.size() != nf.d_model)
            throw DimensionMismatch("encoder returned " + std::to_string(v.size()) +
                                    "-dim vector, expected " + std::to_string(nf.d_model));
        nf.features[node.id] = std::move(v);
    }
    return nf;
}

// --- neighbor sampling ------------------------------------------------------

inline constexpr std::size_t kFullFanout = static_cast<std::size_t>(-1);

struct Subgraph {
    std::size_t seed = 0;                        // global id
    std::vector<std::vector<std::size_t>> hops;  // hops[0]={seed}; global ids, first-visit level
    std::vector<std::size_t> nodes;              // sorted global ids; local id = position
    std::vector<Edge> edges;                     // local ids, symmetric pairs
    std::vector<std::size_t> parent_degree;      // per local node, degree in the parent graph

    std::size_t local_of(std::size_t global_id) const {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), global_id);
        if (it == nodes.end() || *it != global_id)
            throw InvalidSeedNode("node " + std::to_string(global_id) + " not in subgraph");
        return static_cast<std::size_t>(it - nodes.begin());
    }
};

// GraphSAGE-style sampling: hop h picks min(fanout[h], degree) distinct
// neighbors of each frontier node uniformly without replacement. Edges are
// the parent edges induced on the sampled node set; parent degrees ride
// along so GCN normalization on the subgraph matches the full graph.
inline Subgraph sample_subgraph(const SchemaGraph& g, std::size_t seed_node,
                                const std::vector<std::size_t>& fanout_per_hop,
                                std::uint64_t rng_seed) {
    if (seed_node >= g.nodes.size())
        throw InvalidSeedNode("seed node " + std::to_string(seed_node) + " out of range");
    if (fanout_per_hop.empty()) throw InvalidSpec("fanout list must have at least one hop");

    Rng rng(derive_seed(rng_seed, 0x5A9));
    Subgraph sub;
    sub.seed = seed_node;
    sub.hops.push_back({seed_node});
    std::set<std::size_t> visited{seed_node};

    for (std::size_t fanout : fanout_per_hop) {
        std::set<std::size_t> next;
        for (std::size_t u : sub.hops.back()) {
            std::vector<std::size_t> neigh = g.unique_neighbors(u);
            std::size_t k = std::min(fanout, neigh.size());
            if (k == neigh.size()) {
                for (std::size_t v : neigh)
                    if (visited.insert(v).second) next.insert(v);
            } else {
                for (std::size_t pick : rng.sample_without_replacement(neigh.size(), k))
                    if (visited.insert(neigh[pick]).second) next.insert(neigh[pick]);
            }
        }
        sub.hops.emplace_back(next.begin(), next.end());
    }

    sub.nodes.assign(visited.begin(), visited.end());
    for (const Edge& e : g.edges)
        if (visited.count(e.src) && visited.count(e.dst))
            sub.edges.push_back({sub.local_of(e.src), sub.local_of(e.dst), e.etype});
    for (std::size_t global_id : sub.nodes) sub.parent_degree.push_back(g.degree(global_id));
    return sub;
}

// --- debug export -----------------------------------------------------------

inline std::string export_graph(const SchemaGraph& g, const RelationalDatabase& db) {
    std::ostringstream out;
    out << "# nodes: id kind table [column|row]\n";
    for (const Node& n : g.nodes) {
        out << n.id << ' ' << node_kind_name(n.kind) << ' ' << db.tables[n.table].name;
        if (n.kind == NodeKind::Column) out << ' ' << db.tables[n.table].columns[n.index].name;
        if (n.kind == NodeKind::Row) out << ' ' << n.index;
        out << '\n';
    }
    out << "# edges: src dst etype\n";
    for (std::size_t i = 0; i < g.edges.size(); i += 2)
        out << g.edges[i].src << ' ' << g.edges[i].dst << ' ' << edge_type_name(g.edges[i].etype)
            << '\n';
    return out.str();
}

}  // namespace relgraph
