#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "relgraph/errors.hpp"
#include "relgraph/rng.hpp"

namespace relgraph {

enum class Dtype { Text, Integer, Real };

inline const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::Text: return "text";
        case Dtype::Integer: return "integer";
        case Dtype::Real: return "real";
    }
    return "?";
}

inline Dtype dtype_from_name(const std::string& s) {
    if (s == "text") return Dtype::Text;
    if (s == "integer") return Dtype::Integer;
    if (s == "real") return Dtype::Real;
    throw ManifestParseError("unknown dtype '" + s + "'");
}

struct ColumnDef {
    std::string name;
    Dtype dtype = Dtype::Text;
    bool nullable = false;
};

// A cell is either a value string or NULL. NULLs are a distinct state, not a
// sentinel value; the reserved CSV marker is translated at the storage layer.
struct Cell {
    bool null = true;
    std::string value;

    static Cell make_null() { return Cell{}; }
    static Cell of(std::string v) { return Cell{false, std::move(v)}; }
    bool operator==(const Cell&) const = default;
};

using Row = std::vector<Cell>;

struct TableDef {
    std::string name;
    std::vector<ColumnDef> columns;
    std::optional<std::string> primary_key;

    std::optional<std::size_t> column_index(const std::string& col) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].name == col) return i;
        return std::nullopt;
    }
};

struct ForeignKey {
    std::string from_table;
    std::string from_column;
    std::string to_table;
    std::string to_column;
};

struct RelationalDatabase {
    std::string name;
    std::vector<TableDef> tables;
    std::vector<ForeignKey> foreign_keys;
    // rows[i] belongs to tables[i]; order preserved from the source files.
    std::vector<std::vector<Row>> rows;

    std::optional<std::size_t> table_index(const std::string& table) const {
        for (std::size_t i = 0; i < tables.size(); ++i)
            if (tables[i].name == table) return i;
        return std::nullopt;
    }

    std::size_t total_rows() const {
        std::size_t n = 0;
        for (const auto& tr : rows) n += tr.size();
        return n;
    }
};

// Structural + referential validation. Throws SchemaViolation with table/row
// coordinates on the first failure. A database returned by the storage layer
// or the synthetic generator always passes.
inline void validate_database(const RelationalDatabase& db) {
    if (db.tables.size() != db.rows.size())
        throw SchemaViolation("database '" + db.name + "': rows list does not match tables list");

    std::unordered_set<std::string> table_names;
    for (const auto& t : db.tables) {
        if (t.name.empty()) throw SchemaViolation("database '" + db.name + "': empty table name");
        if (!table_names.insert(t.name).second)
            throw SchemaViolation("duplicate table name '" + t.name + "'");
        if (t.columns.empty())
            throw SchemaViolation("table '" + t.name + "' has no columns");
        std::unordered_set<std::string> col_names;
        for (const auto& c : t.columns) {
            if (c.name.empty())
                throw SchemaViolation("table '" + t.name + "' has an empty column name");
            if (!col_names.insert(c.name).second)
                throw SchemaViolation("table '" + t.name + "': duplicate column '" + c.name + "'");
        }
        if (t.primary_key && !t.column_index(*t.primary_key))
            throw SchemaViolation("table '" + t.name + "': primary key '" + *t.primary_key +
                                  "' is not a column");
    }

    for (std::size_t ti = 0; ti < db.tables.size(); ++ti) {
        const auto& t = db.tables[ti];
        for (std::size_t ri = 0; ri < db.rows[ti].size(); ++ri) {
            if (db.rows[ti][ri].size() != t.columns.size())
                throw SchemaViolation("table '" + t.name + "' row " + std::to_string(ri) +
                                      ": arity " + std::to_string(db.rows[ti][ri].size()) +
                                      " != column count " + std::to_string(t.columns.size()));
        }
        if (t.primary_key) {
            std::size_t pk = *t.column_index(*t.primary_key);
            std::unordered_set<std::string> seen;
            for (std::size_t ri = 0; ri < db.rows[ti].size(); ++ri) {
                const Cell& c = db.rows[ti][ri][pk];
                if (c.null)
                    throw SchemaViolation("table '" + t.name + "' row " + std::to_string(ri) +
                                          ": NULL primary key");
                if (!seen.insert(c.value).second)
                    throw SchemaViolation("table '" + t.name + "' row " + std::to_string(ri) +
                                          ": duplicate primary key value '" + c.value + "'");
            }
        }
    }

    for (const auto& fk : db.foreign_keys) {
        auto from_ti = db.table_index(fk.from_table);
        auto to_ti = db.table_index(fk.to_table);
        if (!from_ti)
            throw SchemaViolation("foreign key references unknown table '" + fk.from_table + "'");
        if (!to_ti)
            throw SchemaViolation("foreign key references unknown table '" + fk.to_table + "'");
        auto from_ci = db.tables[*from_ti].column_index(fk.from_column);
        auto to_ci = db.tables[*to_ti].column_index(fk.to_column);
        if (!from_ci)
            throw SchemaViolation("foreign key references unknown column '" + fk.from_table + "." +
                                  fk.from_column + "'");
        if (!to_ci)
            throw SchemaViolation("foreign key references unknown column '" + fk.to_table + "." +
                                  fk.to_column + "'");
        if (!db.tables[*to_ti].primary_key || *db.tables[*to_ti].primary_key != fk.to_column)
            throw SchemaViolation("foreign key target '" + fk.to_table + "." + fk.to_column +
                                  "' is not the primary key of its table");

        std::unordered_set<std::string> pk_values;
        std::size_t to_col = *to_ci;
        for (const Row& r : db.rows[*to_ti])
            if (!r[to_col].null) pk_values.insert(r[to_col].value);
        std::size_t from_col = *from_ci;
        for (std::size_t ri = 0; ri < db.rows[*from_ti].size(); ++ri) {
            const Cell& c = db.rows[*from_ti][ri][from_col];
            if (!c.null && !pk_values.count(c.value))
                throw SchemaViolation("table '" + fk.from_table + "' row " + std::to_string(ri) +
                                      ": value '" + c.value + "' has no match in " + fk.to_table +
                                      "." + fk.to_column);
        }
    }
}

struct ColumnStats {
    std::optional<double> min;
    std::optional<double> max;
    std::size_t distinct_count = 0;
    std::size_t null_count = 0;
};

inline std::optional<double> parse_numeric(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE) return std::nullopt;
    return v;
}

// min/max over parseable non-NULL values of integer/real columns; absent for
// text columns and for columns with no parseable value.
inline ColumnStats column_statistics(const RelationalDatabase& db, const std::string& table,
                                     const std::string& column) {
    auto ti = db.table_index(table);
    if (!ti) throw UnknownColumn("unknown table '" + table + "'");
    auto ci = db.tables[*ti].column_index(column);
    if (!ci) throw UnknownColumn("unknown column '" + table + "." + column + "'");

    ColumnStats stats;
    const bool numeric = db.tables[*ti].columns[*ci].dtype != Dtype::Text;
    std::set<std::string> distinct;
    for (const Row& r : db.rows[*ti]) {
        const Cell& c = r[*ci];
        if (c.null) {
            ++stats.null_count;
            continue;
        }
        distinct.insert(c.value);
        if (numeric) {
            if (auto v = parse_numeric(c.value)) {
                if (!stats.min || *v < *stats.min) stats.min = v;
                if (!stats.max || *v > *stats.max) stats.max = v;
            }
        }
    }
    stats.distinct_count = distinct.size();
    return stats;
}

// Canonical content fingerprint; independent of file layout, sensitive to
// every name, dtype, key and cell.
inline std::uint64_t fingerprint_database(std::uint64_t h, const RelationalDatabase& db) {
    h = fnv1a_str(h, db.name);
    for (const auto& t : db.tables) {
        h = fnv1a_str(h, t.name);
        for (const auto& c : t.columns) {
            h = fnv1a_str(h, c.name);
            h = fnv1a_byte(h, static_cast<unsigned char>(c.dtype));
            h = fnv1a_byte(h, c.nullable ? 1 : 0);
        }
        h = fnv1a_str(h, t.primary_key.value_or(""));
    }
    for (const auto& fk : db.foreign_keys) {
        h = fnv1a_str(h, fk.from_table);
        h = fnv1a_str(h, fk.from_column);
        h = fnv1a_str(h, fk.to_table);
        h = fnv1a_str(h, fk.to_column);
    }
    for (const auto& tr : db.rows)
        for (const Row& r : tr)
            for (const Cell& c : r) {
                h = fnv1a_byte(h, c.null ? 1 : 0);
                h = fnv1a_str(h, c.value);
            }
    return h;
}

inline std::uint64_t fingerprint_corpus(const std::vector<RelationalDatabase>& corpus) {
    std::uint64_t h = fnv1a_init();
    for (const auto& db : corpus) h = fingerprint_database(h, db);
    return h;
}

}  // namespace relgraph
