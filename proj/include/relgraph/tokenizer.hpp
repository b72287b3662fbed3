#pragma once

#include <optional>
#include <string>
#include <vector>

#include "relgraph/errors.hpp"
#include "relgraph/relational.hpp"
#include "relgraph/rng.hpp"
#include "relgraph/vocabulary.hpp"

namespace relgraph {

enum class MaskTarget { Cell, ColumnName, TableName };

struct MaskSpec {
    MaskTarget target = MaskTarget::Cell;
    std::size_t table = 0;
    std::optional<std::size_t> row;     // set for Cell
    std::optional<std::size_t> column;  // set for Cell and ColumnName
    std::uint64_t seed = 0;
};

struct SequenceOrigin {
    std::string database;
    std::string table;
    std::optional<std::size_t> row;
    std::string target_kind;  // "row", "column_name" or "table_name"
    bool truncated = false;
};

struct TokenSequence {
    std::vector<TokenId> ids;
    std::vector<std::size_t> mask_positions;
    SequenceOrigin origin;
};

inline constexpr std::size_t kMinSeqLen = 8;

// Row layout: [TAB] <table-name-tokens> { [COL] <column-name-tokens>
// [VAL] <cell-tokens> }* over columns in schema order. A NULL cell
// serializes as the single [NULL] token. A masked target (cell value,
// column name or table name) is replaced by one [MASK] token.
//
// Truncation drops trailing whole COL..VAL groups; the TAB group is always
// kept (hard-clipped only if it alone exceeds the budget). Dropping the
// group holding the mask target is an error, not a silent unmasked sample.
inline TokenSequence serialize_row(const RelationalDatabase& db, const std::string& table,
                                   std::size_t row_index, const Vocabulary& vocab,
                                   std::size_t max_seq_len,
                                   const std::optional<MaskSpec>& mask = std::nullopt) {
    auto ti = db.table_index(table);
    if (!ti) throw RowOutOfRange("unknown table '" + table + "'");
    const TableDef& t = db.tables[*ti];
    if (row_index >= db.rows[*ti].size())
        throw RowOutOfRange("table '" + table + "' has no row " + std::to_string(row_index));
    if (max_seq_len < kMinSeqLen)
        throw InvalidSpec("max_seq_len must be at least " + std::to_string(kMinSeqLen));

    bool mask_cell = false, mask_col_name = false, mask_tab_name = false;
    std::size_t mask_column = 0;
    if (mask) {
        if (mask->table != *ti)
            throw MaskTargetNotInRow("mask targets table index " + std::to_string(mask->table) +
                                     ", row is from table '" + table + "'");
        switch (mask->target) {
            case MaskTarget::Cell:
                if (!mask->row || !mask->column)
                    throw InvalidMaskSpec("cell mask needs row and column");
                if (*mask->row != row_index)
                    throw MaskTargetNotInRow("cell mask targets row " + std::to_string(*mask->row) +
                                             ", serializing row " + std::to_string(row_index));
                if (*mask->column >= t.columns.size())
                    throw InvalidMaskSpec("cell mask column out of range");
                mask_cell = true;
                mask_column = *mask->column;
                break;
            case MaskTarget::ColumnName:
                if (!mask->column) throw InvalidMaskSpec("column-name mask needs a column");
                if (*mask->column >= t.columns.size())
                    throw InvalidMaskSpec("column-name mask column out of range");
                mask_col_name = true;
                mask_column = *mask->column;
                break;
            case MaskTarget::TableName:
                mask_tab_name = true;
                break;
        }
    }

    TokenSequence seq;
    seq.origin.database = db.name;
    seq.origin.table = table;
    seq.origin.row = row_index;
    seq.origin.target_kind = "row";

    auto push_masked = [&] {
        seq.mask_positions.push_back(seq.ids.size());
        seq.ids.push_back(kMask);
    };

    // TAB group.
    seq.ids.push_back(kTab);
    if (mask_tab_name) {
        push_masked();
    } else {
        for (TokenId id : vocab.encode_text(t.name)) seq.ids.push_back(id);
    }
    if (seq.ids.size() > max_seq_len) {
        if (mask_cell || mask_col_name)
            throw MaskTargetNotInRow("mask target column truncated away");
        seq.ids.resize(max_seq_len);
        seq.origin.truncated = true;
        return seq;
    }

    const Row& row = db.rows[*ti][row_index];
    for (std::size_t ci = 0; ci < t.columns.size(); ++ci) {
        std::vector<TokenId> group;
        group.push_back(kCol);
        std::vector<std::size_t> group_masks;
        if (mask_col_name && ci == mask_column) {
            group_masks.push_back(group.size());
            group.push_back(kMask);
        } else {
            for (TokenId id : vocab.encode_text(t.columns[ci].name)) group.push_back(id);
        }
        group.push_back(kVal);
        if (mask_cell && ci == mask_column) {
            group_masks.push_back(group.size());
            group.push_back(kMask);
        } else if (row[ci].null) {
            group.push_back(kNull);
        } else {
            for (TokenId id : vocab.encode_text(row[ci].value)) group.push_back(id);
        }

        if (seq.ids.size() + group.size() > max_seq_len) {
            if ((mask_cell || mask_col_name) && mask_column >= ci)
                throw MaskTargetNotInRow("mask target column truncated away");
            seq.origin.truncated = true;
            break;
        }
        for (std::size_t off : group_masks) seq.mask_positions.push_back(seq.ids.size() + off);
        seq.ids.insert(seq.ids.end(), group.begin(), group.end());
    }
    return seq;
}

// Name-only sequences used for column and table graph nodes. Column
// sequences carry the table name so that a table-name mask reaches them.
inline TokenSequence table_name_sequence(const RelationalDatabase& db, std::size_t table,
                                         const Vocabulary& vocab, bool mask_name = false) {
    const TableDef& t = db.tables.at(table);
    TokenSequence seq;
    seq.origin.database = db.name;
    seq.origin.table = t.name;
    seq.origin.target_kind = "table_name";
    seq.ids.push_back(kTab);
    if (mask_name) {
        seq.mask_positions.push_back(seq.ids.size());
        seq.ids.push_back(kMask);
    } else {
        for (TokenId id : vocab.encode_text(t.name)) seq.ids.push_back(id);
    }
    return seq;
}

inline TokenSequence column_name_sequence(const RelationalDatabase& db, std::size_t table,
                                          std::size_t column, const Vocabulary& vocab,
                                          bool mask_column_name = false,
                                          bool mask_table_name = false) {
    const TableDef& t = db.tables.at(table);
    TokenSequence seq;
    seq.origin.database = db.name;
    seq.origin.table = t.name;
    seq.origin.target_kind = "column_name";
    seq.ids.push_back(kTab);
    if (mask_table_name) {
        seq.mask_positions.push_back(seq.ids.size());
        seq.ids.push_back(kMask);
    } else {
        for (TokenId id : vocab.encode_text(t.name)) seq.ids.push_back(id);
    }
    seq.ids.push_back(kCol);
    if (mask_column_name) {
        seq.mask_positions.push_back(seq.ids.size());
        seq.ids.push_back(kMask);
    } else {
        for (TokenId id : vocab.encode_text(t.columns.at(column).name)) seq.ids.push_back(id);
    }
    return seq;
}

inline std::vector<std::string> detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
    std::vector<std::string> out;
    out.reserve(seq.ids.size());
    for (TokenId id : seq.ids) out.push_back(vocab.token_of(id));
    return out;
}

struct MaskRates {
    double cell_rate = 0.15;
    double col_rate = 0.10;
    double tab_rate = 0.10;
};

// Independent Bernoulli selection per candidate, in canonical order (cells
// row-major per table, then column names, then table names). NULL cells are
// never selected. Each spec carries its own derived seed, used downstream
// to pick a deterministic carrier row for name masks.
inline std::vector<MaskSpec> sample_mask_targets(const RelationalDatabase& db,
                                                 const MaskRates& rates, std::uint64_t seed) {
    for (double r : {rates.cell_rate, rates.col_rate, rates.tab_rate})
        if (r < 0.0 || r > 1.0) throw InvalidSpec("mask rates must be in [0,1]");
    Rng rng(derive_seed(seed, 0x3A5C));
    std::vector<MaskSpec> specs;
    for (std::size_t ti = 0; ti < db.tables.size(); ++ti) {
        for (std::size_t ri = 0; ri < db.rows[ti].size(); ++ri)
            for (std::size_t ci = 0; ci < db.tables[ti].columns.size(); ++ci) {
                if (db.rows[ti][ri][ci].null) continue;
                if (rng.bernoulli(rates.cell_rate))
                    specs.push_back({MaskTarget::Cell, ti, ri, ci, rng.next_u64()});
            }
        for (std::size_t ci = 0; ci < db.tables[ti].columns.size(); ++ci)
            if (rng.bernoulli(rates.col_rate))
                specs.push_back({MaskTarget::ColumnName, ti, std::nullopt, ci, rng.next_u64()});
        if (rng.bernoulli(rates.tab_rate))
            specs.push_back({MaskTarget::TableName, ti, std::nullopt, std::nullopt, rng.next_u64()});
    }
    return specs;
}

// Every admissible target once: all non-NULL cells, all column names, all
// table names. Used for evaluation; spec seeds are stable so the carrier
// rows of name masks do not change between runs or variants.
inline std::vector<MaskSpec> enumerate_mask_targets(const RelationalDatabase& db,
                                                    std::uint64_t seed = 0x5EED) {
    std::vector<MaskSpec> specs;
    for (std::size_t ti = 0; ti < db.tables.size(); ++ti) {
        for (std::size_t ri = 0; ri < db.rows[ti].size(); ++ri)
            for (std::size_t ci = 0; ci < db.tables[ti].columns.size(); ++ci)
                if (!db.rows[ti][ri][ci].null)
                    specs.push_back({MaskTarget::Cell, ti, ri, ci,
                                     derive_seed(seed, ti * 1000003 + ri * 1009 + ci)});
        for (std::size_t ci = 0; ci < db.tables[ti].columns.size(); ++ci)
            specs.push_back({MaskTarget::ColumnName, ti, std::nullopt, ci,
                             derive_seed(seed, 0xC01, ti * 1009 + ci)});
        specs.push_back({MaskTarget::TableName, ti, std::nullopt, std::nullopt,
                         derive_seed(seed, 0x7AB, ti)});
    }
    return specs;
}

// --- vertical split -------------------------------------------------------

struct TableWithRows {
    TableDef def;
    std::vector<Row> rows;
};

struct VerticalSplitResult {
    std::vector<TableWithRows> fragments;
    std::vector<ForeignKey> links;  // chain fragment i+1 -> fragment i
    bool split = false;
};

// Splits a wide table into fragments of at most max_columns original
// columns, plus a shared synthetic key column per fragment. Joining the
// fragments on the key reconstructs the original table exactly.
inline VerticalSplitResult vertical_split(const TableDef& table, const std::vector<Row>& rows,
                                          std::size_t max_columns) {
    if (max_columns == 0) throw InvalidSpec("max_columns must be at least 1");
    VerticalSplitResult result;
    if (table.columns.size() <= max_columns) {
        result.fragments.push_back({table, rows});
        return result;
    }
    result.split = true;

    std::string key_name = "__key";
    bool collision = true;
    while (collision) {
        collision = false;
        for (const auto& c : table.columns)
            if (c.name == key_name) {
                key_name = "_" + key_name;
                collision = true;
            }
    }

    std::size_t n_fragments = (table.columns.size() + max_columns - 1) / max_columns;
    for (std::size_t f = 0; f < n_fragments; ++f) {
        std::size_t lo = f * max_columns;
        std::size_t hi = std::min(lo + max_columns, table.columns.size());
        TableWithRows frag;
        frag.def.name = table.name + "__p" + std::to_string(f);
        frag.def.columns.push_back({key_name, Dtype::Integer, false});
        frag.def.primary_key = key_name;
        for (std::size_t c = lo; c < hi; ++c) frag.def.columns.push_back(table.columns[c]);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            Row row;
            row.push_back(Cell::of(std::to_string(r)));
            for (std::size_t c = lo; c < hi; ++c) row.push_back(rows[r][c]);
            frag.rows.push_back(std::move(row));
        }
        result.fragments.push_back(std::move(frag));
        if (f > 0)
            result.links.push_back({result.fragments[f].def.name, key_name,
                                    result.fragments[f - 1].def.name, key_name});
    }
    return result;
}

}  // namespace relgraph
