#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "relgraph/errors.hpp"
#include "relgraph/relational.hpp"
#include "relgraph/rng.hpp"

namespace relgraph {

// Synthetic corpus generator. Databases are instantiated from a deterministic
// set of table templates so that cell values, column names and table names
// carry signal that is recoverable from relational context:
//   - parent templates fix their shared attribute value, and "copy" columns
//     in child tables repeat it through the FK, so a masked copy cell is
//     derivable from the linked parent but not from the child row alone;
//   - "category" columns in FK-attached child tables take the value keyed by
//     the parent's template, so again the FK neighborhood decides the cell;
//     in parent (and FK-less) tables they hold one value per table instance,
//     repeated across rows, so sibling rows reveal a masked cell;
//   - some column names come in alias pairs whose choice depends on the
//     parent table's template, so the correct name of a masked column is
//     decidable only through the FK neighborhood;
//   - "item" and "measure" columns are per-row noise.
// Token pools are global across databases, so models trained on one split
// can generalize to unseen tables in another.
struct SynthSpec {
    std::size_t n_databases = 50;
    std::size_t tables_lo = 2, tables_hi = 4;
    std::size_t rows_lo = 5, rows_hi = 20;
    // Data columns per table; key columns (primary key, foreign key) are
    // added on top of this range.
    std::size_t cols_lo = 2, cols_hi = 4;
    // Approximate distinct-token budget across all pools.
    std::size_t vocab_size = 220;
    double fk_density = 1.0;
    std::uint64_t seed = 0;
};

namespace synth_detail {

class WordFactory {
  public:
    explicit WordFactory(std::uint64_t seed) : rng_(seed) {}

    std::string make() {
        static const char* consonants = "bdfgklmnprstvz";
        static const char* vowels = "aeiou";
        for (;;) {
            std::string w;
            std::size_t syllables = 2 + rng_.next_index(2);
            for (std::size_t s = 0; s < syllables; ++s) {
                w.push_back(consonants[rng_.next_index(14)]);
                w.push_back(vowels[rng_.next_index(5)]);
                if (rng_.bernoulli(0.25)) w.push_back(consonants[rng_.next_index(14)]);
            }
            if (used_.insert(w).second) return w;
        }
    }

    std::vector<std::string> make_many(std::size_t n) {
        std::vector<std::string> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(make());
        return out;
    }

  private:
    Rng rng_;
    std::unordered_set<std::string> used_;
};

enum class ColRole { Copy, Category, Item, Measure };

struct ColumnTypeDef {
    // Single name, or an alias pair selected by the parent table's template.
    std::vector<std::string> names;
    std::vector<std::string> pool;
    Dtype dtype = Dtype::Text;
    bool nullable = false;
};

struct TemplateColumn {
    ColRole role;
    std::size_t type_id;
};

struct TableTemplate {
    std::string theme;
    bool is_parent = false;
    // Parent templates pin their shared attribute to one pool value; child
    // "copy" columns inherit it through the FK.
    std::string fixed_attr;
    std::vector<TemplateColumn> data_cols;
};

struct GeneratorPlan {
    std::vector<std::string> id_pool;
    std::string pk_name;
    std::string fk_name;
    std::vector<std::string> attr_pool;  // shared pool copied through FKs
    std::string attr_name;
    std::vector<ColumnTypeDef> types;  // types[0] reserved for the attr/copy family
    std::vector<TableTemplate> templates;
    std::size_t n_parent_templates = 0;
    // cat_pick[parent_template][type] → pool index used by category columns of
    // child tables FK-attached to that parent template.
    std::vector<std::vector<std::size_t>> cat_pick;
};

inline GeneratorPlan build_plan(const SynthSpec& spec) {
    GeneratorPlan plan;
    WordFactory words(derive_seed(spec.seed, 0xB00C));
    Rng rng(derive_seed(spec.seed, 0x9A17));

    // Alias balance needs an even parent-template count.
    plan.n_parent_templates = 6;
    const std::size_t n_child_templates = std::max<std::size_t>(5, spec.tables_hi + 1);
    const std::size_t n_paired_types = 8;
    const std::size_t n_unpaired_types = 6;

    const std::size_t id_pool_size = std::max<std::size_t>(spec.rows_hi + 6, 16);
    plan.id_pool = words.make_many(id_pool_size);
    plan.pk_name = words.make();
    plan.fk_name = words.make();
    plan.attr_name = words.make();

    const std::size_t name_tokens = 2 * n_paired_types + n_unpaired_types + 4;
    const std::size_t theme_tokens = plan.n_parent_templates + n_child_templates;
    const std::size_t fixed = id_pool_size + name_tokens + theme_tokens + 20;
    const std::size_t value_budget =
        spec.vocab_size > fixed + 40 ? spec.vocab_size - fixed : 40;

    const std::size_t attr_pool_size = std::clamp<std::size_t>(value_budget / 8, 4, 24);
    const std::size_t type_pool_size = std::clamp<std::size_t>(
        (value_budget - attr_pool_size) / (n_paired_types + n_unpaired_types), 3, 16);

    plan.attr_pool = words.make_many(attr_pool_size);

    // types[0]: the attr family; "copy" columns use its pool with alias names.
    {
        ColumnTypeDef attr_type;
        attr_type.names = {words.make(), words.make()};
        attr_type.pool = plan.attr_pool;
        plan.types.push_back(attr_type);
    }
    for (std::size_t i = 0; i < n_paired_types; ++i) {
        ColumnTypeDef t;
        t.names = {words.make(), words.make()};
        t.pool = words.make_many(type_pool_size);
        plan.types.push_back(t);
    }
    for (std::size_t i = 0; i < n_unpaired_types; ++i) {
        ColumnTypeDef t;
        t.names = {words.make()};
        t.pool = words.make_many(type_pool_size);
        t.nullable = true;
        plan.types.push_back(t);
    }
    {
        ColumnTypeDef measure;
        measure.names = {words.make()};
        for (int v = 1; v < 20; ++v) measure.pool.push_back(std::to_string(v));
        measure.dtype = Dtype::Integer;
        plan.types.push_back(measure);
    }
    const std::size_t first_paired = 1;
    const std::size_t first_unpaired = first_paired + n_paired_types;
    const std::size_t measure_type = first_unpaired + n_unpaired_types;

    auto draw_cols = [&](bool is_parent) {
        std::vector<TemplateColumn> cols;
        std::size_t n =
            spec.cols_lo + rng.next_index(spec.cols_hi - spec.cols_lo + 1);
        std::vector<std::size_t> paired_ids, unpaired_ids;
        for (std::size_t k = 0; k < n_paired_types; ++k) paired_ids.push_back(first_paired + k);
        for (std::size_t k = 0; k < n_unpaired_types; ++k) unpaired_ids.push_back(first_unpaired + k);
        rng.shuffle(paired_ids);
        rng.shuffle(unpaired_ids);

        if (is_parent) {
            // Parents expose the shared attribute that children copy.
            cols.push_back({ColRole::Item, 0});
            for (std::size_t c = 1; c < n; ++c) {
                if (c + 1 == n && n >= 3) {
                    cols.push_back({ColRole::Measure, measure_type});
                } else if (!unpaired_ids.empty()) {
                    cols.push_back({ColRole::Category, unpaired_ids.back()});
                    unpaired_ids.pop_back();
                }
            }
        } else {
            // Children lead with the FK-copied attribute; the rest are
            // alias-paired category columns plus optional per-row noise.
            cols.push_back({ColRole::Copy, 0});
            for (std::size_t c = 1; c < n; ++c) {
                if (c + 1 == n && n >= 4 && !unpaired_ids.empty()) {
                    cols.push_back({ColRole::Item, unpaired_ids.back()});
                    unpaired_ids.pop_back();
                } else if (!paired_ids.empty()) {
                    cols.push_back({ColRole::Category, paired_ids.back()});
                    paired_ids.pop_back();
                }
            }
        }
        return cols;
    };

    for (std::size_t p = 0; p < plan.n_parent_templates; ++p) {
        TableTemplate t;
        t.theme = words.make();
        t.is_parent = true;
        t.fixed_attr = plan.attr_pool[p % plan.attr_pool.size()];
        t.data_cols = draw_cols(true);
        plan.templates.push_back(std::move(t));
    }
    for (std::size_t c = 0; c < n_child_templates; ++c) {
        TableTemplate t;
        t.theme = words.make();
        t.is_parent = false;
        t.data_cols = draw_cols(false);
        plan.templates.push_back(std::move(t));
    }

    plan.cat_pick.resize(plan.templates.size());
    for (std::size_t tid = 0; tid < plan.templates.size(); ++tid) {
        plan.cat_pick[tid].resize(plan.types.size());
        for (std::size_t ty = 0; ty < plan.types.size(); ++ty)
            plan.cat_pick[tid][ty] = rng.next_index(std::max<std::size_t>(plan.types[ty].pool.size(), 1));
    }
    return plan;
}

}  // namespace synth_detail

inline void validate_synth_spec(const SynthSpec& spec) {
    if (spec.n_databases == 0) throw InvalidSpec("n_databases must be positive");
    if (spec.tables_lo == 0 || spec.tables_hi < spec.tables_lo)
        throw InvalidSpec("invalid tables_per_db range");
    if (spec.rows_lo == 0 || spec.rows_hi < spec.rows_lo)
        throw InvalidSpec("invalid rows range");
    if (spec.cols_lo == 0 || spec.cols_hi < spec.cols_lo)
        throw InvalidSpec("invalid cols range");
    if (spec.vocab_size == 0) throw InvalidSpec("vocab_size must be positive");
    if (spec.fk_density < 0.0 || spec.fk_density > 1.0)
        throw InvalidSpec("fk_density must be in [0,1]");
}

inline std::vector<RelationalDatabase> generate_synthetic_corpus(const SynthSpec& spec) {
    validate_synth_spec(spec);
    using namespace synth_detail;
    GeneratorPlan plan = build_plan(spec);

    std::vector<RelationalDatabase> corpus;
    corpus.reserve(spec.n_databases);
    for (std::size_t dbi = 0; dbi < spec.n_databases; ++dbi) {
        Rng rng(derive_seed(spec.seed, 0xDB, dbi));
        RelationalDatabase db;
        db.name = "db" + std::to_string(dbi);

        std::size_t n_tables = spec.tables_lo + rng.next_index(spec.tables_hi - spec.tables_lo + 1);

        // First table is a parent; the rest are drawn from the remaining
        // templates without replacement so table names stay unique.
        std::vector<std::size_t> template_ids;
        template_ids.push_back(rng.next_index(plan.n_parent_templates));
        {
            std::vector<std::size_t> remaining;
            for (std::size_t i = 0; i < plan.templates.size(); ++i)
                if (i != template_ids[0]) remaining.push_back(i);
            rng.shuffle(remaining);
            // Prefer child templates after the first slot.
            std::stable_sort(remaining.begin(), remaining.end(),
                             [&](std::size_t a, std::size_t b) {
                                 return !plan.templates[a].is_parent && plan.templates[b].is_parent;
                             });
            for (std::size_t i = 0; i + 1 < n_tables && i < remaining.size(); ++i)
                template_ids.push_back(remaining[i]);
        }

        struct InstanceInfo {
            std::size_t template_id;
            std::vector<std::string> pk_values;
            std::size_t attr_col = 0;  // column index of the copied attribute (parents)
        };
        std::vector<InstanceInfo> instances;

        std::vector<std::size_t> parent_instances;
        for (std::size_t k = 0; k < template_ids.size(); ++k) {
            const TableTemplate& tpl = plan.templates[template_ids[k]];
            std::size_t n_rows = spec.rows_lo + rng.next_index(spec.rows_hi - spec.rows_lo + 1);

            bool attach_fk = !tpl.is_parent && !parent_instances.empty() &&
                             rng.bernoulli(spec.fk_density);
            std::size_t parent_slot = 0;
            if (attach_fk) parent_slot = parent_instances[rng.next_index(parent_instances.size())];

            TableDef t;
            t.name = tpl.theme;
            t.columns.push_back({plan.pk_name, Dtype::Text, false});
            t.primary_key = plan.pk_name;
            if (attach_fk) t.columns.push_back({plan.fk_name, Dtype::Text, false});

            // Resolve alias-paired column names through the parent template.
            std::size_t alias = 0;
            if (attach_fk)
                alias = instances[parent_slot].template_id % 2;
            else
                alias = rng.next_index(2);

            std::size_t attr_col_index = 0;
            for (std::size_t c = 0; c < tpl.data_cols.size(); ++c) {
                const auto& tc = tpl.data_cols[c];
                const ColumnTypeDef& type = plan.types[tc.type_id];
                std::string name;
                if (tc.role == ColRole::Copy || (type.names.size() == 2 && !tpl.is_parent))
                    name = type.names[alias % type.names.size()];
                else if (tc.type_id == 0 && tpl.is_parent)
                    name = plan.attr_name;
                else
                    name = type.names[0];
                if (tc.type_id == 0 && tpl.is_parent) attr_col_index = t.columns.size();
                t.columns.push_back({name, type.dtype, type.nullable});
            }

            // Category columns are constant per table: keyed by the FK
            // parent's template when attached, drawn per instance otherwise.
            std::vector<std::string> category_value(tpl.data_cols.size());
            for (std::size_t c = 0; c < tpl.data_cols.size(); ++c)
                if (tpl.data_cols[c].role == ColRole::Category) {
                    const std::size_t ty = tpl.data_cols[c].type_id;
                    const auto& pool = plan.types[ty].pool;
                    if (attach_fk)
                        category_value[c] =
                            pool[plan.cat_pick[instances[parent_slot].template_id][ty] %
                                 pool.size()];
                    else
                        category_value[c] = pool[rng.next_index(pool.size())];
                }

            auto pk_values = rng.sample_without_replacement(plan.id_pool.size(), n_rows);
            std::vector<Row> rows;
            InstanceInfo info;
            info.template_id = template_ids[k];
            info.attr_col = attr_col_index;
            for (std::size_t r = 0; r < n_rows; ++r) {
                Row row;
                row.push_back(Cell::of(plan.id_pool[pk_values[r]]));
                info.pk_values.push_back(plan.id_pool[pk_values[r]]);
                std::size_t parent_row = 0;
                if (attach_fk) {
                    parent_row = rng.next_index(instances[parent_slot].pk_values.size());
                    row.push_back(Cell::of(instances[parent_slot].pk_values[parent_row]));
                }
                for (std::size_t c = 0; c < tpl.data_cols.size(); ++c) {
                    const auto& tc = tpl.data_cols[c];
                    const ColumnTypeDef& type = plan.types[tc.type_id];
                    switch (tc.role) {
                        case ColRole::Copy: {
                            if (attach_fk) {
                                const Row& prow = db.rows[parent_slot][parent_row];
                                row.push_back(prow[instances[parent_slot].attr_col]);
                            } else {
                                row.push_back(Cell::of(type.pool[rng.next_index(type.pool.size())]));
                            }
                            break;
                        }
                        case ColRole::Category:
                            row.push_back(Cell::of(category_value[c]));
                            break;
                        case ColRole::Item:
                            if (tc.type_id == 0 && tpl.is_parent)
                                row.push_back(Cell::of(tpl.fixed_attr));
                            else if (type.nullable && rng.bernoulli(0.07))
                                row.push_back(Cell::make_null());
                            else
                                row.push_back(Cell::of(type.pool[rng.next_index(type.pool.size())]));
                            break;
                        case ColRole::Measure:
                            row.push_back(Cell::of(type.pool[rng.next_index(type.pool.size())]));
                            break;
                    }
                }
                rows.push_back(std::move(row));
            }

            if (attach_fk) {
                ForeignKey fk;
                fk.from_table = t.name;
                fk.from_column = plan.fk_name;
                fk.to_table = db.tables[parent_slot].name;
                fk.to_column = plan.pk_name;
                db.foreign_keys.push_back(std::move(fk));
            }
            if (tpl.is_parent) parent_instances.push_back(instances.size());
            instances.push_back(std::move(info));
            db.tables.push_back(std::move(t));
            db.rows.push_back(std::move(rows));
        }

        validate_database(db);
        corpus.push_back(std::move(db));
    }
    return corpus;
}

}  // namespace relgraph
