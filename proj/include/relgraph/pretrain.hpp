#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relgraph/checkpoint.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/graph.hpp"
#include "relgraph/model.hpp"
#include "relgraph/relational.hpp"
#include "relgraph/rng.hpp"
#include "relgraph/tokenizer.hpp"
#include "relgraph/vocabulary.hpp"

namespace relgraph {

// --- configuration ----------------------------------------------------------

struct SplitRatios {
    double train = 0.7;
    double val = 0.2;
    double test = 0.1;
};

struct SeedSet {
    std::uint64_t model = 1;
    std::uint64_t mask = 2;
    std::uint64_t sample = 3;
    std::uint64_t split = 4;
};

struct TrainConfig {
    std::size_t phase1_epochs = 12;
    std::size_t phase2_epochs = 8;
    std::size_t batch_size = 8;
    MaskRates rates;
    ModelConfig model;                // model.vocab_size filled after vocabulary build
    std::vector<std::size_t> fanout;  // empty → full-graph training
    SeedSet seeds;
    SplitRatios ratios;
    std::size_t n_runs = 3;
    bool stats_enabled = false;
    bool freeze_decoder = false;
    AdamConfig adam;
};

inline void validate_config(const TrainConfig& cfg) {
    double sum = cfg.ratios.train + cfg.ratios.val + cfg.ratios.test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split ratios sum to " + std::to_string(sum) + ", expected 1");
    if (cfg.ratios.train <= 0 || cfg.ratios.val < 0 || cfg.ratios.test < 0)
        throw ConfigError("split ratios must be non-negative with a positive train share");
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (cfg.n_runs == 0) throw ConfigError("n_runs must be positive");
    for (double r : {cfg.rates.cell_rate, cfg.rates.col_rate, cfg.rates.tab_rate})
        if (r < 0.0 || r > 1.0) throw ConfigError("mask rates must lie in [0,1]");
}

// --- corpus splits ----------------------------------------------------------

struct SplitTableRef {
    std::size_t db = 0;
    std::size_t table = 0;
};

struct CorpusSplit {
    std::vector<SplitTableRef> train, val, test;
};

// Splits by TABLE with exact floor quotas: floor(N·train) tables to train,
// floor(N·val) to val, remainder to test. The shuffle is database-contiguous
// (databases shuffled, tables within a database stay together in order) so
// most foreign-key pairs land in the same split.
inline CorpusSplit split_corpus(const std::vector<RelationalDatabase>& corpus,
                                const SplitRatios& ratios, std::uint64_t split_seed) {
    std::vector<std::size_t> db_order(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) db_order[i] = i;
    Rng rng(derive_seed(split_seed, 0x59117));
    rng.shuffle(db_order);

    std::vector<SplitTableRef> all;
    for (std::size_t dbi : db_order)
        for (std::size_t ti = 0; ti < corpus[dbi].tables.size(); ++ti) all.push_back({dbi, ti});

    std::size_t n = all.size();
    std::size_t n_train = static_cast<std::size_t>(static_cast<double>(n) * ratios.train);
    std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n) * ratios.val);
    CorpusSplit split;
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train)
            split.train.push_back(all[i]);
        else if (i < n_train + n_val)
            split.val.push_back(all[i]);
        else
            split.test.push_back(all[i]);
    }
    return split;
}

// Projects one split back into standalone databases: each database keeps only
// its tables in the split (canonical order), and foreign keys survive only
// when both endpoints stayed.
inline std::vector<RelationalDatabase> project_split(const std::vector<RelationalDatabase>& corpus,
                                                     const std::vector<SplitTableRef>& refs) {
    std::vector<std::vector<bool>> keep(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) keep[i].assign(corpus[i].tables.size(), false);
    for (const SplitTableRef& r : refs) keep[r.db][r.table] = true;

    std::vector<RelationalDatabase> out;
    for (std::size_t dbi = 0; dbi < corpus.size(); ++dbi) {
        const RelationalDatabase& src = corpus[dbi];
        RelationalDatabase dst;
        dst.name = src.name;
        for (std::size_t ti = 0; ti < src.tables.size(); ++ti) {
            if (!keep[dbi][ti]) continue;
            dst.tables.push_back(src.tables[ti]);
            dst.rows.push_back(src.rows[ti]);
        }
        if (dst.tables.empty()) continue;
        for (const ForeignKey& fk : src.foreign_keys)
            if (dst.table_index(fk.from_table) && dst.table_index(fk.to_table))
                dst.foreign_keys.push_back(fk);
        out.push_back(std::move(dst));
    }
    return out;
}

// --- sample construction ----------------------------------------------------

// Targets may contain arbitrary text; any token that would collide with a
// reserved id (other than legitimate vocabulary words) decodes as UNK.
inline std::vector<TokenId> encode_target(const Vocabulary& vocab, const std::string& text) {
    std::vector<TokenId> ids = vocab.encode_text(text);
    for (TokenId& id : ids)
        if (id < kReservedCount && id != kUnk) id = kUnk;
    return ids;
}

inline std::string target_text(const RelationalDatabase& db, const MaskSpec& spec) {
    const TableDef& t = db.tables.at(spec.table);
    switch (spec.target) {
        case MaskTarget::Cell:
            return db.rows[spec.table].at(*spec.row).at(*spec.column).value;
        case MaskTarget::ColumnName:
            return t.columns.at(*spec.column).name;
        case MaskTarget::TableName:
            return t.name;
    }
    return {};
}

// Deterministic carrier row for a name mask when only row serializations
// exist (phase 1 and the row-only baseline): the spec's own seed picks it.
inline std::optional<std::size_t> carrier_row(const RelationalDatabase& db, const MaskSpec& spec) {
    if (spec.target == MaskTarget::Cell) return spec.row;
    std::size_t rows = db.rows[spec.table].size();
    if (rows == 0) return std::nullopt;
    return static_cast<std::size_t>(spec.seed % rows);
}

struct RowSample {
    std::vector<TokenId> ids;
    std::vector<TokenId> target_tokens;
};

// Masked single-row serialization plus target tokens, or nullopt when the
// sample cannot be formed (empty table, target truncated away).
inline std::optional<RowSample> build_row_sample(const RelationalDatabase& db,
                                                 const Vocabulary& vocab, std::size_t max_seq_len,
                                                 const MaskSpec& spec) {
    std::optional<std::size_t> row = carrier_row(db, spec);
    if (!row) return std::nullopt;
    RowSample sample;
    try {
        TokenSequence seq =
            serialize_row(db, db.tables[spec.table].name, *row, vocab, max_seq_len, spec);
        sample.ids = std::move(seq.ids);
    } catch (const MaskTargetNotInRow&) {
        return std::nullopt;
    }
    sample.target_tokens = encode_target(vocab, target_text(db, spec));
    return sample;
}

// Appends the terminating PAD step when it fits; a target at or beyond
// max_decode_len is truncated instead (and can then never be exactly
// reconstructed — counted honestly as a miss at evaluation).
inline std::vector<TokenId> training_targets(const std::vector<TokenId>& target_tokens,
                                             std::size_t max_decode_len) {
    std::vector<TokenId> t(target_tokens.begin(),
                           target_tokens.begin() +
                               static_cast<std::ptrdiff_t>(
                                   std::min(target_tokens.size(), max_decode_len)));
    if (t.size() < max_decode_len) t.push_back(kPad);
    return t;
}

// --- training log -----------------------------------------------------------

struct EpochLog {
    int phase = 1;
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<std::array<double, 3>> val_accuracy;  // per task
    double wall_time_s = 0.0;
};

using TrainLog = std::vector<EpochLog>;

// --- phase 1 ----------------------------------------------------------------

// Fine-tunes encoder and decoder on masked single-row reconstruction. Mask
// targets are redrawn per epoch from the configured rates; batches accumulate
// gradients in canonical order before each Adam step.
inline ModelState phase1_finetune(const TrainConfig& cfg,
                                  const std::vector<RelationalDatabase>& train_dbs,
                                  const Vocabulary& vocab, TrainLog* log = nullptr) {
    validate_config(cfg);
    std::size_t total_tables = 0;
    for (const RelationalDatabase& db : train_dbs) total_tables += db.tables.size();
    if (train_dbs.empty() || total_tables == 0)
        throw EmptyTrainSplit("phase 1 requires a non-empty training split");

    ModelConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    ModelState state = init_model(mc, cfg.seeds.model);

    for (std::size_t epoch = 0; epoch < cfg.phase1_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<std::pair<std::size_t, MaskSpec>> specs;
        std::uint64_t epoch_seed = derive_seed(cfg.seeds.mask, 0x9101, epoch);
        for (std::size_t dbi = 0; dbi < train_dbs.size(); ++dbi)
            for (const MaskSpec& s :
                 sample_mask_targets(train_dbs[dbi], cfg.rates, derive_seed(epoch_seed, dbi)))
                specs.emplace_back(dbi, s);

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        std::size_t batch_start = 0;
        while (batch_start < specs.size()) {
            std::size_t batch_end = std::min(batch_start + cfg.batch_size, specs.size());
            state.zero_grads();
            std::size_t in_batch = 0;
            double inv_batch = 1.0 / static_cast<double>(batch_end - batch_start);
            for (std::size_t i = batch_start; i < batch_end; ++i) {
                auto sample = build_row_sample(train_dbs[specs[i].first], vocab,
                                               cfg.model.max_seq_len, specs[i].second);
                if (!sample) continue;
                std::vector<TokenId> targets =
                    training_targets(sample->target_tokens, cfg.model.max_decode_len);
                Tape t;
                int repr = encode_on_tape(t, state.enc, sample->ids);
                int probs = decode_on_tape(t, state.dec, repr, targets.size());
                std::vector<std::size_t> tgt(targets.begin(), targets.end());
                int loss = t.cross_entropy(probs, std::move(tgt));
                loss_sum += t.val(loss).at(0, 0);
                ++loss_count;
                t.backward(t.scale(loss, inv_batch));
                state.note_backward();
                ++in_batch;
            }
            if (in_batch > 0) adam_step(state, cfg.adam);
            batch_start = batch_end;
        }
        if (log) {
            EpochLog el;
            el.phase = 1;
            el.epoch = epoch;
            el.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
            el.wall_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log->push_back(el);
        }
    }
    return state;
}

// --- graph samples ----------------------------------------------------------

struct GraphSample {
    MaskSpec spec;
    NodeFeatures features;  // base features with the affected nodes re-encoded
    std::size_t target_node = 0;
    std::vector<TokenId> target_tokens;
};

// Re-encodes exactly the node features a mask touches, leaving everything
// else at the unmasked base. Cell masks touch one row node; column-name
// masks touch the column node and every row of the table; table-name masks
// touch the table node, its columns, and its rows.
inline GraphSample materialize_graph_sample(const RelationalDatabase& db, const SchemaGraph& g,
                                            const Vocabulary& vocab, std::size_t max_seq_len,
                                            EncoderParams& enc, const MaskSpec& spec,
                                            const NodeFeatures& base) {
    if (spec.table >= db.tables.size()) throw InvalidMaskSpec("mask table out of range");
    const TableDef& table = db.tables[spec.table];
    const std::string& tname = table.name;

    GraphSample out;
    out.spec = spec;
    out.features = base;

    auto encode = [&](const TokenSequence& seq) { return encode_sequence(enc, seq); };

    switch (spec.target) {
        case MaskTarget::Cell: {
            if (!spec.row || *spec.row >= db.rows[spec.table].size())
                throw InvalidMaskSpec("cell mask row out of range");
            if (!spec.column || *spec.column >= table.columns.size())
                throw InvalidMaskSpec("cell mask column out of range");
            if (db.rows[spec.table][*spec.row][*spec.column].null)
                throw InvalidMaskSpec("cell mask may not target a NULL cell");
            std::size_t node = g.row_node(spec.table, *spec.row);
            out.features.features[node] =
                encode(serialize_row(db, tname, *spec.row, vocab, max_seq_len, spec));
            out.target_node = node;
            break;
        }
        case MaskTarget::ColumnName: {
            if (!spec.column || *spec.column >= table.columns.size())
                throw InvalidMaskSpec("column-name mask column out of range");
            std::size_t col_node = g.column_node(spec.table, *spec.column);
            out.features.features[col_node] =
                encode(column_name_sequence(db, spec.table, *spec.column, vocab, true, false));
            for (std::size_t ri = 0; ri < db.rows[spec.table].size(); ++ri) {
                MaskSpec row_spec = spec;
                row_spec.row = std::nullopt;
                out.features.features[g.row_node(spec.table, ri)] =
                    encode(serialize_row(db, tname, ri, vocab, max_seq_len, row_spec));
            }
            out.target_node = col_node;
            break;
        }
        case MaskTarget::TableName: {
            std::size_t tab_node = g.table_node(spec.table);
            out.features.features[tab_node] =
                encode(table_name_sequence(db, spec.table, vocab, true));
            for (std::size_t ci = 0; ci < table.columns.size(); ++ci)
                out.features.features[g.column_node(spec.table, ci)] =
                    encode(column_name_sequence(db, spec.table, ci, vocab, false, true));
            for (std::size_t ri = 0; ri < db.rows[spec.table].size(); ++ri)
                out.features.features[g.row_node(spec.table, ri)] =
                    encode(serialize_row(db, tname, ri, vocab, max_seq_len, spec));
            out.target_node = tab_node;
            break;
        }
    }
    out.target_tokens = encode_target(vocab, target_text(db, spec));
    return out;
}

// --- evaluation -------------------------------------------------------------

enum class Task { MissingValue, ColumnName, TableName };

inline const char* task_name(Task t) {
    switch (t) {
        case Task::MissingValue: return "missing_values";
        case Task::ColumnName: return "column_name_detection";
        case Task::TableName: return "table_name_detection";
    }
    return "?";
}

inline Task task_of(MaskTarget t) {
    switch (t) {
        case MaskTarget::Cell: return Task::MissingValue;
        case MaskTarget::ColumnName: return Task::ColumnName;
        case MaskTarget::TableName: return Task::TableName;
    }
    return Task::MissingValue;
}

struct EvalOptions {
    bool use_gnn = true;
    std::size_t max_seq_len = 64;
    bool stats_enabled = false;
};

struct EvalCounts {
    std::array<std::size_t, 3> hits{};
    std::array<std::size_t, 3> totals{};

    std::array<double, 3> accuracies() const {
        std::array<double, 3> acc{};
        for (std::size_t i = 0; i < 3; ++i)
            acc[i] = totals[i] ? static_cast<double>(hits[i]) / static_cast<double>(totals[i]) : 0.0;
        return acc;
    }
};

// Exact-match greedy reconstruction over every admissible mask target of the
// split. With use_gnn the target node's GCN output representation is
// decoded; without it, the masked row serialization's own encoding is (name
// masks ride a deterministic carrier row, as in phase-1 training).
inline EvalCounts evaluate_counts(ModelState& state, const std::vector<RelationalDatabase>& dbs,
                                  const Vocabulary& vocab, const EvalOptions& opts) {
    if (dbs.empty()) throw EmptySplit("evaluation split has no databases");
    EvalCounts counts;
    for (const RelationalDatabase& db : dbs) {
        SchemaGraph g;
        NodeFeatures base;
        PropGraph pg;
        if (opts.use_gnn) {
            g = build_graph(db);
            base = attach_features(
                g, db, vocab, opts.max_seq_len,
                [&](const TokenSequence& s) { return encode_sequence(state.enc, s); },
                opts.stats_enabled);
            pg = make_prop_graph(g);
        }
        for (const MaskSpec& spec : enumerate_mask_targets(db)) {
            std::size_t task = static_cast<std::size_t>(task_of(spec.target));
            std::vector<TokenId> target = encode_target(vocab, target_text(db, spec));
            std::vector<TokenId> predicted;
            if (opts.use_gnn) {
                GraphSample sample;
                try {
                    sample = materialize_graph_sample(db, g, vocab, opts.max_seq_len, state.enc,
                                                      spec, base);
                } catch (const MaskTargetNotInRow&) {
                    counts.totals[task] += 1;  // unattemptable counts as a miss
                    continue;
                }
                Tape t;
                int h = gcn_on_tape(t, state.gcn, pg, gcn_input_on_tape(t, state.gcn, sample.features));
                int repr = t.gather_rows(h, {sample.target_node});
                predicted = greedy_decode(state.dec, t.val(repr).v);
            } else {
                auto sample = build_row_sample(db, vocab, opts.max_seq_len, spec);
                if (!sample) {
                    counts.totals[task] += 1;  // unattemptable counts as a miss
                    continue;
                }
                Tape t;
                int repr = encode_on_tape(t, state.enc, sample->ids);
                predicted = greedy_decode(state.dec, t.val(repr).v);
            }
            counts.totals[task] += 1;
            if (predicted == target) counts.hits[task] += 1;
        }
    }
    return counts;
}

inline double evaluate_split(ModelState& state, const std::vector<RelationalDatabase>& dbs,
                             const Vocabulary& vocab, Task task, const EvalOptions& opts) {
    EvalCounts counts = evaluate_counts(state, dbs, vocab, opts);
    std::size_t i = static_cast<std::size_t>(task);
    if (counts.totals[i] == 0) throw EmptySplit(std::string("no targets for ") + task_name(task));
    return counts.accuracies()[i];
}

// --- phase 2 ----------------------------------------------------------------

// Freezes the encoder and trains GCN + decoder on masked-node graph samples.
// Per epoch the full validation split is scored; the best-validation
// checkpoint (pooled accuracy over all targets, ties to the earlier epoch)
// is returned.
inline ModelState phase2_train_gnn(const TrainConfig& cfg,
                                   const std::vector<RelationalDatabase>& train_dbs,
                                   const std::vector<RelationalDatabase>& val_dbs,
                                   const Vocabulary& vocab, std::optional<ModelState> phase1_state,
                                   TrainLog* log = nullptr) {
    validate_config(cfg);
    if (!phase1_state) throw MissingPhase1State("phase 2 requires the phase-1 model state");
    if (train_dbs.empty()) throw EmptyTrainSplit("phase 2 requires a non-empty training split");
    ModelState state = std::move(*phase1_state);
    state.enc.frozen = true;
    state.dec.frozen = cfg.freeze_decoder;

    EvalOptions eval_opts;
    eval_opts.use_gnn = true;
    eval_opts.max_seq_len = cfg.model.max_seq_len;
    eval_opts.stats_enabled = cfg.stats_enabled;

    // The encoder is frozen, so unmasked base features are computed once.
    std::vector<SchemaGraph> graphs(train_dbs.size());
    std::vector<NodeFeatures> bases(train_dbs.size());
    std::vector<PropGraph> prop_graphs(train_dbs.size());
    for (std::size_t dbi = 0; dbi < train_dbs.size(); ++dbi) {
        graphs[dbi] = build_graph(train_dbs[dbi]);
        bases[dbi] = attach_features(
            graphs[dbi], train_dbs[dbi], vocab, cfg.model.max_seq_len,
            [&](const TokenSequence& s) { return encode_sequence(state.enc, s); },
            cfg.stats_enabled);
        prop_graphs[dbi] = make_prop_graph(graphs[dbi]);
    }

    std::string best_blob = serialize_checkpoint(state);
    double best_acc = -1.0;
    bool have_val = !val_dbs.empty();
    if (have_val) {
        EvalCounts c = evaluate_counts(state, val_dbs, vocab, eval_opts);
        std::size_t hits = c.hits[0] + c.hits[1] + c.hits[2];
        std::size_t totals = c.totals[0] + c.totals[1] + c.totals[2];
        best_acc = totals ? static_cast<double>(hits) / static_cast<double>(totals) : 0.0;
    }

    for (std::size_t epoch = 0; epoch < cfg.phase2_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<std::pair<std::size_t, MaskSpec>> specs;
        std::uint64_t epoch_seed = derive_seed(cfg.seeds.mask, 0x9102, epoch);
        for (std::size_t dbi = 0; dbi < train_dbs.size(); ++dbi)
            for (const MaskSpec& s :
                 sample_mask_targets(train_dbs[dbi], cfg.rates, derive_seed(epoch_seed, dbi)))
                specs.emplace_back(dbi, s);

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        std::size_t batch_start = 0;
        std::size_t sample_index = 0;
        while (batch_start < specs.size()) {
            std::size_t batch_end = std::min(batch_start + cfg.batch_size, specs.size());
            state.zero_grads();
            std::size_t in_batch = 0;
            double inv_batch = 1.0 / static_cast<double>(batch_end - batch_start);
            for (std::size_t i = batch_start; i < batch_end; ++i, ++sample_index) {
                std::size_t dbi = specs[i].first;
                GraphSample sample;
                try {
                    sample = materialize_graph_sample(train_dbs[dbi], graphs[dbi], vocab,
                                                      cfg.model.max_seq_len, state.enc,
                                                      specs[i].second, bases[dbi]);
                } catch (const MaskTargetNotInRow&) {
                    continue;
                }
                std::vector<TokenId> targets =
                    training_targets(sample.target_tokens, cfg.model.max_decode_len);
                Tape t;
                int repr;
                Subgraph sub;
                PropGraph spg;  // the tape holds a pointer; must outlive backward()
                if (cfg.fanout.empty()) {
                    int h = gcn_on_tape(t, state.gcn, prop_graphs[dbi],
                                        gcn_input_on_tape(t, state.gcn, sample.features));
                    repr = t.gather_rows(h, {sample.target_node});
                } else {
                    sub = sample_subgraph(graphs[dbi], sample.target_node, cfg.fanout,
                                          derive_seed(cfg.seeds.sample, epoch, sample_index));
                    spg = make_prop_graph(sub);
                    NodeFeatures sub_features;
                    sub_features.d_model = sample.features.d_model;
                    sub_features.stats_enabled = sample.features.stats_enabled;
                    for (std::size_t global_id : sub.nodes) {
                        sub_features.features.push_back(sample.features.features[global_id]);
                        if (sample.features.stats_enabled)
                            sub_features.stats.push_back(sample.features.stats[global_id]);
                    }
                    int h = gcn_on_tape(t, state.gcn, spg,
                                        gcn_input_on_tape(t, state.gcn, sub_features));
                    repr = t.gather_rows(h, {sub.local_of(sample.target_node)});
                }
                int probs = decode_on_tape(t, state.dec, repr, targets.size());
                std::vector<std::size_t> tgt(targets.begin(), targets.end());
                int loss = t.cross_entropy(probs, std::move(tgt));
                loss_sum += t.val(loss).at(0, 0);
                ++loss_count;
                t.backward(t.scale(loss, inv_batch));
                state.note_backward();
                ++in_batch;
            }
            if (in_batch > 0) adam_step(state, cfg.adam);
            batch_start = batch_end;
        }

        EpochLog el;
        el.phase = 2;
        el.epoch = epoch;
        el.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
        if (have_val) {
            EvalCounts c = evaluate_counts(state, val_dbs, vocab, eval_opts);
            el.val_accuracy = c.accuracies();
            std::size_t hits = c.hits[0] + c.hits[1] + c.hits[2];
            std::size_t totals = c.totals[0] + c.totals[1] + c.totals[2];
            double pooled = totals ? static_cast<double>(hits) / static_cast<double>(totals) : 0.0;
            if (pooled > best_acc) {
                best_acc = pooled;
                best_blob = serialize_checkpoint(state);
            }
        } else {
            best_blob = serialize_checkpoint(state);
        }
        el.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (log) log->push_back(el);
    }
    return deserialize_checkpoint(best_blob);
}

}  // namespace relgraph
