#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "relgraph/pretrain.hpp"
#include "relgraph/synthetic.hpp"

#include "support.hpp"

namespace {

using namespace relgraph;

// Four databases with 3+3+2+2 tables: ten tables total, the worked split
// example.
std::vector<RelationalDatabase> ten_table_corpus() {
    SynthSpec spec;
    spec.n_databases = 16;
    spec.tables_lo = 2;
    spec.tables_hi = 3;
    spec.rows_lo = 4;
    spec.rows_hi = 6;
    spec.seed = 77;
    auto pool = generate_synthetic_corpus(spec);
    std::vector<RelationalDatabase> out;
    std::size_t tables = 0;
    for (auto& db : pool) {
        std::size_t want = out.size() < 2 ? 3 : 2;
        if (db.tables.size() != want) continue;
        out.push_back(std::move(db));
        tables += want;
        if (out.size() == 4) break;
    }
    REQUIRE(out.size() == 4);
    REQUIRE(tables == 10);
    return out;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.phase1_epochs = 2;
    cfg.phase2_epochs = 2;
    cfg.batch_size = 4;
    cfg.model.d_model = 8;
    cfg.model.max_seq_len = 48;
    cfg.model.n_enc = 1;
    cfg.model.gcn_layers = 2;
    cfg.model.max_decode_len = 4;
    cfg.n_runs = 1;
    return cfg;
}

double pooled_accuracy(const EvalCounts& c) {
    std::size_t hits = c.hits[0] + c.hits[1] + c.hits[2];
    std::size_t totals = c.totals[0] + c.totals[1] + c.totals[2];
    return totals ? static_cast<double>(hits) / static_cast<double>(totals) : 0.0;
}

}  // namespace

TEST_CASE("split_corpus sends ten tables to 7/2/1 disjoint groups") {
    auto corpus = ten_table_corpus();
    CorpusSplit split = split_corpus(corpus, SplitRatios{}, 4);
    CHECK(split.train.size() == 7);
    CHECK(split.val.size() == 2);
    CHECK(split.test.size() == 1);

    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<SplitTableRef> all;
    for (const auto* part : {&split.train, &split.val, &split.test})
        for (const SplitTableRef& r : *part) {
            CHECK(seen.insert({r.db, r.table}).second);  // disjoint
            all.push_back(r);
        }
    // Exhaustive: every table of every database lands somewhere.
    std::size_t want = 0;
    for (const auto& db : corpus) want += db.tables.size();
    CHECK(seen.size() == want);

    // Database-contiguous shuffle: a database's tables stay adjacent, in order.
    for (std::size_t dbi = 0; dbi < corpus.size(); ++dbi) {
        std::vector<std::size_t> positions;
        for (std::size_t i = 0; i < all.size(); ++i)
            if (all[i].db == dbi) positions.push_back(i);
        for (std::size_t k = 1; k < positions.size(); ++k) {
            CHECK(positions[k] == positions[k - 1] + 1);
            CHECK(all[positions[k]].table == all[positions[k - 1]].table + 1);
        }
    }

    SUBCASE("deterministic in the split seed") {
        CorpusSplit again = split_corpus(corpus, SplitRatios{}, 4);
        REQUIRE(again.train.size() == split.train.size());
        for (std::size_t i = 0; i < split.train.size(); ++i) {
            CHECK(again.train[i].db == split.train[i].db);
            CHECK(again.train[i].table == split.train[i].table);
        }
    }
}

TEST_CASE("project_split keeps only intra-split foreign keys") {
    std::vector<RelationalDatabase> corpus{support::planets_moons()};
    SUBCASE("both tables kept") {
        auto dbs = project_split(corpus, {{0, 0}, {0, 1}});
        REQUIRE(dbs.size() == 1);
        CHECK(dbs[0].tables.size() == 2);
        CHECK(dbs[0].foreign_keys.size() == 1);
    }
    SUBCASE("child only: the dangling foreign key is dropped") {
        auto dbs = project_split(corpus, {{0, 1}});
        REQUIRE(dbs.size() == 1);
        CHECK(dbs[0].tables.size() == 1);
        CHECK(dbs[0].tables[0].name == "moons");
        CHECK(dbs[0].foreign_keys.empty());
    }
    SUBCASE("databases with no kept tables vanish") {
        auto dbs = project_split(corpus, {});
        CHECK(dbs.empty());
    }
}

TEST_CASE("validate_config rejects inconsistent settings") {
    TrainConfig cfg = tiny_config();
    CHECK_NOTHROW(validate_config(cfg));
    SUBCASE("ratios must sum to one") {
        cfg.ratios.val = 0.5;
        CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    }
    SUBCASE("batch size positive") {
        cfg.batch_size = 0;
        CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    }
    SUBCASE("run count positive") {
        cfg.n_runs = 0;
        CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    }
    SUBCASE("mask rates in range") {
        cfg.rates.cell_rate = 1.2;
        CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    }
}

TEST_CASE("encode_target maps reserved collisions to UNK") {
    Vocabulary vocab = build_vocabulary({support::planets_moons()});
    CHECK(encode_target(vocab, "Jupiter") == std::vector<TokenId>{vocab.id_of("Jupiter")});
    CHECK(encode_target(vocab, "[TAB]") == std::vector<TokenId>{kUnk});
    CHECK(encode_target(vocab, "no-such-token") == std::vector<TokenId>{kUnk});
    CHECK(encode_target(vocab, "red gold") ==
          std::vector<TokenId>{vocab.id_of("red"), vocab.id_of("gold")});
}

TEST_CASE("target_text and carrier_row resolve mask specs") {
    RelationalDatabase db = support::planets_moons();
    MaskSpec cell{MaskTarget::Cell, 1, 2, 1, 5};
    CHECK(target_text(db, cell) == "Saturn");
    CHECK(carrier_row(db, cell) == std::optional<std::size_t>{2});

    MaskSpec col{MaskTarget::ColumnName, 0, std::nullopt, 1, 7};
    CHECK(target_text(db, col) == "color");
    CHECK(carrier_row(db, col) == std::optional<std::size_t>{7 % 2});

    MaskSpec tab{MaskTarget::TableName, 1, std::nullopt, std::nullopt, 12};
    CHECK(target_text(db, tab) == "moons");
    CHECK(carrier_row(db, tab) == std::optional<std::size_t>{12 % 3});

    db.rows[1].clear();
    CHECK_FALSE(carrier_row(db, tab).has_value());
}

TEST_CASE("build_row_sample produces a masked sequence with its target") {
    RelationalDatabase db = support::planets_moons();
    Vocabulary vocab = build_vocabulary({db});
    MaskSpec spec{MaskTarget::Cell, 1, 0, 1, 3};
    auto sample = build_row_sample(db, vocab, 64, spec);
    REQUIRE(sample.has_value());
    CHECK(std::count(sample->ids.begin(), sample->ids.end(), kMask) == 1);
    CHECK(sample->target_tokens == std::vector<TokenId>{vocab.id_of("Jupiter")});

    // Name masks ride the seed-picked carrier row.
    MaskSpec tab{MaskTarget::TableName, 1, std::nullopt, std::nullopt, 4};
    auto name_sample = build_row_sample(db, vocab, 64, tab);
    REQUIRE(name_sample.has_value());
    CHECK(name_sample->ids[1] == kMask);
    CHECK(name_sample->target_tokens == std::vector<TokenId>{vocab.id_of("moons")});

    // A target truncated out of the window yields no sample.
    MaskSpec far{MaskTarget::Cell, 1, 0, 1, 3};
    auto truncated = build_row_sample(db, vocab, 8, far);
    CHECK_FALSE(truncated.has_value());
}

TEST_CASE("training_targets appends one terminating PAD when it fits") {
    CHECK(training_targets({9, 11}, 4) == std::vector<TokenId>{9, 11, kPad});
    CHECK(training_targets({9, 11, 12, 13}, 4) == std::vector<TokenId>{9, 11, 12, 13});
    CHECK(training_targets({9, 11, 12, 13, 14}, 4) == std::vector<TokenId>{9, 11, 12, 13});
    CHECK(training_targets({}, 4) == std::vector<TokenId>{kPad});
}

TEST_CASE("phase1_finetune with zero epochs returns the initialized model") {
    std::vector<RelationalDatabase> dbs{support::toy_database()};
    Vocabulary vocab = build_vocabulary(dbs);
    TrainConfig cfg = tiny_config();
    cfg.phase1_epochs = 0;
    ModelState trained = phase1_finetune(cfg, dbs, vocab);

    ModelConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    ModelState fresh = init_model(mc, cfg.seeds.model);
    CHECK(support::state_fingerprint(trained) == support::state_fingerprint(fresh));
}

TEST_CASE("phase1_finetune is bitwise deterministic and lowers the loss") {
    std::vector<RelationalDatabase> dbs{support::toy_database()};
    Vocabulary vocab = build_vocabulary(dbs);
    TrainConfig cfg = tiny_config();
    cfg.phase1_epochs = 12;
    cfg.rates = {0.6, 0.3, 0.3};
    cfg.adam.lr = 1e-2;

    TrainLog log_a, log_b;
    ModelState a = phase1_finetune(cfg, dbs, vocab, &log_a);
    ModelState b = phase1_finetune(cfg, dbs, vocab, &log_b);
    CHECK(support::state_fingerprint(a) == support::state_fingerprint(b));
    REQUIRE(log_a.size() == 12);
    for (std::size_t i = 0; i < log_a.size(); ++i) {
        CHECK(log_a[i].train_loss == log_b[i].train_loss);
        CHECK(log_a[i].phase == 1);
        CHECK_FALSE(log_a[i].val_accuracy.has_value());
    }
    // Mask draws differ per epoch, so compare leading and trailing means.
    double head = (log_a[0].train_loss + log_a[1].train_loss + log_a[2].train_loss) / 3.0;
    double tail = (log_a[9].train_loss + log_a[10].train_loss + log_a[11].train_loss) / 3.0;
    CHECK(tail < head);

    CHECK_THROWS_AS(phase1_finetune(cfg, {}, vocab), EmptyTrainSplit);
}

TEST_CASE("phase 1 memorizes a one-table toy corpus") {
    std::vector<RelationalDatabase> dbs{support::toy_database()};
    Vocabulary vocab = build_vocabulary(dbs);
    TrainConfig cfg = tiny_config();
    cfg.model.d_model = 16;
    cfg.phase1_epochs = 300;
    cfg.rates = {1.0, 1.0, 1.0};
    cfg.batch_size = 8;
    cfg.adam.lr = 1e-2;

    ModelState state = phase1_finetune(cfg, dbs, vocab);
    EvalOptions opts;
    opts.use_gnn = false;
    opts.max_seq_len = cfg.model.max_seq_len;
    double cells = evaluate_split(state, dbs, vocab, Task::MissingValue, opts);
    CHECK(cells == 1.0);
}

TEST_CASE("materialize_graph_sample re-encodes exactly the touched nodes") {
    RelationalDatabase db = support::planets_moons();
    Vocabulary vocab = build_vocabulary({db});
    SchemaGraph g = build_graph(db);
    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.d_model = 8;
    mc.max_seq_len = 32;
    ModelState s = init_model(mc, 11);
    NodeFeatures base = attach_features(g, db, vocab, 32, [&](const TokenSequence& seq) {
        return encode_sequence(s.enc, seq);
    });

    auto diff_count = [&](const NodeFeatures& f) {
        std::size_t n = 0;
        for (std::size_t i = 0; i < f.features.size(); ++i)
            if (f.features[i] != base.features[i]) ++n;
        return n;
    };

    SUBCASE("cell mask touches one row node") {
        MaskSpec spec{MaskTarget::Cell, 1, 1, 1, 0};
        GraphSample sample = materialize_graph_sample(db, g, vocab, 32, s.enc, spec, base);
        CHECK(sample.target_node == g.row_node(1, 1));
        CHECK(diff_count(sample.features) == 1);
        CHECK(sample.features.features[g.row_node(1, 1)] !=
              base.features[g.row_node(1, 1)]);
        CHECK(sample.target_tokens == std::vector<TokenId>{vocab.id_of("Jupiter")});
    }
    SUBCASE("column mask touches the column node and all rows of its table") {
        MaskSpec spec{MaskTarget::ColumnName, 1, std::nullopt, 0, 0};
        GraphSample sample = materialize_graph_sample(db, g, vocab, 32, s.enc, spec, base);
        CHECK(sample.target_node == g.column_node(1, 0));
        CHECK(diff_count(sample.features) == 4);  // 1 column + 3 rows
    }
    SUBCASE("table mask touches the whole table neighborhood") {
        MaskSpec spec{MaskTarget::TableName, 1, std::nullopt, std::nullopt, 0};
        GraphSample sample = materialize_graph_sample(db, g, vocab, 32, s.enc, spec, base);
        CHECK(sample.target_node == g.table_node(1));
        CHECK(diff_count(sample.features) == 6);  // table + 2 columns + 3 rows
        CHECK(sample.target_tokens == std::vector<TokenId>{vocab.id_of("moons")});
    }
    SUBCASE("invalid specs are rejected") {
        RelationalDatabase nullable = db;
        nullable.tables[0].columns[1].nullable = true;
        nullable.rows[0][0][1] = Cell::make_null();
        MaskSpec null_cell{MaskTarget::Cell, 0, 0, 1, 0};
        CHECK_THROWS_AS(materialize_graph_sample(nullable, g, vocab, 32, s.enc, null_cell, base),
                        InvalidMaskSpec);
        MaskSpec bad_row{MaskTarget::Cell, 1, 9, 0, 0};
        CHECK_THROWS_AS(materialize_graph_sample(db, g, vocab, 32, s.enc, bad_row, base),
                        InvalidMaskSpec);
        MaskSpec bad_col{MaskTarget::ColumnName, 1, std::nullopt, 9, 0};
        CHECK_THROWS_AS(materialize_graph_sample(db, g, vocab, 32, s.enc, bad_col, base),
                        InvalidMaskSpec);
        MaskSpec bad_table{MaskTarget::TableName, 9, std::nullopt, std::nullopt, 0};
        CHECK_THROWS_AS(materialize_graph_sample(db, g, vocab, 32, s.enc, bad_table, base),
                        InvalidMaskSpec);
    }
}

TEST_CASE("EvalCounts arithmetic") {
    EvalCounts c;
    c.hits = {3, 0, 5};
    c.totals = {4, 0, 10};
    auto acc = c.accuracies();
    CHECK(acc[0] == doctest::Approx(0.75));
    CHECK(acc[1] == 0.0);
    CHECK(acc[2] == doctest::Approx(0.5));
}

TEST_CASE("evaluate_split reports empty task pools") {
    RelationalDatabase db;
    db.name = "hollow";
    TableDef t;
    t.name = "t";
    t.columns = {{"a", Dtype::Text, true}};
    db.tables.push_back(t);
    db.rows.push_back({{Cell::make_null()}, {Cell::make_null()}});
    Vocabulary vocab = build_vocabulary({db});
    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.d_model = 8;
    mc.max_seq_len = 16;
    ModelState s = init_model(mc, 1);
    EvalOptions opts;
    opts.use_gnn = false;
    opts.max_seq_len = 16;
    CHECK_THROWS_AS(evaluate_split(s, {db}, vocab, Task::MissingValue, opts), EmptySplit);
    CHECK_NOTHROW(evaluate_split(s, {db}, vocab, Task::TableName, opts));
    CHECK_THROWS_AS(evaluate_split(s, {}, vocab, Task::TableName, opts), EmptySplit);
}

TEST_CASE("an untrained model scores at chance level") {
    SynthSpec spec;
    spec.n_databases = 4;
    spec.rows_lo = 4;
    spec.rows_hi = 8;
    spec.seed = 50;
    auto dbs = generate_synthetic_corpus(spec);
    Vocabulary vocab = build_vocabulary(dbs);

    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.d_model = 8;
    mc.max_seq_len = 64;
    ModelState s = init_model(mc, 123);

    // Bound: modal exact-target frequency plus 3σ plus slack. Anything above
    // it would mean the untrained model carries information it cannot have.
    std::map<std::vector<TokenId>, std::size_t> freq;
    std::size_t total = 0;
    for (const auto& db : dbs)
        for (const MaskSpec& m : enumerate_mask_targets(db)) {
            ++freq[encode_target(vocab, target_text(db, m))];
            ++total;
        }
    std::size_t modal = 0;
    for (const auto& [k, n] : freq) modal = std::max(modal, n);
    double p = static_cast<double>(modal) / static_cast<double>(total);
    double bound = p + 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(total)) + 0.05;

    EvalOptions opts;
    opts.use_gnn = false;
    EvalCounts counts = evaluate_counts(s, dbs, vocab, opts);
    CHECK(pooled_accuracy(counts) <= bound);
}

TEST_CASE("phase 2 freezes the encoder bitwise") {
    SynthSpec spec;
    spec.n_databases = 2;
    spec.tables_lo = 2;
    spec.tables_hi = 2;
    spec.rows_lo = 4;
    spec.rows_hi = 5;
    spec.seed = 60;
    auto dbs = generate_synthetic_corpus(spec);
    Vocabulary vocab = build_vocabulary(dbs);
    TrainConfig cfg = tiny_config();
    cfg.phase1_epochs = 1;
    cfg.phase2_epochs = 2;

    ModelState p1 = phase1_finetune(cfg, dbs, vocab);
    std::uint64_t enc_before = encoder_fingerprint(p1.enc);
    std::uint64_t dec_before = fnv1a_bytes(fnv1a_init(), p1.dec.Wout.value.v.data(),
                                           p1.dec.Wout.value.v.size() * sizeof(double));

    TrainLog log;
    ModelState p2 = phase2_train_gnn(cfg, dbs, dbs, vocab, std::move(p1), &log);
    CHECK(encoder_fingerprint(p2.enc) == enc_before);
    CHECK(p2.enc.frozen);
    REQUIRE(log.size() == 2);
    for (const EpochLog& el : log) {
        CHECK(el.phase == 2);
        CHECK(el.val_accuracy.has_value());
    }

    // Without a validation split the final epoch's state comes back, which
    // makes decoder movement observable: trainable by default, pinned under
    // freeze_decoder. The encoder stays frozen either way.
    SUBCASE("decoder trains by default") {
        ModelState q1 = phase1_finetune(cfg, dbs, vocab);
        ModelState q2 = phase2_train_gnn(cfg, dbs, {}, vocab, std::move(q1));
        std::uint64_t dec_after = fnv1a_bytes(fnv1a_init(), q2.dec.Wout.value.v.data(),
                                              q2.dec.Wout.value.v.size() * sizeof(double));
        CHECK(dec_after != dec_before);
        CHECK(encoder_fingerprint(q2.enc) == enc_before);
        CHECK_FALSE(q2.dec.frozen);
    }

    SUBCASE("freeze_decoder pins the decoder too") {
        ModelState q1 = phase1_finetune(cfg, dbs, vocab);
        TrainConfig frozen_cfg = cfg;
        frozen_cfg.freeze_decoder = true;
        ModelState q2 = phase2_train_gnn(frozen_cfg, dbs, {}, vocab, std::move(q1));
        std::uint64_t q_dec_after = fnv1a_bytes(fnv1a_init(), q2.dec.Wout.value.v.data(),
                                                q2.dec.Wout.value.v.size() * sizeof(double));
        CHECK(q_dec_after == dec_before);
        CHECK(q2.dec.frozen);
    }

    CHECK_THROWS_AS(phase2_train_gnn(cfg, dbs, dbs, vocab, std::nullopt), MissingPhase1State);
    CHECK_THROWS_AS(
        phase2_train_gnn(cfg, {}, dbs, vocab, phase1_finetune(cfg, dbs, vocab)),
        EmptyTrainSplit);
}

TEST_CASE("unbounded fanout reproduces full-graph training exactly") {
    SynthSpec spec;
    spec.n_databases = 2;
    spec.tables_lo = 2;
    spec.tables_hi = 2;
    spec.rows_lo = 4;
    spec.rows_hi = 5;
    spec.seed = 61;
    auto dbs = generate_synthetic_corpus(spec);
    Vocabulary vocab = build_vocabulary(dbs);
    TrainConfig cfg = tiny_config();
    cfg.phase1_epochs = 1;
    cfg.phase2_epochs = 2;

    TrainLog full_log, fan_log;
    ModelState full = phase2_train_gnn(cfg, dbs, dbs, vocab, phase1_finetune(cfg, dbs, vocab),
                                       &full_log);
    TrainConfig fan_cfg = cfg;
    fan_cfg.fanout = {kFullFanout, kFullFanout};
    ModelState fanned = phase2_train_gnn(fan_cfg, dbs, dbs, vocab,
                                         phase1_finetune(cfg, dbs, vocab), &fan_log);

    REQUIRE(full_log.size() == fan_log.size());
    for (std::size_t i = 0; i < full_log.size(); ++i)
        CHECK(full_log[i].train_loss == fan_log[i].train_loss);  // bitwise
    CHECK(support::state_fingerprint(full) == support::state_fingerprint(fanned));
}

TEST_CASE("phase 2 returns the best-validation checkpoint") {
    SynthSpec spec;
    spec.n_databases = 3;
    spec.tables_lo = 2;
    spec.tables_hi = 2;
    spec.rows_lo = 4;
    spec.rows_hi = 5;
    spec.seed = 62;
    auto dbs = generate_synthetic_corpus(spec);
    std::vector<RelationalDatabase> train(dbs.begin(), dbs.begin() + 2);
    std::vector<RelationalDatabase> val(dbs.begin() + 2, dbs.end());
    Vocabulary vocab = build_vocabulary(train);
    TrainConfig cfg = tiny_config();
    cfg.phase1_epochs = 2;
    cfg.phase2_epochs = 3;

    EvalOptions opts;
    opts.use_gnn = true;
    opts.max_seq_len = cfg.model.max_seq_len;

    ModelState p1 = phase1_finetune(cfg, train, vocab);
    // Pooled accuracy of the incoming state: the pre-training baseline that
    // epochs must beat to become the checkpoint.
    ModelState probe = deserialize_checkpoint(serialize_checkpoint(p1));
    double initial = pooled_accuracy(evaluate_counts(probe, val, vocab, opts));

    TrainLog log;
    ModelState best = phase2_train_gnn(cfg, train, val, vocab, std::move(p1), &log);
    double returned = pooled_accuracy(evaluate_counts(best, val, vocab, opts));

    // Reconstruct every candidate's pooled accuracy from the log.
    EvalCounts shape = evaluate_counts(best, val, vocab, opts);
    std::size_t grand_total = shape.totals[0] + shape.totals[1] + shape.totals[2];
    double best_seen = initial;
    for (const EpochLog& el : log) {
        REQUIRE(el.val_accuracy.has_value());
        std::size_t hits = 0;
        for (std::size_t task = 0; task < 3; ++task)
            hits += static_cast<std::size_t>(
                std::llround((*el.val_accuracy)[task] * static_cast<double>(shape.totals[task])));
        best_seen = std::max(best_seen, static_cast<double>(hits) /
                                            static_cast<double>(grand_total));
    }
    CHECK(returned == doctest::Approx(best_seen));
}

TEST_CASE("evaluate_counts is deterministic across calls") {
    SynthSpec spec;
    spec.n_databases = 2;
    spec.seed = 63;
    spec.rows_lo = 3;
    spec.rows_hi = 5;
    auto dbs = generate_synthetic_corpus(spec);
    Vocabulary vocab = build_vocabulary(dbs);
    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.d_model = 8;
    ModelState s = init_model(mc, 9);
    EvalOptions opts;
    for (bool gnn : {false, true}) {
        opts.use_gnn = gnn;
        EvalCounts a = evaluate_counts(s, dbs, vocab, opts);
        EvalCounts b = evaluate_counts(s, dbs, vocab, opts);
        CHECK(a.hits == b.hits);
        CHECK(a.totals == b.totals);
    }
}
