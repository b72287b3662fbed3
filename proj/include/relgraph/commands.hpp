#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relgraph/checkpoint.hpp"
#include "relgraph/csv.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/evaluation.hpp"
#include "relgraph/graph.hpp"
#include "relgraph/pretrain.hpp"
#include "relgraph/storage.hpp"
#include "relgraph/synthetic.hpp"

namespace relgraph {

namespace fs = std::filesystem;

// Upper bound on worker parallelism, from RELGRAPH_THREADS. The current
// implementation executes serially (1 worker), which satisfies any cap.
inline std::size_t worker_cap() {
    const char* env = std::getenv("RELGRAPH_THREADS");
    if (!env) return 1;
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) return 1;
    return static_cast<std::size_t>(v);
}

// Guards an output directory against concurrent writers.
class DirLock {
  public:
    explicit DirLock(const fs::path& dir) : lock_(dir / ".lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (fs::exists(lock_))
            throw IoError("output dir '" + dir.string() + "' is locked by another process");
        std::ofstream f(lock_);
        if (!f) throw IoError("cannot create lock file in '" + dir.string() + "'");
        f << "locked\n";
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(lock_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

  private:
    fs::path lock_;
};

// --- run configuration -------------------------------------------------------

struct RunConfig {
    std::string corpus_dir;
    std::string out_dir;
    TrainConfig train;
    std::vector<std::string> variants = {"baseline", "ours"};
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, std::vector<std::string> allowed,
                           const std::string& ctx) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const std::string& key : allowed)
            if (it.key() == key) known = true;
        if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + ctx);
    }
}

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& into) {
    if (!obj.contains(key)) return;
    try {
        into = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value for '" + std::string(key) + "': " + e.what());
    }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using detail::read_field;
    using detail::reject_unknown;
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown(j,
                   {"corpus_dir", "out_dir", "phase1_epochs", "phase2_epochs", "batch_size",
                    "mask_rates", "model", "fanout", "seeds", "ratios", "n_runs", "variants",
                    "stats_enabled", "freeze_decoder", "adam"},
                   "config");
    RunConfig cfg;
    read_field(j, "corpus_dir", cfg.corpus_dir);
    read_field(j, "out_dir", cfg.out_dir);
    read_field(j, "phase1_epochs", cfg.train.phase1_epochs);
    read_field(j, "phase2_epochs", cfg.train.phase2_epochs);
    read_field(j, "batch_size", cfg.train.batch_size);
    if (j.contains("mask_rates")) {
        const auto& m = j.at("mask_rates");
        reject_unknown(m, {"cell", "column", "table"}, "mask_rates");
        read_field(m, "cell", cfg.train.rates.cell_rate);
        read_field(m, "column", cfg.train.rates.col_rate);
        read_field(m, "table", cfg.train.rates.tab_rate);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m, {"d_model", "max_seq_len", "n_enc", "d_ff", "gcn_layers",
                           "max_decode_len"},
                       "model");
        read_field(m, "d_model", cfg.train.model.d_model);
        read_field(m, "max_seq_len", cfg.train.model.max_seq_len);
        read_field(m, "n_enc", cfg.train.model.n_enc);
        read_field(m, "d_ff", cfg.train.model.d_ff);
        read_field(m, "gcn_layers", cfg.train.model.gcn_layers);
        read_field(m, "max_decode_len", cfg.train.model.max_decode_len);
    }
    read_field(j, "fanout", cfg.train.fanout);
    if (j.contains("seeds")) {
        const auto& m = j.at("seeds");
        reject_unknown(m, {"model", "mask", "sample", "split"}, "seeds");
        read_field(m, "model", cfg.train.seeds.model);
        read_field(m, "mask", cfg.train.seeds.mask);
        read_field(m, "sample", cfg.train.seeds.sample);
        read_field(m, "split", cfg.train.seeds.split);
    }
    if (j.contains("ratios")) {
        const auto& m = j.at("ratios");
        reject_unknown(m, {"train", "val", "test"}, "ratios");
        read_field(m, "train", cfg.train.ratios.train);
        read_field(m, "val", cfg.train.ratios.val);
        read_field(m, "test", cfg.train.ratios.test);
    }
    read_field(j, "n_runs", cfg.train.n_runs);
    read_field(j, "variants", cfg.variants);
    read_field(j, "stats_enabled", cfg.train.stats_enabled);
    read_field(j, "freeze_decoder", cfg.train.freeze_decoder);
    if (j.contains("adam")) {
        const auto& m = j.at("adam");
        reject_unknown(m, {"lr", "beta1", "beta2", "eps"}, "adam");
        read_field(m, "lr", cfg.train.adam.lr);
        read_field(m, "beta1", cfg.train.adam.beta1);
        read_field(m, "beta2", cfg.train.adam.beta2);
        read_field(m, "eps", cfg.train.adam.eps);
    }
    validate_config(cfg.train);
    for (const std::string& v : cfg.variants) variant_by_name(v);  // reject unknown names
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config '" + path + "': " + e.what());
    }
    return parse_run_config(j);
}

// --- commands ----------------------------------------------------------------

inline int cmd_gen_synthetic(const SynthSpec& spec, const std::string& out_dir,
                             std::ostream& out) {
    std::vector<RelationalDatabase> corpus = generate_synthetic_corpus(spec);
    fs::path root(out_dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (!fs::is_directory(root)) throw IoError("cannot create output dir '" + out_dir + "'");
    for (const RelationalDatabase& db : corpus) save_database(db, (root / db.name).string());
    out << "wrote " << corpus.size() << " databases to " << out_dir << "\n";
    out << "corpus_fingerprint=0x" << std::hex << fingerprint_corpus(corpus) << std::dec << "\n";
    return 0;
}

inline int cmd_ingest_validate(const std::string& corpus_dir, std::ostream& out) {
    std::vector<RelationalDatabase> corpus = load_corpus(corpus_dir);
    std::size_t tables = 0, rows = 0, fks = 0;
    for (const RelationalDatabase& db : corpus) {
        tables += db.tables.size();
        rows += db.total_rows();
        fks += db.foreign_keys.size();
    }
    out << "loaded " << corpus.size() << " databases: " << tables << " tables, " << rows
        << " rows, " << fks << " foreign keys\n";
    out << "corpus_fingerprint=0x" << std::hex << fingerprint_corpus(corpus) << std::dec << "\n";
    return 0;
}

inline int cmd_build_graph(const std::string& corpus_dir, const std::string& db_filter,
                           std::ostream& out) {
    std::vector<RelationalDatabase> corpus = load_corpus(corpus_dir);
    bool matched = false;
    for (const RelationalDatabase& db : corpus) {
        if (!db_filter.empty() && db.name != db_filter) continue;
        matched = true;
        SchemaGraph g = build_graph(db);
        std::map<std::string, std::size_t> by_type;
        for (std::size_t i = 0; i < g.edges.size(); i += 2)
            by_type[edge_type_name(g.edges[i].etype)] += 1;
        out << db.name << ": " << g.nodes.size() << " nodes, " << g.undirected_edge_count()
            << " undirected edges (";
        bool first = true;
        for (const auto& [name, count] : by_type) {
            if (!first) out << ", ";
            out << name << "=" << count;
            first = false;
        }
        out << ")\n";
    }
    if (!db_filter.empty() && !matched)
        throw IoError("database '" + db_filter + "' not found in corpus");
    return 0;
}

inline int cmd_export_graph(const std::string& corpus_dir, const std::string& out_dir,
                            const std::string& db_filter, std::ostream& out) {
    std::vector<RelationalDatabase> corpus = load_corpus(corpus_dir);
    fs::path root(out_dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (!fs::is_directory(root)) throw IoError("cannot create output dir '" + out_dir + "'");
    bool matched = false;
    for (const RelationalDatabase& db : corpus) {
        if (!db_filter.empty() && db.name != db_filter) continue;
        matched = true;
        SchemaGraph g = build_graph(db);
        std::string path = (root / (db.name + ".graph.txt")).string();
        write_text_file(path, export_graph(g, db));
        out << "wrote " << path << "\n";
    }
    if (!db_filter.empty() && !matched)
        throw IoError("database '" + db_filter + "' not found in corpus");
    return 0;
}

namespace detail {

struct PreparedCorpus {
    std::vector<RelationalDatabase> corpus;
    std::vector<RelationalDatabase> train_dbs, val_dbs, test_dbs;
    Vocabulary vocab;
};

inline PreparedCorpus prepare_corpus(const RunConfig& cfg) {
    PreparedCorpus p;
    p.corpus = load_corpus(cfg.corpus_dir);
    CorpusSplit split = split_corpus(p.corpus, cfg.train.ratios, cfg.train.seeds.split);
    p.train_dbs = project_split(p.corpus, split.train);
    p.val_dbs = project_split(p.corpus, split.val);
    p.test_dbs = project_split(p.corpus, split.test);
    p.vocab = build_vocabulary(p.train_dbs, 1);
    return p;
}

inline nlohmann::json epoch_log_json(std::size_t run, const std::string& variant,
                                     const EpochLog& el) {
    nlohmann::json j;
    j["run"] = run;
    j["variant"] = variant;
    j["phase"] = el.phase;
    j["epoch"] = el.epoch;
    j["train_loss"] = el.train_loss;
    if (el.val_accuracy) {
        nlohmann::json acc;
        for (std::size_t t = 0; t < 3; ++t)
            acc[task_name(static_cast<Task>(t))] = (*el.val_accuracy)[t];
        j["val_accuracy"] = acc;
    } else {
        j["val_accuracy"] = nullptr;
    }
    j["wall_time_s"] = el.wall_time_s;
    return j;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << "0x" << std::hex << v;
    return s.str();
}

}  // namespace detail

// Trains per the config and writes checkpoints plus an epoch log. Layout:
// run<r>/phase1.ckpt and run<r>/<variant>-phase2-best.ckpt per GNN variant,
// with convenience copies phase1.ckpt / phase2-best.ckpt for run 0. phase
// selects 1, 2 (resuming from existing phase-1 checkpoints), or 0 for both.
inline int cmd_pretrain(const RunConfig& cfg, int phase, std::ostream& out) {
    if (cfg.corpus_dir.empty() || cfg.out_dir.empty())
        throw ConfigError("pretrain needs corpus_dir and out_dir");
    DirLock lock(cfg.out_dir);
    detail::PreparedCorpus p = detail::prepare_corpus(cfg);
    fs::path root(cfg.out_dir);

    std::vector<VariantSpec> gnn_variants;
    bool needs_phase1 = false;
    for (const std::string& name : cfg.variants) {
        VariantSpec v = variant_by_name(name);
        if (v.use_gnn) gnn_variants.push_back(v);
        needs_phase1 = needs_phase1 || v.encoder_source == EncoderSource::TableTuned ||
                       v.decoder_source == EncoderSource::TableTuned;
    }

    std::vector<std::string> log_lines;
    for (std::size_t run = 0; run < cfg.train.n_runs; ++run) {
        TrainConfig run_cfg = cfg.train;
        run_cfg.seeds.model = cfg.train.seeds.model + run;
        fs::path run_dir = root / ("run" + std::to_string(run));
        std::error_code ec;
        fs::create_directories(run_dir, ec);

        ModelConfig mc = cfg.train.model;
        mc.vocab_size = p.vocab.size();
        ModelState fresh = init_model(mc, run_cfg.seeds.model);

        std::optional<ModelState> phase1;
        if (phase == 2) {
            if (needs_phase1) phase1 = load_checkpoint((run_dir / "phase1.ckpt").string());
        } else if (needs_phase1) {
            TrainLog log;
            phase1 = phase1_finetune(run_cfg, p.train_dbs, p.vocab, &log);
            save_checkpoint(*phase1, (run_dir / "phase1.ckpt").string());
            for (const EpochLog& el : log)
                log_lines.push_back(detail::epoch_log_json(run, "phase1", el).dump());
            out << "run " << run << ": phase 1 done (" << run_cfg.phase1_epochs << " epochs)\n";
        }

        if (phase == 1) continue;
        for (const VariantSpec& variant : gnn_variants) {
            TrainLog log;
            ModelState start =
                compose_start_state(variant, fresh, phase1 ? &*phase1 : nullptr);
            ModelState best = phase2_train_gnn(run_cfg, p.train_dbs, p.val_dbs, p.vocab,
                                               std::move(start), &log);
            save_checkpoint(best, (run_dir / (variant.name + "-phase2-best.ckpt")).string());
            for (const EpochLog& el : log)
                log_lines.push_back(detail::epoch_log_json(run, variant.name, el).dump());
            out << "run " << run << ": phase 2 done for variant '" << variant.name << "'\n";
        }
    }

    // Convenience copies matching the single-run layout.
    std::error_code ec;
    if (fs::exists(root / "run0" / "phase1.ckpt"))
        fs::copy_file(root / "run0" / "phase1.ckpt", root / "phase1.ckpt",
                      fs::copy_options::overwrite_existing, ec);
    for (const VariantSpec& variant : gnn_variants) {
        fs::path src = root / "run0" / (variant.name + "-phase2-best.ckpt");
        if (variant.name == "ours" && fs::exists(src))
            fs::copy_file(src, root / "phase2-best.ckpt", fs::copy_options::overwrite_existing,
                          ec);
    }

    std::string log_text;
    for (const std::string& line : log_lines) log_text += line + "\n";
    write_text_file((root / "train_log.jsonl").string(), log_text);
    out << "wrote " << (root / "train_log.jsonl").string() << "\n";
    return 0;
}

inline nlohmann::json report_to_json(const TaskReport& report,
                                     const std::vector<DirectionalFinding>* findings) {
    nlohmann::json j;
    j["config_hash"] = detail::hex64(report.config_hash);
    j["corpus_fingerprint"] = detail::hex64(report.corpus_fingerprint);
    j["n_runs"] = report.n_runs;
    j["variants"] = nlohmann::json::array();
    for (const VariantResult& v : report.variants) {
        nlohmann::json vj;
        vj["name"] = v.spec.name;
        vj["encoder_source"] = encoder_source_name(v.spec.encoder_source);
        vj["decoder_source"] = encoder_source_name(v.spec.decoder_source);
        vj["use_gnn"] = v.spec.use_gnn;
        nlohmann::json mean;
        for (std::size_t t = 0; t < 3; ++t) mean[task_name(static_cast<Task>(t))] = v.mean[t];
        vj["mean_accuracy"] = mean;
        vj["runs"] = nlohmann::json::array();
        for (const RunResult& r : v.runs) {
            nlohmann::json rj;
            rj["model_seed"] = r.model_seed;
            nlohmann::json acc;
            for (std::size_t t = 0; t < 3; ++t)
                acc[task_name(static_cast<Task>(t))] = r.accuracy[t];
            rj["accuracy"] = acc;
            vj["runs"].push_back(rj);
        }
        j["variants"].push_back(vj);
    }
    if (findings) {
        j["findings"] = nlohmann::json::array();
        for (const DirectionalFinding& f : *findings) {
            nlohmann::json fj;
            fj["task"] = task_name(f.task);
            fj["baseline_accuracy"] = f.baseline_accuracy;
            fj["gnn_accuracy"] = f.gnn_accuracy;
            fj["margin"] = f.margin;
            fj["gnn_better"] = f.gnn_better;
            fj["reference_agrees"] = f.reference_agrees;
            fj["note"] = f.note;
            j["findings"].push_back(fj);
        }
    }
    return j;
}

// Loads the checkpoints cmd_pretrain wrote and scores every requested
// variant on the test split, emitting report.json and report.txt.
inline int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
    if (cfg.corpus_dir.empty() || cfg.out_dir.empty())
        throw ConfigError("evaluate needs corpus_dir and out_dir");
    detail::PreparedCorpus p = detail::prepare_corpus(cfg);
    fs::path root(cfg.out_dir);

    TaskReport report;
    report.n_runs = cfg.train.n_runs;
    report.corpus_fingerprint = fingerprint_corpus(p.corpus);
    report.config_hash = config_hash(cfg.train);

    for (const std::string& name : cfg.variants) {
        VariantSpec variant = variant_by_name(name);
        VariantResult vr;
        vr.spec = variant;
        for (std::size_t run = 0; run < cfg.train.n_runs; ++run) {
            fs::path run_dir = root / ("run" + std::to_string(run));
            fs::path ckpt = variant.use_gnn ? run_dir / (variant.name + "-phase2-best.ckpt")
                                            : run_dir / "phase1.ckpt";
            if (!fs::exists(ckpt))
                throw MissingCheckpoint("missing checkpoint '" + ckpt.string() + "' for variant '" +
                                        variant.name + "'");
            ModelState state = load_checkpoint(ckpt.string());
            if (state.enc.vocab_size != static_cast<std::size_t>(p.vocab.size()))
                throw ConfigError("checkpoint vocabulary size " +
                                  std::to_string(state.enc.vocab_size) +
                                  " does not match corpus vocabulary " +
                                  std::to_string(p.vocab.size()));
            EvalOptions opts;
            opts.use_gnn = variant.use_gnn;
            opts.max_seq_len = cfg.train.model.max_seq_len;
            opts.stats_enabled = cfg.train.stats_enabled;
            RunResult rr;
            rr.model_seed = cfg.train.seeds.model + run;
            rr.accuracy = evaluate_counts(state, p.test_dbs, p.vocab, opts).accuracies();
            vr.runs.push_back(rr);
        }
        for (const RunResult& r : vr.runs)
            for (std::size_t t = 0; t < 3; ++t) vr.mean[t] += r.accuracy[t];
        for (std::size_t t = 0; t < 3; ++t) vr.mean[t] /= static_cast<double>(vr.runs.size());
        report.variants.push_back(std::move(vr));
    }

    std::optional<std::vector<DirectionalFinding>> findings;
    try {
        findings = compare_to_reference(report);
    } catch (const MissingVariant&) {
        // Report without the directional section when baseline or GNN rows
        // were not requested.
    }

    nlohmann::json j = report_to_json(report, findings ? &*findings : nullptr);
    write_text_file((root / "report.json").string(), j.dump(2) + "\n");
    std::string text = report_to_text(report);
    if (findings)
        for (const DirectionalFinding& f : *findings)
            text += std::string(task_name(f.task)) + ": " + f.note + "\n";
    write_text_file((root / "report.txt").string(), text);
    out << text;
    out << "wrote " << (root / "report.json").string() << "\n";
    return 0;
}

}  // namespace relgraph
