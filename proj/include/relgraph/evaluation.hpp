#pragma once

#include <array>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "relgraph/errors.hpp"
#include "relgraph/model.hpp"
#include "relgraph/pretrain.hpp"
#include "relgraph/relational.hpp"
#include "relgraph/rng.hpp"
#include "relgraph/vocabulary.hpp"

namespace relgraph {

// --- variants ---------------------------------------------------------------

enum class EncoderSource { TextInit, TableTuned };

inline const char* encoder_source_name(EncoderSource s) {
    return s == EncoderSource::TextInit ? "text_init" : "table_tuned";
}

struct VariantSpec {
    std::string name;
    EncoderSource encoder_source = EncoderSource::TableTuned;
    EncoderSource decoder_source = EncoderSource::TableTuned;
    bool use_gnn = true;
};

// The four benchmark rows: the row-only baseline, the full model, and the
// two untuned-encoder ablations.
inline std::vector<VariantSpec> standard_variants() {
    return {
        {"baseline", EncoderSource::TableTuned, EncoderSource::TableTuned, false},
        {"ours", EncoderSource::TableTuned, EncoderSource::TableTuned, true},
        {"abl_text_enc", EncoderSource::TextInit, EncoderSource::TableTuned, true},
        {"abl_text_both", EncoderSource::TextInit, EncoderSource::TextInit, true},
    };
}

inline VariantSpec variant_by_name(const std::string& name) {
    for (const VariantSpec& v : standard_variants())
        if (v.name == name) return v;
    throw MissingVariant("unknown variant '" + name + "'");
}

// --- report -----------------------------------------------------------------

struct RunResult {
    std::uint64_t model_seed = 0;
    std::array<double, 3> accuracy{};  // per task, in [0,1]
};

struct VariantResult {
    VariantSpec spec;
    std::vector<RunResult> runs;
    std::array<double, 3> mean{};
};

struct TaskReport {
    std::vector<VariantResult> variants;
    std::uint64_t corpus_fingerprint = 0;
    std::uint64_t config_hash = 0;
    std::size_t n_runs = 0;

    const VariantResult* find(bool use_gnn, EncoderSource enc, EncoderSource dec) const {
        for (const VariantResult& v : variants)
            if (v.spec.use_gnn == use_gnn && v.spec.encoder_source == enc &&
                v.spec.decoder_source == dec)
                return &v;
        return nullptr;
    }
};

// Semantic configuration hash: every field that changes training behavior,
// no filesystem paths, so reports from different directories still compare.
inline std::uint64_t config_hash(const TrainConfig& cfg) {
    std::ostringstream s;
    s << cfg.phase1_epochs << '|' << cfg.phase2_epochs << '|' << cfg.batch_size << '|'
      << cfg.rates.cell_rate << '|' << cfg.rates.col_rate << '|' << cfg.rates.tab_rate << '|'
      << cfg.model.d_model << '|' << cfg.model.max_seq_len << '|' << cfg.model.n_enc << '|'
      << cfg.model.d_ff << '|' << cfg.model.gcn_layers << '|' << cfg.model.max_decode_len << '|';
    for (std::size_t f : cfg.fanout) s << f << ',';
    s << '|' << cfg.seeds.model << '|' << cfg.seeds.mask << '|' << cfg.seeds.sample << '|'
      << cfg.seeds.split << '|' << cfg.ratios.train << '|' << cfg.ratios.val << '|'
      << cfg.ratios.test << '|' << cfg.n_runs << '|' << cfg.stats_enabled << '|'
      << cfg.freeze_decoder << '|' << cfg.adam.lr << '|' << cfg.adam.beta1 << '|' << cfg.adam.beta2
      << '|' << cfg.adam.eps;
    std::string str = s.str();
    return fnv1a_str(fnv1a_init(), str);
}

// --- benchmark --------------------------------------------------------------

inline void copy_param_values(Param& dst, const Param& src) {
    dst.value = src.value;
    dst.m.zero();
    dst.v.zero();
}

// Assembles a variant's phase-2 starting state: encoder/decoder values from
// the phase-1 model or the untrained surrogate (same model seed), GCN always
// fresh, optimizer moments reset.
inline ModelState compose_start_state(const VariantSpec& variant, ModelState& fresh,
                                      ModelState* phase1) {
    if (!phase1 && (variant.encoder_source == EncoderSource::TableTuned ||
                    variant.decoder_source == EncoderSource::TableTuned))
        throw MissingPhase1State("variant '" + variant.name + "' needs the phase-1 model");
    ModelState start = fresh;  // fresh init carries the GCN and text_init weights
    if (variant.encoder_source == EncoderSource::TableTuned) {
        std::vector<const Param*> src;
        phase1->enc.for_each_param([&](Param& p) { src.push_back(&p); });
        std::size_t i = 0;
        start.enc.for_each_param([&](Param& p) { copy_param_values(p, *src[i++]); });
    }
    if (variant.decoder_source == EncoderSource::TableTuned) {
        std::vector<const Param*> src;
        phase1->dec.for_each_param([&](Param& p) { src.push_back(&p); });
        std::size_t i = 0;
        start.dec.for_each_param([&](Param& p) { copy_param_values(p, *src[i++]); });
    }
    start.step = 0;
    start.grads_ready = false;
    return start;
}

// Full benchmark: split the corpus by table, build the vocabulary on the
// training split only, then per run and per variant train as the variant
// prescribes and measure exact-match accuracy on the test split for the
// three tasks.
inline TaskReport run_benchmark(const std::vector<RelationalDatabase>& corpus,
                                const TrainConfig& cfg, const std::vector<VariantSpec>& variants,
                                TrainLog* log = nullptr) {
    validate_config(cfg);
    if (variants.empty()) throw MissingVariant("benchmark needs at least one variant");

    CorpusSplit split = split_corpus(corpus, cfg.ratios, cfg.seeds.split);
    std::vector<RelationalDatabase> train_dbs = project_split(corpus, split.train);
    std::vector<RelationalDatabase> val_dbs = project_split(corpus, split.val);
    std::vector<RelationalDatabase> test_dbs = project_split(corpus, split.test);
    Vocabulary vocab = build_vocabulary(train_dbs, 1);

    bool needs_phase1 = false;
    for (const VariantSpec& v : variants)
        needs_phase1 = needs_phase1 || v.encoder_source == EncoderSource::TableTuned ||
                       v.decoder_source == EncoderSource::TableTuned;

    TaskReport report;
    report.n_runs = cfg.n_runs;
    report.corpus_fingerprint = fingerprint_corpus(corpus);
    report.config_hash = config_hash(cfg);
    report.variants.resize(variants.size());
    for (std::size_t vi = 0; vi < variants.size(); ++vi) report.variants[vi].spec = variants[vi];

    for (std::size_t run = 0; run < cfg.n_runs; ++run) {
        TrainConfig run_cfg = cfg;
        run_cfg.seeds.model = cfg.seeds.model + run;

        ModelConfig mc = cfg.model;
        mc.vocab_size = vocab.size();
        ModelState fresh = init_model(mc, run_cfg.seeds.model);
        std::optional<ModelState> phase1;
        if (needs_phase1) phase1 = phase1_finetune(run_cfg, train_dbs, vocab, log);

        for (std::size_t vi = 0; vi < variants.size(); ++vi) {
            const VariantSpec& variant = variants[vi];
            ModelState start = compose_start_state(variant, fresh,
                                                   phase1 ? &*phase1 : nullptr);
            ModelState final_state =
                variant.use_gnn
                    ? phase2_train_gnn(run_cfg, train_dbs, val_dbs, vocab, std::move(start), log)
                    : std::move(start);

            EvalOptions opts;
            opts.use_gnn = variant.use_gnn;
            opts.max_seq_len = cfg.model.max_seq_len;
            opts.stats_enabled = cfg.stats_enabled;
            RunResult rr;
            rr.model_seed = run_cfg.seeds.model;
            rr.accuracy = evaluate_counts(final_state, test_dbs, vocab, opts).accuracies();
            report.variants[vi].runs.push_back(rr);
        }
    }

    for (VariantResult& v : report.variants) {
        for (const RunResult& r : v.runs)
            for (std::size_t i = 0; i < 3; ++i) v.mean[i] += r.accuracy[i];
        for (std::size_t i = 0; i < 3; ++i) v.mean[i] /= static_cast<double>(v.runs.size());
    }
    return report;
}

// --- directional comparison against published reference results --------------

// Reference accuracy table (percent) for the two reference corpora: the
// row-only baseline against the graph model, per task. Used only for
// direction-of-effect comparison, never as a pass/fail threshold.
struct ReferenceEntry {
    const char* corpus;
    std::array<double, 3> baseline;
    std::array<double, 3> ours;
};

inline const std::array<ReferenceEntry, 2>& reference_results() {
    static const std::array<ReferenceEntry, 2> table = {{
        {"wikiTables", {20.75, 66.88, 36.99}, {46.15, 83.91, 37.85}},
        {"gitTables", {21.65, 46.63, 59.71}, {52.63, 90.04, 52.63}},
    }};
    return table;
}

struct DirectionalFinding {
    Task task = Task::MissingValue;
    double baseline_accuracy = 0.0;  // measured, in [0,1]
    double gnn_accuracy = 0.0;
    double margin = 0.0;
    bool gnn_better = false;
    bool reference_agrees = false;  // our direction matches a reference corpus
    std::string note;
};

inline std::vector<DirectionalFinding> compare_to_reference(const TaskReport& report) {
    const VariantResult* baseline =
        report.find(false, EncoderSource::TableTuned, EncoderSource::TableTuned);
    const VariantResult* ours =
        report.find(true, EncoderSource::TableTuned, EncoderSource::TableTuned);
    if (!baseline) throw MissingVariant("report lacks the row-only baseline variant");
    if (!ours) throw MissingVariant("report lacks the GNN variant");

    std::vector<DirectionalFinding> findings;
    for (std::size_t ti = 0; ti < 3; ++ti) {
        DirectionalFinding f;
        f.task = static_cast<Task>(ti);
        f.baseline_accuracy = baseline->mean[ti];
        f.gnn_accuracy = ours->mean[ti];
        f.margin = f.gnn_accuracy - f.baseline_accuracy;
        f.gnn_better = f.margin > 0.0;

        bool any_agrees = false;
        bool all_same_direction = true;
        bool first_dir = reference_results()[0].ours[ti] > reference_results()[0].baseline[ti];
        std::ostringstream note;
        for (const ReferenceEntry& ref : reference_results()) {
            bool ref_dir = ref.ours[ti] > ref.baseline[ti];
            if (ref_dir != first_dir) all_same_direction = false;
            if (ref_dir == f.gnn_better) any_agrees = true;
        }
        f.reference_agrees = any_agrees;

        if (!all_same_direction) {
            note << "reference corpora disagree on this task (";
            for (std::size_t i = 0; i < reference_results().size(); ++i) {
                const ReferenceEntry& ref = reference_results()[i];
                if (i) note << "; ";
                note << ref.corpus << " " << ref.baseline[ti] << " -> " << ref.ours[ti];
            }
            note << "), either direction is consistent";
        } else {
            note << (f.gnn_better == first_dir ? "agrees with" : "disagrees with")
                 << " reference direction (";
            for (std::size_t i = 0; i < reference_results().size(); ++i) {
                const ReferenceEntry& ref = reference_results()[i];
                if (i) note << "; ";
                note << ref.corpus << " " << ref.baseline[ti] << " -> " << ref.ours[ti];
            }
            note << ")";
        }
        f.note = note.str();
        findings.push_back(std::move(f));
    }
    return findings;
}

// --- rendering ---------------------------------------------------------------

// Aligned text table: rows are variants, columns the three tasks, percent
// accuracy averaged over runs.
inline std::string report_to_text(const TaskReport& report) {
    std::ostringstream out;
    out << std::left << std::setw(16) << "variant";
    for (std::size_t t = 0; t < 3; ++t)
        out << std::right << std::setw(24) << task_name(static_cast<Task>(t));
    out << '\n';
    for (const VariantResult& v : report.variants) {
        out << std::left << std::setw(16) << v.spec.name;
        for (std::size_t t = 0; t < 3; ++t) {
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(2) << v.mean[t] * 100.0;
            out << std::right << std::setw(24) << cell.str();
        }
        out << '\n';
    }
    out << "runs=" << report.n_runs << " corpus_fingerprint=" << std::hex
        << report.corpus_fingerprint << " config_hash=" << report.config_hash << std::dec << '\n';
    return out.str();
}

}  // namespace relgraph
