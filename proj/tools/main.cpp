#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "relgraph/commands.hpp"

namespace {

int dispatch(CLI::App& app, relgraph::SynthSpec& synth_spec, std::string& gen_out,
             std::string& corpus_dir, std::string& db_filter, std::string& export_out,
             std::string& config_path, std::string& phase, std::string& variants_csv,
             std::size_t& runs_override, std::string& corpus_override,
             std::string& out_override) {
    using namespace relgraph;

    if (app.got_subcommand("gen-synthetic"))
        return cmd_gen_synthetic(synth_spec, gen_out, std::cout);
    if (app.got_subcommand("ingest-validate")) return cmd_ingest_validate(corpus_dir, std::cout);
    if (app.got_subcommand("build-graph"))
        return cmd_build_graph(corpus_dir, db_filter, std::cout);
    if (app.got_subcommand("export-graph"))
        return cmd_export_graph(corpus_dir, export_out, db_filter, std::cout);

    RunConfig cfg = load_run_config(config_path);
    if (!corpus_override.empty()) cfg.corpus_dir = corpus_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (!variants_csv.empty()) {
        cfg.variants.clear();
        std::string token;
        for (char c : variants_csv + ",") {
            if (c == ',') {
                if (!token.empty()) cfg.variants.push_back(token);
                token.clear();
            } else {
                token.push_back(c);
            }
        }
        for (const std::string& v : cfg.variants) variant_by_name(v);
    }
    if (runs_override > 0) cfg.train.n_runs = runs_override;

    if (app.got_subcommand("pretrain")) {
        int phase_num = 0;
        if (phase == "1")
            phase_num = 1;
        else if (phase == "2")
            phase_num = 2;
        else if (phase != "all")
            throw ConfigError("--phase must be 1, 2 or all");
        return cmd_pretrain(cfg, phase_num, std::cout);
    }
    if (app.got_subcommand("evaluate")) return cmd_evaluate(cfg, std::cout);
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relational representation learning over heterogeneous schema graphs"};
    app.require_subcommand(1);

    relgraph::SynthSpec synth_spec;
    std::string gen_out, corpus_dir, db_filter, export_out, config_path;
    std::string phase = "all", variants_csv, corpus_override, out_override;
    std::size_t runs_override = 0;

    CLI::App* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic relational corpus");
    gen->add_option("--databases", synth_spec.n_databases, "Number of databases")
        ->capture_default_str();
    gen->add_option("--seed", synth_spec.seed, "Generator seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Output corpus directory")->required();
    gen->add_option("--tables-lo", synth_spec.tables_lo, "Min tables per database")
        ->capture_default_str();
    gen->add_option("--tables-hi", synth_spec.tables_hi, "Max tables per database")
        ->capture_default_str();
    gen->add_option("--rows-lo", synth_spec.rows_lo, "Min rows per table")->capture_default_str();
    gen->add_option("--rows-hi", synth_spec.rows_hi, "Max rows per table")->capture_default_str();
    gen->add_option("--cols-lo", synth_spec.cols_lo, "Min data columns per table")
        ->capture_default_str();
    gen->add_option("--cols-hi", synth_spec.cols_hi, "Max data columns per table")
        ->capture_default_str();
    gen->add_option("--fk-density", synth_spec.fk_density,
                    "Probability that an eligible table gets a foreign key")
        ->capture_default_str();

    CLI::App* ingest =
        app.add_subcommand("ingest-validate", "Load a corpus and validate schema integrity");
    ingest->add_option("--corpus", corpus_dir, "Corpus directory")->required();

    CLI::App* build = app.add_subcommand("build-graph", "Build schema graphs and print stats");
    build->add_option("--corpus", corpus_dir, "Corpus directory")->required();
    build->add_option("--db", db_filter, "Only this database");

    CLI::App* exp =
        app.add_subcommand("export-graph", "Write schema graphs in edge-list text format");
    exp->add_option("--corpus", corpus_dir, "Corpus directory")->required();
    exp->add_option("--out", export_out, "Output directory")->required();
    exp->add_option("--db", db_filter, "Only this database");

    CLI::App* pre = app.add_subcommand("pretrain", "Run the two-phase pre-training");
    pre->add_option("--config", config_path, "Run configuration JSON")->required();
    pre->add_option("--phase", phase, "1, 2 or all")->capture_default_str();
    pre->add_option("--corpus", corpus_override, "Override corpus_dir");
    pre->add_option("--out", out_override, "Override out_dir");

    CLI::App* eval = app.add_subcommand("evaluate", "Score checkpoints and emit the task report");
    eval->add_option("--config", config_path, "Run configuration JSON")->required();
    eval->add_option("--variants", variants_csv, "Comma-separated variant names");
    eval->add_option("--runs", runs_override, "Override number of runs");
    eval->add_option("--corpus", corpus_override, "Override corpus_dir");
    eval->add_option("--out", out_override, "Override out_dir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message
        return 1;
    }

    try {
        return dispatch(app, synth_spec, gen_out, corpus_dir, db_filter, export_out, config_path,
                        phase, variants_csv, runs_override, corpus_override, out_override);
    } catch (const relgraph::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
