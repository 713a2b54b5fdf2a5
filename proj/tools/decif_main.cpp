#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "decif/config.hpp"
#include "decif/dataset_store.hpp"
#include "decif/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitStageFailed = 1;
constexpr int kExitConfigError = 2;

int exit_code_for(const decif::Error& e) {
    return e.code() == decif::ErrorCode::Config ? kExitConfigError : kExitStageFailed;
}

struct RunFlags {
    std::string config_path;
    std::string out_dir;
    long long seed = 0;
    std::string stages;
    std::string backend_kind;
    std::string mock_script;
    int max_in_flight = 0;
    bool general_purpose = false;
    bool no_timestamps = false;
};

decif::config::PipelineConfig load_config(const std::string& path) {
    if (path.empty()) return decif::config::from_json(nlohmann::json::object());
    return decif::config::load_file(path);
}

// flags > file > defaults
void apply_overrides(decif::config::PipelineConfig& cfg, const RunFlags& flags,
                     const CLI::App* cmd) {
    if (cmd->count("--out")) cfg.output_root = flags.out_dir;
    if (cmd->count("--seed")) cfg.seed = flags.seed;
    if (cmd->count("--backend")) cfg.backend_kind = flags.backend_kind;
    if (cmd->count("--mock-script")) {
        cfg.mock_script_path = flags.mock_script;
        cfg.backend_kind = "mock";
    }
    if (cmd->count("--max-in-flight")) cfg.backend.max_in_flight = flags.max_in_flight;
    if (flags.general_purpose) cfg.synthesis.general_purpose = true;
    if (flags.no_timestamps) cfg.no_timestamps = true;
}

int cmd_run(const RunFlags& flags, const CLI::App* cmd) {
    auto cfg = load_config(flags.config_path);
    apply_overrides(cfg, flags, cmd);
    const auto errors = decif::config::validate(cfg);
    if (!errors.empty()) {
        for (const auto& e : errors) std::cerr << "config error: " << e << "\n";
        return kExitConfigError;
    }
    const auto stages = decif::pipeline::parse_stage_list(flags.stages);
    auto backend = decif::pipeline::make_backend(cfg);
    decif::pipeline::Pipeline pipeline(cfg, backend);
    const auto manifest = pipeline.run(stages);
    std::cerr << "run complete; manifest at "
              << (pipeline.root() / decif::store::kManifestFile).string() << "\n";
    (void)manifest;
    return kExitOk;
}

int cmd_validate(const std::string& config_path) {
    auto cfg = load_config(config_path);
    const auto errors = decif::config::validate(cfg);
    if (!errors.empty()) {
        for (const auto& e : errors) std::cerr << "config error: " << e << "\n";
        return kExitConfigError;
    }
    std::cout << decif::config::to_json(cfg).dump(2) << "\n";
    return kExitOk;
}

int cmd_stats(const std::string& data_path) {
    const auto report = decif::store::compute_stats(data_path);
    std::cout << report.to_json().dump(2) << "\n";
    return kExitOk;
}

int cmd_export(const std::string& data_path, const std::string& format,
               const std::string& output) {
    const auto fmt = decif::store::export_format_from_name(format);
    const long n = decif::store::export_dataset(data_path, fmt, output);
    std::cerr << "exported " << n << " records to " << output << "\n";
    return kExitOk;
}

int cmd_pool(const std::string& output) {
    decif::constraints::ConstraintPool pool;
    if (output.empty()) {
        std::cout << pool.dump().dump(2) << "\n";
    } else {
        pool.dump_to_file(output);
        std::cerr << "constraint pool written to " << output << "\n";
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"decif: synthesize instruction-following training data from scratch"};
    app.require_subcommand(1);

    RunFlags flags;
    auto* run = app.add_subcommand("run", "execute pipeline stages");
    run->add_option("--config", flags.config_path, "JSON config file");
    run->add_option("--out", flags.out_dir, "output directory");
    run->add_option("--seed", flags.seed, "64-bit RNG seed");
    run->add_option("--stages", flags.stages,
                    "comma-separated subset of "
                    "domains,requests,scenarios,instructions,responses,verify");
    run->add_option("--backend", flags.backend_kind, "http or mock")
        ->check(CLI::IsMember({"http", "mock"}));
    run->add_option("--mock-script", flags.mock_script, "mock script JSON (implies mock backend)");
    run->add_option("--max-in-flight", flags.max_in_flight, "concurrent request cap")
        ->check(CLI::PositiveNumber);
    run->add_flag("--general-purpose", flags.general_purpose,
                  "drop response constraints (general-purpose data mode)");
    run->add_flag("--no-timestamps", flags.no_timestamps,
                  "write canonical timestamps for reproducibility");

    std::string validate_config_path;
    auto* validate = app.add_subcommand("validate", "check a config file and print defaults");
    validate->add_option("--config", validate_config_path, "JSON config file");

    std::string stats_data = "out/dataset.jsonl";
    auto* stats = app.add_subcommand("stats", "dataset statistics report");
    stats->add_option("--data", stats_data, "dataset.jsonl path");

    std::string export_data = "out/dataset.jsonl";
    std::string export_format = "pair";
    std::string export_output = "export.jsonl";
    auto* exp = app.add_subcommand("export", "export the dataset for SFT trainers");
    exp->add_option("--data", export_data, "dataset.jsonl path");
    exp->add_option("--format", export_format, "pair or messages")
        ->check(CLI::IsMember({"pair", "messages"}));
    exp->add_option("--output", export_output, "destination file");

    std::string pool_output;
    auto* pool = app.add_subcommand("pool", "dump the builtin constraint pool as JSON");
    pool->add_option("--output", pool_output, "destination file (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(flags, run);
        if (validate->parsed()) return cmd_validate(validate_config_path);
        if (stats->parsed()) return cmd_stats(stats_data);
        if (exp->parsed()) return cmd_export(export_data, export_format, export_output);
        if (pool->parsed()) return cmd_pool(pool_output);
    } catch (const decif::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStageFailed;
    }
    return kExitOk;
}
