#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "opbounds/cli/experiment.hpp"
#include "opbounds/error.hpp"
#include "opbounds/version.hpp"

namespace {

int report_error(opbounds::ErrorCategory category, const std::string& message) {
    opbounds::cli::Json err;
    err["error"]["category"] = std::string(opbounds::category_name(category));
    err["error"]["message"] = message;
    err["error"]["exit_code"] = opbounds::category_exit_code(category);
    std::cerr << err.dump() << '\n';
    return opbounds::category_exit_code(category);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Operator-theoretic generalization bounds for vector-valued kernel models"};
    app.set_version_flag("--version", std::string(opbounds::kVersion));
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::optional<std::uint64_t> seed;
    std::string format = "json";
    bool wall_clock = false;
    for (const char* name : {"bound-compare", "sketch-regress", "deep-vvrkhs", "spectral-report"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON experiment config")->required();
        sub->add_option("--out", out_path, "result file")->required();
        sub->add_option("--seed", seed, "overrides the config seed");
        sub->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
        sub->add_flag("--wall-clock", wall_clock, "record elapsed seconds (breaks byte-identical output)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return opbounds::category_exit_code(opbounds::ErrorCategory::config);
    }

    try {
        opbounds::cli::RunOptions opts;
        opts.subcommand = opbounds::cli::parse_subcommand(app.get_subcommands().front()->get_name());
        opts.seed = seed;
        opts.wall_clock = wall_clock;
        opts.base_dir = std::filesystem::absolute(config_path).parent_path();

        std::ifstream in(config_path);
        if (!in) return report_error(opbounds::ErrorCategory::io, "cannot open config " + config_path);
        opbounds::cli::Json config;
        try {
            config = opbounds::cli::Json::parse(in);
        } catch (const std::exception& e) {
            return report_error(opbounds::ErrorCategory::config, std::string("config is not valid JSON: ") + e.what());
        }

        const auto result = opbounds::cli::run(config, opts);
        const std::string body =
            format == "csv" ? opbounds::cli::record_to_csv(result.record) : result.record.dump(2) + "\n";
        for (const auto& side : result.side_outputs) opbounds::cli::write_atomic(side.path, side.content);
        opbounds::cli::write_atomic(out_path, body);
        for (const auto& w : result.record.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << '\n';
        return 0;
    } catch (const opbounds::Error& e) {
        return report_error(e.category(), e.what());
    } catch (const std::exception& e) {
        return report_error(opbounds::ErrorCategory::numeric, std::string("internal error: ") + e.what());
    }
}
