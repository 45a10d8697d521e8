#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "opbounds/cli/config_reader.hpp"
#include "opbounds/deep_vvrkhs.hpp"

namespace opbounds::cli {

enum class Subcommand { bound_compare, sketch_regress, deep_vvrkhs, spectral_report };

std::string_view subcommand_name(Subcommand s);
Subcommand parse_subcommand(std::string_view name);

struct RunOptions {
    Subcommand subcommand = Subcommand::spectral_report;
    std::optional<std::uint64_t> seed;  // overrides the config's seed
    std::filesystem::path base_dir;     // for relative paths in the config
    bool wall_clock = false;
};

/// Files the run wants written next to the result, committed only on success.
struct SideOutput {
    std::filesystem::path path;
    std::string content;
};

struct RunResult {
    Json record;
    std::vector<SideOutput> side_outputs;
};

/// Validates the whole config before computing and returns the result record.
RunResult run(const Json& config, const RunOptions& opts);

/// Flattens the metrics into `path,value` rows.
std::string record_to_csv(const Json& record);

Json model_to_json(const LayeredModel& model);
LayeredModel model_from_json(const Json& node, const std::string& path);

/// Writes through a temporary file and rename so readers never see a partial file.
void write_atomic(const std::filesystem::path& file, const std::string& content);

}  // namespace opbounds::cli
