#pragma once

#include <filesystem>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "opbounds/linalg.hpp"

namespace opbounds::cli {

using Json = nlohmann::ordered_json;

/// Strict view of one JSON object. Unknown keys are rejected on construction and
/// every failure names the dotted config path.
class Section {
public:
    Section(const Json& node, std::string path, std::initializer_list<const char*> allowed,
            std::filesystem::path base_dir = {});

    [[nodiscard]] const std::string& path() const noexcept { return path_; }
    [[nodiscard]] bool has(const char* key) const;
    [[nodiscard]] std::string key_path(const char* key) const { return path_ + "." + key; }
    [[nodiscard]] const Json& raw(const char* key) const;

    [[nodiscard]] double number(const char* key, double fallback) const;
    [[nodiscard]] double number(const char* key) const;
    [[nodiscard]] std::optional<double> optional_number(const char* key) const;
    [[nodiscard]] long long integer(const char* key, long long fallback) const;
    [[nodiscard]] long long integer(const char* key) const;
    [[nodiscard]] std::string string(const char* key, const std::string& fallback) const;
    [[nodiscard]] std::string string(const char* key) const;
    [[nodiscard]] bool boolean(const char* key, bool fallback) const;
    [[nodiscard]] std::vector<double> numbers(const char* key) const;
    /// Nested arrays of rows, or a string naming a header-free CSV relative to the config.
    [[nodiscard]] Matrix matrix(const char* key) const;
    [[nodiscard]] Vector vector(const char* key) const;
    [[nodiscard]] Section child(const char* key, std::initializer_list<const char*> allowed) const;
    [[nodiscard]] std::vector<Section> children(const char* key, std::initializer_list<const char*> allowed) const;
    [[nodiscard]] const std::filesystem::path& base_dir() const noexcept { return base_; }
    [[nodiscard]] std::filesystem::path resolve(const std::string& file) const;

private:
    const Json* node_;
    std::string path_;
    std::filesystem::path base_;
};

[[noreturn]] void config_error(const std::string& path, const std::string& message);

/// Runs fn and prefixes any library error with the config path responsible for it.
void at_path(const std::string& path, const std::function<void()>& fn);

/// Header-free, comma separated, row-major.
Matrix read_matrix_csv(const std::filesystem::path& file);

}  // namespace opbounds::cli
