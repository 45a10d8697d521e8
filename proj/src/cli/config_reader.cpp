#include "opbounds/cli/config_reader.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "opbounds/error.hpp"

namespace opbounds::cli {

void config_error(const std::string& path, const std::string& message) {
    fail(ErrorCategory::config, path + ": " + message);
}

void at_path(const std::string& path, const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        if (e.category() == ErrorCategory::config) throw;
        throw Error(e.category(), path + ": " + e.what());
    }
}

Section::Section(const Json& node, std::string path, std::initializer_list<const char*> allowed,
                 std::filesystem::path base_dir)
    : node_(&node), path_(std::move(path)), base_(std::move(base_dir)) {
    if (!node.is_object()) config_error(path_, "expected an object");
    for (const auto& item : node.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return item.key() == k; });
        if (!known) config_error(path_ + "." + item.key(), "unknown key");
    }
}

bool Section::has(const char* key) const { return node_->contains(key); }

const Json& Section::raw(const char* key) const {
    if (!has(key)) config_error(key_path(key), "missing required key");
    return node_->at(key);
}

double Section::number(const char* key) const {
    const Json& v = raw(key);
    if (!v.is_number()) config_error(key_path(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) config_error(key_path(key), "expected a finite number");
    return d;
}

double Section::number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

std::optional<double> Section::optional_number(const char* key) const {
    if (!has(key) || raw(key).is_null()) return std::nullopt;
    return number(key);
}

long long Section::integer(const char* key) const {
    const Json& v = raw(key);
    if (!v.is_number_integer()) config_error(key_path(key), "expected an integer");
    return v.get<long long>();
}

long long Section::integer(const char* key, long long fallback) const { return has(key) ? integer(key) : fallback; }

std::string Section::string(const char* key) const {
    const Json& v = raw(key);
    if (!v.is_string()) config_error(key_path(key), "expected a string");
    return v.get<std::string>();
}

std::string Section::string(const char* key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
}

bool Section::boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_boolean()) config_error(key_path(key), "expected a boolean");
    return v.get<bool>();
}

std::vector<double> Section::numbers(const char* key) const {
    const Json& v = raw(key);
    if (!v.is_array()) config_error(key_path(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) config_error(key_path(key) + "[" + std::to_string(i) + "]", "expected a number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

Matrix Section::matrix(const char* key) const {
    const Json& v = raw(key);
    if (v.is_string()) {
        Matrix m;
        at_path(key_path(key), [&] { m = read_matrix_csv(resolve(v.get<std::string>())); });
        return m;
    }
    if (!v.is_array() || v.empty()) config_error(key_path(key), "expected a nonempty array of rows or a CSV path");
    const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
    if (cols == 0) config_error(key_path(key), "rows must be nonempty arrays");
    Matrix m(v.size(), cols);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string rp = key_path(key) + "[" + std::to_string(i) + "]";
        if (!v[i].is_array() || v[i].size() != cols) config_error(rp, "rows must have equal length");
        for (std::size_t j = 0; j < cols; ++j) {
            if (!v[i][j].is_number()) config_error(rp + "[" + std::to_string(j) + "]", "expected a number");
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i][j].get<double>();
        }
    }
    return m;
}

Vector Section::vector(const char* key) const {
    const auto v = numbers(key);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Section Section::child(const char* key, std::initializer_list<const char*> allowed) const {
    return Section(raw(key), key_path(key), allowed, base_);
}

std::vector<Section> Section::children(const char* key, std::initializer_list<const char*> allowed) const {
    const Json& v = raw(key);
    if (!v.is_array()) config_error(key_path(key), "expected an array of objects");
    std::vector<Section> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.emplace_back(v[i], key_path(key) + "[" + std::to_string(i) + "]", allowed, base_);
    return out;
}

std::filesystem::path Section::resolve(const std::string& file) const {
    const std::filesystem::path p(file);
    return p.is_absolute() || base_.empty() ? p : base_ / p;
}

Matrix read_matrix_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) fail(ErrorCategory::io, "cannot open matrix file " + file.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        ss.imbue(std::locale::classic());
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::istringstream cs(cell);
            cs.imbue(std::locale::classic());
            double v = 0.0;
            if (!(cs >> v)) fail(ErrorCategory::input, "bad number '" + cell + "' in " + file.string());
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            fail(ErrorCategory::input, "ragged rows in " + file.string());
        rows.push_back(std::move(row));
    }
    if (rows.empty()) fail(ErrorCategory::input, "matrix file " + file.string() + " is empty");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

}  // namespace opbounds::cli
