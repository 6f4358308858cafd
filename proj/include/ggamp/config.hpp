#pragma once

// Plain-text key=value configuration used by ensemble specs and plan files.
//
//   # comment
//   kind = column_correlated
//   params = 0, 0.45, 0.9
//
// Keys are case-sensitive; surrounding whitespace is ignored; later keys
// override earlier ones.

#include "types.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace ggamp {

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::string_view text) {
        KeyValueConfig cfg;
        std::istringstream in{std::string(text)};
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto stripped = trim(line);
            if (stripped.empty()) continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw DomainError("config", "line " + std::to_string(lineno) + " has no '='");
            auto key = trim(stripped.substr(0, eq));
            if (key.empty()) throw DomainError("config", "line " + std::to_string(lineno) + " has an empty key");
            cfg.values_[key] = trim(stripped.substr(eq + 1));
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DomainError("config", "cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw DomainError(key, "missing required key");
        return it->second;
    }

    std::string get_or(const std::string& key, std::string fallback) const {
        return has(key) ? get(key) : std::move(fallback);
    }

    double get_double(const std::string& key) const { return to_double(key, get(key)); }
    double get_double_or(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    long long get_int(const std::string& key) const { return to_int(key, get(key)); }
    long long get_int_or(const std::string& key, long long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    std::vector<double> get_doubles(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split_list(get(key))) out.push_back(to_double(key, item));
        return out;
    }

    std::vector<long long> get_ints(const std::string& key) const {
        std::vector<long long> out;
        for (const auto& item : split_list(get(key))) out.push_back(to_int(key, item));
        return out;
    }

    std::vector<std::string> get_strings(const std::string& key) const { return split_list(get(key)); }

    std::string serialize() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
        return out.str();
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static std::string trim(std::string_view s) {
        const auto first = s.find_first_not_of(" \t\r\n");
        if (first == std::string_view::npos) return {};
        const auto last = s.find_last_not_of(" \t\r\n");
        return std::string(s.substr(first, last - first + 1));
    }

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::string item;
        std::istringstream in(s);
        while (std::getline(in, item, ',')) {
            auto t = trim(item);
            if (!t.empty()) out.push_back(std::move(t));
        }
        return out;
    }

    static double to_double(const std::string& key, const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw DomainError(key, "expected a real number, got '" + s + "'");
        }
    }

    static long long to_int(const std::string& key, const std::string& s) {
        long long v = 0;
        const auto* end = s.data() + s.size();
        auto [ptr, ec] = std::from_chars(s.data(), end, v);
        if (ec != std::errc{} || ptr != end) throw DomainError(key, "expected an integer, got '" + s + "'");
        return v;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace ggamp
