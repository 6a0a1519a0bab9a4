#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cglmm/errors.hpp"

namespace cglmm {

namespace config_detail {
inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}
}  // namespace config_detail

// Flat `key = value` configuration: section-free, namespaced keys
// (model.family, fit.max_iter, ...), '#' comments. CLI flags overlay file
// values.
class Config {
  public:
    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config '" + path + "'");
        Config cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = config_detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
            const std::string key = config_detail::trim(line.substr(0, eq));
            const std::string value = config_detail::trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
            cfg.kv_[key] = value;
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::string get(const std::string& key, const std::string& fallback = "") const {
        const auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const {
        const auto it = kv_.find(key);
        if (it == kv_.end() || it->second.empty())
            throw ConfigError("missing required key '" + key + "'");
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end() || it->second.empty()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': cannot parse '" + it->second + "' as a number");
        }
    }

    long get_int(const std::string& key, long fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end() || it->second.empty()) return fallback;
        try {
            std::size_t pos = 0;
            const long v = std::stol(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': cannot parse '" + it->second +
                              "' as an integer");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end() || it->second.empty()) return fallback;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a boolean");
    }

    std::vector<std::string> get_list(const std::string& key) const {
        std::vector<std::string> out;
        const auto it = kv_.find(key);
        if (it == kv_.end()) return out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = config_detail::trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    // all keys under a prefix such as "params."
    std::vector<std::pair<std::string, std::string>> with_prefix(const std::string& prefix) const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& [k, v] : kv_)
            if (k.rfind(prefix, 0) == 0) out.emplace_back(k.substr(prefix.size()), v);
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return kv_; }

  private:
    std::map<std::string, std::string> kv_;
};

}  // namespace cglmm
