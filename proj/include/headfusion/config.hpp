#pragma once

#include <map>
#include <string>
#include <vector>

namespace headfusion {

/// Sectioned key-value text config:
///
///   # comment
///   [section]
///   key = value
///   other = 1.0 2.0 3.0
///
/// Keys are looked up as "section.key". Values keep their raw text; typed
/// getters parse on demand.
class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;

    void set(const std::string& key, const std::string& value);

private:
    std::map<std::string, std::string> values_;
};

}  // namespace headfusion
