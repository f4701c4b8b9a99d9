#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace romkit {

/// Line-oriented `key = value` file with `[section]` headers.
///
/// Grammar: blank lines and lines whose first non-blank character is `#` or
/// `;` are ignored; `[name]` opens a section; every other line must be
/// `key = value` inside a section. Surrounding whitespace is trimmed. A key
/// may appear once per section. Every (section, key) must be a known setting;
/// anything else is a ConfigError naming the line.
class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "<config>");
    static Config load(const std::string& path);
    /// All settings at their defaults.
    static Config defaults();

    bool has(const std::string& section, const std::string& key) const;
    const std::string& get(const std::string& section, const std::string& key) const;
    void set(const std::string& section, const std::string& key, const std::string& value);
    /// True when the value came from the file or an override rather than the defaults.
    bool explicitly_set(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key) const { return get(section, key); }
    double get_double(const std::string& section, const std::string& key) const;
    long long get_int(const std::string& section, const std::string& key) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    std::vector<double> get_doubles(const std::string& section, const std::string& key) const;
    std::vector<long long> get_ints(const std::string& section, const std::string& key) const;

    /// `section.key=value` lines for every setting in sorted order; restricted
    /// to `sections` when non-empty.
    std::string canonical(const std::vector<std::string>& sections = {}) const;

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
    std::map<std::string, std::map<std::string, bool>> explicit_;
};

/// SHA-256 of the canonical text, lowercase hex (32 bytes).
std::string fingerprint(const std::string& canonical_text);

/// Splits on `sep`, trimming each piece; empty input gives an empty list.
std::vector<std::string> split_list(const std::string& text, char sep);
std::string trim(const std::string& s);

}  // namespace romkit
