#include "romkit/config.hpp"

#include "romkit/error.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace romkit {

namespace {

struct Setting {
    const char* section;
    const char* key;
    const char* value;
};

// Every recognised setting with its default.
constexpr Setting kSchema[] = {
    {"pipeline", "benchmark", "diffusion-rb"},
    {"pipeline", "methods", "pod-galerkin(15), pod-galerkin(5), pod+gpr, pod+rbf"},
    {"pipeline", "seed", "0"},
    {"pipeline", "threads", "1"},
    {"pipeline", "field", "all"},
    {"pipeline", "fom_timing_repeats", "3"},
    {"pipeline", "online_repeats", "20"},
    {"sampling", "kind", "uniform"},
    {"sampling", "train", "20"},
    {"sampling", "test", "5"},
    {"sampling", "test_points", ""},
    {"sampling", "normal_center", ""},
    {"sampling", "normal_spread", ""},
    {"space", "lower", ""},
    {"space", "upper", ""},
    {"cavity", "cells", "64"},
    {"cavity", "dt", "0.005"},
    {"cavity", "final_time", "10"},
    {"cavity", "snapshots", "100"},
    {"cavity", "lid", "1"},
    {"diffusion", "interior", "31"},
    {"diffusion", "blocks_x", "2"},
    {"diffusion", "blocks_y", "2"},
    {"poisson", "rings", "18"},
    {"poisson", "quadrature", "5"},
    {"pod", "energy", "0.999999"},
    {"pod", "rank", "0"},
    {"pod", "center", "false"},
    {"dmd", "energy", "1"},
    {"dmd", "rank", "0"},
    {"rbf", "kernel", "gaussian"},
    {"rbf", "epsilon", "0"},
    {"rbf", "tail", "none"},
    {"gpr", "signal_variance", "1"},
    {"gpr", "length_scale", "0"},
    {"gpr", "noise", "0"},
    {"gpr", "prior", "zero"},
    {"ddnn", "hidden", "32, 32"},
    {"ddnn", "activation", "tanh"},
    {"ddnn", "epochs", "2000"},
    {"ddnn", "learning_rate", "0.001"},
    {"ddnn", "batch", "0"},
    {"pinn", "hidden", "20, 20"},
    {"pinn", "activation", "tanh"},
    {"pinn", "epochs", "2000"},
    {"pinn", "learning_rate", "0.001"},
    {"pinn", "interior", "64"},
    {"pinn", "boundary", "32"},
    {"pinn", "boundary_weight", "1"},
    {"galerkin", "basis", "pod"},
    {"galerkin", "tolerance", "1e-6"},
    {"galerkin", "max_size", "20"},
    {"user", "train_file", ""},
    {"user", "test_file", ""},
};

bool known(const std::string& section, const std::string& key) {
    return std::any_of(std::begin(kSchema), std::end(kSchema),
                       [&](const Setting& s) { return section == s.section && key == s.key; });
}

bool known_section(const std::string& section) {
    return std::any_of(std::begin(kSchema), std::end(kSchema), [&](const Setting& s) { return section == s.section; });
}

}  // namespace

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    if (trim(text).empty()) return out;
    std::stringstream ss(text);
    for (std::string piece; std::getline(ss, piece, sep);) out.push_back(trim(piece));
    return out;
}

Config Config::defaults() {
    Config c;
    for (const Setting& s : kSchema) {
        c.values_[s.section][s.key] = s.value;
        c.explicit_[s.section][s.key] = false;
    }
    return c;
}

Config Config::parse(const std::string& text, const std::string& origin) {
    Config c = defaults();
    std::stringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    std::map<std::string, std::map<std::string, bool>> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        const std::string t = trim(line);
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + "malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            if (!known_section(section)) throw ConfigError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        if (section.empty()) throw ConfigError(where + "setting outside of any section");
        const std::string key = trim(t.substr(0, eq));
        if (!known(section, key)) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
        if (seen[section][key]) throw ConfigError(where + "duplicate key '" + key + "' in [" + section + "]");
        seen[section][key] = true;
        c.set(section, key, trim(t.substr(eq + 1)));
    }
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

bool Config::has(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    return s != values_.end() && s->second.count(key) > 0;
}

const std::string& Config::get(const std::string& section, const std::string& key) const {
    if (!has(section, key)) throw ConfigError("unknown setting " + section + "." + key);
    return values_.at(section).at(key);
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    if (!known(section, key)) throw ConfigError("unknown setting " + section + "." + key);
    values_[section][key] = value;
    explicit_[section][key] = true;
}

bool Config::explicitly_set(const std::string& section, const std::string& key) const {
    auto s = explicit_.find(section);
    if (s == explicit_.end()) return false;
    auto k = s->second.find(key);
    return k != s->second.end() && k->second;
}

namespace {

double to_double(const std::string& text, const std::string& name) {
    double v = 0.0;
    const std::string t = trim(text);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || p != t.data() + t.size())
        throw ConfigError(name + ": expected a number, got '" + text + "'");
    return v;
}

long long to_int(const std::string& text, const std::string& name) {
    long long v = 0;
    const std::string t = trim(text);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || p != t.data() + t.size())
        throw ConfigError(name + ": expected an integer, got '" + text + "'");
    return v;
}

}  // namespace

double Config::get_double(const std::string& section, const std::string& key) const {
    return to_double(get(section, key), section + "." + key);
}

long long Config::get_int(const std::string& section, const std::string& key) const {
    return to_int(get(section, key), section + "." + key);
}

bool Config::get_bool(const std::string& section, const std::string& key) const {
    const std::string v = get(section, key);
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigError(section + "." + key + ": expected true or false, got '" + v + "'");
}

std::vector<double> Config::get_doubles(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    for (const std::string& p : split_list(get(section, key), ',')) out.push_back(to_double(p, section + "." + key));
    return out;
}

std::vector<long long> Config::get_ints(const std::string& section, const std::string& key) const {
    std::vector<long long> out;
    for (const std::string& p : split_list(get(section, key), ',')) out.push_back(to_int(p, section + "." + key));
    return out;
}

std::string Config::canonical(const std::vector<std::string>& sections) const {
    std::string out;
    for (const auto& [section, entries] : values_) {
        if (!sections.empty() && std::find(sections.begin(), sections.end(), section) == sections.end()) continue;
        for (const auto& [key, value] : entries) out += section + "." + key + "=" + value + "\n";
    }
    return out;
}

std::string fingerprint(const std::string& canonical_text) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(canonical_text.data()), canonical_text.size(), digest);
    std::string hex;
    char buf[3];
    for (unsigned char b : digest) {
        std::snprintf(buf, sizeof buf, "%02x", b);
        hex += buf;
    }
    return hex;
}

}  // namespace romkit
