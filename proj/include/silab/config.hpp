#ifndef SILAB_CONFIG_HPP
#define SILAB_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "silab/error.hpp"
#include "silab/rng.hpp"
#include "silab/text.hpp"

namespace silab {

// Flat typed key-value text:
//
//   # comment
//   [section]
//   key = value            # lists are comma-separated
//
// Keys are unique within a section. Every diagnostic names file, line and field.

struct ConfigEntry {
    std::string value;
    std::size_t line = 0;
};

class Config {
public:
    using Section = std::map<std::string, ConfigEntry>;

    static Config parse(const std::string& text, const std::string& origin = "config") {
        Config c;
        c.origin_ = origin;
        std::string section;
        std::size_t ln = 0;
        std::istringstream in(text);
        std::string raw;
        while (std::getline(in, raw)) {
            ++ln;
            std::string_view line = trim(raw);
            if (const auto hash = line.find('#'); hash != std::string_view::npos) line = trim(line.substr(0, hash));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw c.error(ln, "unterminated section header");
                section = std::string(trim(line.substr(1, line.size() - 2)));
                if (section.empty()) throw c.error(ln, "empty section name");
                c.sections_[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw c.error(ln, "expected 'key = value'");
            if (section.empty()) throw c.error(ln, "key outside of any [section]");
            const std::string key(trim(line.substr(0, eq)));
            if (key.empty()) throw c.error(ln, "empty key");
            auto& sec = c.sections_[section];
            if (sec.count(key)) {
                throw c.error(ln, "[" + section + "] " + key + ": duplicate key (first set on line " +
                                      std::to_string(sec[key].line) + ")");
            }
            sec[key] = {std::string(trim(line.substr(eq + 1))), ln};
        }
        return c;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw ConfigError(path.string() + ": cannot open config file");
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse(ss.str(), path.string());
    }

    const std::string& origin() const { return origin_; }
    bool has_section(const std::string& s) const { return sections_.count(s) > 0; }
    bool has(const std::string& s, const std::string& k) const {
        const auto it = sections_.find(s);
        return it != sections_.end() && it->second.count(k);
    }
    const std::map<std::string, Section>& sections() const { return sections_; }

    void set(const std::string& s, const std::string& k, const std::string& v) { sections_[s][k] = {v, 0}; }

    /// Rejects sections and keys outside `schema` (section -> allowed keys).
    void check_schema(const std::map<std::string, std::set<std::string>>& schema) const {
        for (const auto& [s, keys] : sections_) {
            const auto it = schema.find(s);
            if (it == schema.end()) {
                const std::size_t ln = keys.empty() ? 0 : keys.begin()->second.line;
                throw error(ln, "unknown section [" + s + "]");
            }
            for (const auto& [k, e] : keys)
                if (!it->second.count(k)) throw error(e.line, "[" + s + "] " + k + ": unknown key");
        }
    }

    std::optional<std::string> str(const std::string& s, const std::string& k) const {
        const ConfigEntry* e = find(s, k);
        if (!e) return std::nullopt;
        return e->value;
    }
    std::string str(const std::string& s, const std::string& k, const std::string& fallback) const {
        return str(s, k).value_or(fallback);
    }
    std::string require_str(const std::string& s, const std::string& k) const {
        const auto v = str(s, k);
        if (!v) throw ConfigError(origin_ + ": [" + s + "] " + k + ": required field is missing");
        return *v;
    }

    std::optional<double> real(const std::string& s, const std::string& k) const {
        const ConfigEntry* e = find(s, k);
        if (!e) return std::nullopt;
        const auto d = parse_double(e->value);
        if (!d) throw field_error(s, k, *e, "expected a number, found '" + e->value + "'");
        return d;
    }
    double real(const std::string& s, const std::string& k, double fallback) const {
        return real(s, k).value_or(fallback);
    }

    std::optional<std::uint64_t> integer(const std::string& s, const std::string& k) const {
        const ConfigEntry* e = find(s, k);
        if (!e) return std::nullopt;
        return to_uint(s, k, *e, e->value);
    }
    std::uint64_t integer(const std::string& s, const std::string& k, std::uint64_t fallback) const {
        return integer(s, k).value_or(fallback);
    }

    std::optional<bool> boolean(const std::string& s, const std::string& k) const {
        const ConfigEntry* e = find(s, k);
        if (!e) return std::nullopt;
        if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
        if (e->value == "false" || e->value == "0" || e->value == "no") return false;
        throw field_error(s, k, *e, "expected true or false, found '" + e->value + "'");
    }
    bool boolean(const std::string& s, const std::string& k, bool fallback) const {
        return boolean(s, k).value_or(fallback);
    }

    std::optional<std::vector<double>> reals(const std::string& s, const std::string& k) const {
        const ConfigEntry* e = find(s, k);
        if (!e) return std::nullopt;
        std::vector<double> out;
        for (const auto& item : list_items(s, k, *e)) {
            const auto d = parse_double(item);
            if (!d) throw field_error(s, k, *e, "list item '" + item + "' is not a number");
            out.push_back(*d);
        }
        return out;
    }

    std::optional<std::vector<std::uint64_t>> integers(const std::string& s, const std::string& k) const {
        const ConfigEntry* e = find(s, k);
        if (!e) return std::nullopt;
        std::vector<std::uint64_t> out;
        for (const auto& item : list_items(s, k, *e)) out.push_back(to_uint(s, k, *e, item));
        return out;
    }

    ConfigError field_error(const std::string& s, const std::string& k, const ConfigEntry& e,
                            const std::string& msg) const {
        return error(e.line, "[" + s + "] " + k + ": " + msg);
    }
    ConfigError field_error(const std::string& s, const std::string& k, const std::string& msg) const {
        const ConfigEntry* e = find(s, k);
        return error(e ? e->line : 0, "[" + s + "] " + k + ": " + msg);
    }

    /// Sections and keys in sorted order with normalized spacing; equal for any two
    /// texts that parse to the same entries.
    std::string canonical() const {
        std::string out;
        for (const auto& [s, keys] : sections_) {
            out += "[" + s + "]\n";
            for (const auto& [k, e] : keys) out += k + " = " + e.value + "\n";
        }
        return out;
    }

    std::uint64_t hash() const { return fnv1a64(canonical()); }

private:
    const ConfigEntry* find(const std::string& s, const std::string& k) const {
        const auto it = sections_.find(s);
        if (it == sections_.end()) return nullptr;
        const auto jt = it->second.find(k);
        return jt == it->second.end() ? nullptr : &jt->second;
    }

    ConfigError error(std::size_t line, const std::string& msg) const {
        return ConfigError(origin_ + (line ? ":" + std::to_string(line) : std::string()) + ": " + msg);
    }

    std::vector<std::string> list_items(const std::string& s, const std::string& k, const ConfigEntry& e) const {
        std::vector<std::string> out;
        for (const auto& part : split(e.value, ',')) {
            const std::string item(trim(part));
            if (item.empty()) throw field_error(s, k, e, "empty list item");
            out.push_back(item);
        }
        return out;
    }

    std::uint64_t to_uint(const std::string& s, const std::string& k, const ConfigEntry& e,
                          const std::string& v) const {
        if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
            throw field_error(s, k, e, "expected a non-negative integer, found '" + v + "'");
        }
        try {
            return std::stoull(v);
        } catch (const std::exception&) {
            throw field_error(s, k, e, "integer out of range: '" + v + "'");
        }
    }

    std::string origin_;
    std::map<std::string, Section> sections_;
};

} // namespace silab

#endif
