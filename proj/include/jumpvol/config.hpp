#pragma once

// Sectioned key = value scenario files. Every key remembers its line so
// validation errors can point at the offending line.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace jumpvol {

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string source, std::size_t line, const std::string& msg)
        : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : "") + ": " + msg),
          line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct ConfigEntry {
    std::string value;
    std::size_t line = 0;
};

class ConfigFile {
public:
    static ConfigFile parse(const std::string& text, std::string source = "<config>") {
        ConfigFile cf;
        cf.source_ = std::move(source);
        std::istringstream in(text);
        std::string raw, section;
        std::size_t line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            std::string line = trim(strip_comment(raw));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError(cf.source_, line_no, "unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty()) throw ConfigError(cf.source_, line_no, "empty section name");
                if (cf.sections_.count(section))
                    throw ConfigError(cf.source_, line_no, "duplicate section [" + section + "]");
                cf.sections_[section].line = line_no;
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError(cf.source_, line_no, "expected key = value");
            if (section.empty()) throw ConfigError(cf.source_, line_no, "key outside of any section");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) throw ConfigError(cf.source_, line_no, "empty key");
            auto& sec = cf.sections_[section];
            if (sec.keys.count(key))
                throw ConfigError(cf.source_, line_no, "duplicate key '" + key + "' in [" + section + "]");
            sec.keys[key] = {value, line_no};
        }
        return cf;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError(path, 0, "cannot open config file");
        std::ostringstream ss;
        ss << in.rdbuf();
        ConfigFile cf = parse(ss.str(), path);
        cf.text_ = ss.str();
        return cf;
    }

    const std::string& source() const { return source_; }
    const std::string& text() const { return text_; }
    void set_text(std::string t) { text_ = std::move(t); }

    bool has_section(const std::string& s) const { return sections_.count(s) > 0; }

    std::size_t section_line(const std::string& s) const {
        const auto it = sections_.find(s);
        return it == sections_.end() ? 0 : it->second.line;
    }

    const ConfigEntry* find(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        if (s == sections_.end()) return nullptr;
        const auto k = s->second.keys.find(key);
        return k == s->second.keys.end() ? nullptr : &k->second;
    }

    std::vector<std::string> keys(const std::string& section) const {
        std::vector<std::string> out;
        const auto s = sections_.find(section);
        if (s != sections_.end())
            for (const auto& [k, v] : s->second.keys) out.push_back(k);
        return out;
    }

    // Rejects keys of a section that are not in the allowed list.
    void restrict_keys(const std::string& section, const std::set<std::string>& allowed,
                       const std::vector<std::string>& prefixes = {}) const {
        const auto s = sections_.find(section);
        if (s == sections_.end()) return;
        for (const auto& [k, v] : s->second.keys) {
            if (allowed.count(k)) continue;
            bool ok = false;
            for (const auto& p : prefixes) ok = ok || k.rfind(p, 0) == 0;
            if (!ok) throw ConfigError(source_, v.line, "unknown key '" + k + "' in [" + section + "]");
        }
    }

    void require_section(const std::string& section, const std::string& why) const {
        if (!has_section(section))
            throw ConfigError(source_, 0, "missing section [" + section + "] required by " + why);
    }

    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const {
        const ConfigEntry* e = find(section, key);
        return e ? e->value : fallback;
    }

    std::string require_string(const std::string& section, const std::string& key) const {
        const ConfigEntry* e = find(section, key);
        if (!e)
            throw ConfigError(source_, section_line(section), "missing key '" + key + "' in [" + section + "]");
        return e->value;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        const ConfigEntry* e = find(section, key);
        return e ? to_double(*e, key) : fallback;
    }

    double require_double(const std::string& section, const std::string& key) const {
        require_string(section, key);
        return to_double(*find(section, key), key);
    }

    std::uint64_t get_uint(const std::string& section, const std::string& key, std::uint64_t fallback) const {
        const ConfigEntry* e = find(section, key);
        return e ? to_uint(*e, key) : fallback;
    }

    [[noreturn]] void fail(const ConfigEntry& e, const std::string& msg) const {
        throw ConfigError(source_, e.line, msg);
    }

    [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& msg) const {
        const ConfigEntry* e = find(section, key);
        throw ConfigError(source_, e ? e->line : section_line(section), msg);
    }

    double to_double(const ConfigEntry& e, const std::string& key) const {
        double v = 0.0;
        if (!parse_double(e.value, v)) fail(e, "key '" + key + "': expected a number, got '" + e.value + "'");
        return v;
    }

    std::uint64_t to_uint(const ConfigEntry& e, const std::string& key) const {
        std::uint64_t v = 0;
        const char* b = e.value.data();
        const char* end = b + e.value.size();
        const auto r = std::from_chars(b, end, v);
        if (r.ec != std::errc() || r.ptr != end)
            fail(e, "key '" + key + "': expected a nonnegative integer, got '" + e.value + "'");
        return v;
    }

    static bool parse_double(const std::string& s, double& out) {
        const char* b = s.data();
        const char* end = b + s.size();
        const auto r = std::from_chars(b, end, out);
        return r.ec == std::errc() && r.ptr == end;
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::string item;
        std::istringstream in(s);
        while (std::getline(in, item, sep)) out.push_back(trim(item));
        return out;
    }

    static std::vector<std::string> words(const std::string& s) {
        std::vector<std::string> out;
        std::istringstream in(s);
        std::string w;
        while (in >> w) out.push_back(w);
        return out;
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    static std::string strip_comment(const std::string& s) {
        const auto p = s.find_first_of("#;");
        return p == std::string::npos ? s : s.substr(0, p);
    }

    struct Section {
        std::size_t line = 0;
        std::map<std::string, ConfigEntry> keys;
    };

    std::string source_;
    std::string text_;
    std::map<std::string, Section> sections_;
};

}  // namespace jumpvol
