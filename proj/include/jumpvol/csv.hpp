#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "jumpvol/errors.hpp"

namespace jumpvol {

// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }

// 64-bit FNV-1a, used to stamp outputs with the configuration they came from.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& stamp, const std::vector<std::string>& header)
        : out_(path, std::ios::binary), width_(header.size()) {
        if (!out_) throw InputError("cannot write " + path);
        out_ << "# " << stamp << "\r\n";
        row(header);
    }

    void row(const std::vector<std::string>& fields) {
        if (fields.size() != width_) throw InputError("csv row width does not match header");
        for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << csv_field(fields[i]);
        out_ << "\r\n";
    }

private:
    std::ofstream out_;
    std::size_t width_;
};

}  // namespace jumpvol
