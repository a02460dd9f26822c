#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vbsim/spectra.hpp"

namespace vbsim {

/// Formats with 9 significant digits, enough to round-trip every tolerance
/// used by this toolkit.
inline std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline void write_spectrum_csv(std::ostream& os, const Spectrum& spec) {
    for (const auto& [key, value] : spec.meta) os << "# " << key << " = " << value << "\n";
    os << "frequency_mhz,signal\n";
    for (std::size_t i = 0; i < spec.freq_mhz.size(); ++i)
        os << format_g9(spec.freq_mhz[i]) << "," << format_g9(spec.signal[i]) << "\n";
}

namespace detail {

inline double parse_double(const std::string& token, std::size_t line_no) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(token, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("CSV parse error at line " + std::to_string(line_no) +
                                 ": bad number '" + token + "'");
    }
    if (pos != token.size())
        throw std::runtime_error("CSV parse error at line " + std::to_string(line_no) +
                                 ": trailing characters in '" + token + "'");
    return v;
}

}  // namespace detail

/// Reads a two-column CSV with optional `# key = value` comment lines and a
/// single header row. Errors carry the offending line number.
inline Spectrum read_spectrum_csv(std::istream& is) {
    Spectrum spec;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                auto trim = [](std::string s) {
                    const auto a = s.find_first_not_of(" \t");
                    const auto b = s.find_last_not_of(" \t");
                    return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
                };
                spec.meta.emplace_back(trim(line.substr(1, eq - 1)), trim(line.substr(eq + 1)));
            }
            continue;
        }
        if (!header_seen) {
            header_seen = true;  // header row: column names, not data
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("CSV parse error at line " + std::to_string(line_no) +
                                     ": expected two comma-separated columns");
        spec.freq_mhz.push_back(detail::parse_double(line.substr(0, comma), line_no));
        spec.signal.push_back(detail::parse_double(line.substr(comma + 1), line_no));
    }
    if (spec.freq_mhz.empty()) throw std::runtime_error("CSV parse error: no data rows");
    return spec;
}

inline Spectrum read_spectrum_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return read_spectrum_csv(in);
}

inline void write_spectrum_csv_file(const std::string& path, const Spectrum& spec) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_spectrum_csv(out, spec);
}

}  // namespace vbsim
