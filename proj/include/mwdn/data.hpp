#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mwdn/tensor.hpp"

namespace mwdn {

struct TimeSeries {
    Tensor1 values;
    std::optional<int> label;
};

struct LabeledDataset {
    std::vector<TimeSeries> train;
    std::vector<TimeSeries> test;
    std::size_t class_count = 0;
    std::size_t series_length = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& token, std::size_t line_no) {
    const std::string t = trim(token);
    double v = 0.0;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw std::runtime_error("line " + std::to_string(line_no) + ": invalid number '" +
                                 token + "'");
    return v;
}

inline std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, delim)) out.push_back(field);
    if (!line.empty() && line.back() == delim) out.push_back("");
    return out;
}

}  // namespace detail

namespace detail {

// Records with their original labels, before any remapping.
inline std::vector<TimeSeries> parse_ucr_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<TimeSeries> out;
    std::string line;
    char delim = ',';
    bool delim_set = false;
    std::size_t expected_fields = 0;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        if (!delim_set) {
            delim = stripped.find('\t') != std::string::npos ? '\t' : ',';
            delim_set = true;
        }
        std::vector<std::string> fields = split(stripped, delim);
        if (fields.size() < 2)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": need a label and at least one value");
        if (expected_fields == 0) expected_fields = fields.size();
        if (fields.size() != expected_fields)
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(expected_fields) + " fields, got " +
                                     std::to_string(fields.size()));
        const double raw_label = parse_double(fields[0], line_no);
        const double rounded = std::nearbyint(raw_label);
        if (std::fabs(raw_label - rounded) > 1e-9)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": label is not an integer: '" + fields[0] + "'");
        TimeSeries ts;
        ts.label = static_cast<int>(rounded);
        ts.values.reserve(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i)
            ts.values.push_back(parse_double(fields[i], line_no));
        out.push_back(std::move(ts));
    }
    if (out.empty()) throw std::runtime_error("empty file: '" + path + "'");
    return out;
}

// Remap labels to 0..C-1, ascending in the original values.
inline void remap_labels(std::vector<TimeSeries*>& records) {
    std::map<int, int> remap;
    for (const TimeSeries* ts : records) remap[*ts->label] = 0;
    int next = 0;
    for (auto& [orig, mapped] : remap) mapped = next++;
    for (TimeSeries* ts : records) ts->label = remap[*ts->label];
}

}  // namespace detail

// One record per line: class label then values. Delimiter auto-detected from
// the first line (tab wins over comma). Labels must be integers or
// integer-valued floats; they are remapped to a contiguous 0-based range in
// ascending order of the original values.
inline std::vector<TimeSeries> load_ucr(const std::string& path) {
    std::vector<TimeSeries> out = detail::parse_ucr_file(path);
    std::vector<TimeSeries*> refs;
    for (TimeSeries& ts : out) refs.push_back(&ts);
    detail::remap_labels(refs);
    return out;
}

// Two splits of one dataset remapped jointly, so a class missing from either
// file cannot skew the id assignment.
inline std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> load_ucr_pair(
    const std::string& train_path, const std::string& test_path) {
    std::vector<TimeSeries> train = detail::parse_ucr_file(train_path);
    std::vector<TimeSeries> test = detail::parse_ucr_file(test_path);
    std::vector<TimeSeries*> refs;
    for (TimeSeries& ts : train) refs.push_back(&ts);
    for (TimeSeries& ts : test) refs.push_back(&ts);
    detail::remap_labels(refs);
    return {std::move(train), std::move(test)};
}

// Inverse of load_ucr's record layout (comma-delimited); used for round-trip
// checks and fixture generation. Doubles print with max_digits10 precision.
inline std::string format_ucr(const std::vector<TimeSeries>& series) {
    std::string out;
    char buf[40];
    for (const TimeSeries& ts : series) {
        std::snprintf(buf, sizeof(buf), "%d", ts.label.value_or(0));
        out += buf;
        for (double v : ts.values) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

// (x - mean) / std, population std; a (near-)constant series maps to zeros.
inline TimeSeries znormalize(const TimeSeries& x) {
    TimeSeries out = x;
    if (x.values.empty()) return out;
    double mean = 0.0;
    for (double v : x.values) mean += v;
    mean /= static_cast<double>(x.values.size());
    double var = 0.0;
    for (double v : x.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.values.size());
    const double sd = std::sqrt(var);
    if (sd < 1e-12) {
        std::fill(out.values.begin(), out.values.end(), 0.0);
        return out;
    }
    for (double& v : out.values) v = (v - mean) / sd;
    return out;
}

// Repeat the final value until the length divides 2^n_levels, so every level
// pools an even length.
inline TimeSeries pad_to_pow2_blocks(const TimeSeries& x, std::size_t n_levels) {
    require(n_levels >= 1, "pad_to_pow2_blocks: n_levels must be >= 1");
    require(!x.values.empty(), "pad_to_pow2_blocks: empty series");
    TimeSeries out = x;
    const std::size_t block = std::size_t{1} << n_levels;
    while (out.values.size() % block != 0) out.values.push_back(out.values.back());
    return out;
}

struct ForecastSample {
    Tensor1 window;         // x_{t-T+1} .. x_t
    double target = 0.0;    // value at t + horizon
    Tensor1 target_window;  // the T values ending at the target index
};

struct ForecastDataset {
    std::vector<ForecastSample> samples;
    std::size_t window = 0;
    std::size_t horizon = 0;
    std::size_t stride = 0;
};

// Windows at offsets 0, s, 2s, ...; the target sits strictly in the future.
// Sample count: floor((L - T - h) / s) + 1.
inline ForecastDataset sliding_windows(const Tensor1& series, std::size_t window,
                                       std::size_t horizon, std::size_t stride) {
    require(window >= 1, "sliding_windows: window must be >= 1");
    require(stride >= 1, "sliding_windows: stride must be >= 1");
    if (horizon < 1)
        throw std::invalid_argument("sliding_windows: horizon must be >= 1 (target must be future)");
    if (series.size() < window + horizon)
        throw std::invalid_argument("sliding_windows: series too short for window + horizon");
    ForecastDataset out;
    out.window = window;
    out.horizon = horizon;
    out.stride = stride;
    for (std::size_t off = 0; off + window + horizon <= series.size(); off += stride) {
        ForecastSample s;
        s.window.assign(series.begin() + off, series.begin() + off + window);
        const std::size_t target_idx = off + window - 1 + horizon;
        s.target = series[target_idx];
        s.target_window.assign(series.begin() + (target_idx + 1 - window),
                               series.begin() + target_idx + 1);
        out.samples.push_back(std::move(s));
    }
    return out;
}

// Single-column CSV, optional "value" header.
inline Tensor1 load_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    Tensor1 out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = detail::trim(line);
        if (stripped.empty()) continue;
        if (line_no == 1 && stripped == "value") continue;
        out.push_back(detail::parse_double(stripped, line_no));
    }
    if (out.empty()) throw std::runtime_error("empty file: '" + path + "'");
    return out;
}

// Whole-file atomic write: temp file in the same directory, then rename.
inline void atomic_write_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, target);
}

inline void write_series_csv(const std::string& path, const Tensor1& values,
                             const std::string& header = "value") {
    std::string body;
    if (!header.empty()) body = header + "\n";
    char buf[40];
    for (double v : values) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", v);
        body += buf;
    }
    atomic_write_file(path, body);
}

}  // namespace mwdn
