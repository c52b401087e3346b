#include "rabi/trace_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rabi/errors.hpp"

namespace rabi {

namespace {

constexpr double kAngularMHz = 2.0 * std::numbers::pi * 1e6;

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Field {
    std::string_view text;
    int column;  // 1-based
};

std::vector<Field> split_fields(std::string_view line) {
    std::vector<Field> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        if (i >= line.size()) break;
        const std::size_t b = i;
        while (i < line.size() && line[i] != ',' && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        out.push_back({line.substr(b, i - b), static_cast<int>(b) + 1});
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        if (i < line.size() && line[i] == ',') ++i;
    }
    return out;
}

bool parse_double(std::string_view s, double& x) {
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    return out;
}

void write_metadata(std::ostream& out, const Metadata& metadata) {
    for (const auto& [k, v] : metadata) out << "# " << k << '=' << v << '\n';
}

}  // namespace

TraceMode parse_trace_mode(std::string_view name) {
    if (name == "amplitude") return TraceMode::Amplitude;
    if (name == "intensity") return TraceMode::Intensity;
    throw ValidationError("mode", "must be amplitude or intensity");
}

TraceRecord ingest_trace(std::string_view text, TraceMode mode, std::size_t column) {
    if (column < 1) throw ValidationError("column", "must be >= 1");
    TraceRecord rec;
    bool seen_names = false;
    int line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t nl = text.find('\n', start);
        const std::string_view raw =
            text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        start = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;

        const std::string_view body = trim(raw);
        if (body.empty()) continue;
        if (body.front() == '#') {
            const std::string_view meta = trim(body.substr(1));
            const auto eq = meta.find('=');
            if (eq != std::string_view::npos) {
                rec.metadata[std::string(trim(meta.substr(0, eq)))] = std::string(trim(meta.substr(eq + 1)));
            }
            continue;
        }
        const auto fields = split_fields(raw);
        double probe = 0.0;
        if (!parse_double(fields.front().text, probe)) {
            // one line of column names is allowed before the data
            if (seen_names || !rec.times_ns.empty()) {
                throw ParseError("expected a number, got '" + std::string(fields.front().text) + "'",
                                 line_no, fields.front().column);
            }
            seen_names = true;
            continue;
        }
        if (fields.size() <= column) {
            throw ParseError("expected at least " + std::to_string(column + 1) + " columns", line_no,
                             static_cast<int>(raw.size()) + 1);
        }
        double t = 0.0;
        double v = 0.0;
        if (!parse_double(fields[0].text, t) || !std::isfinite(t)) {
            throw ParseError("time is not a finite number", line_no, fields[0].column);
        }
        if (!parse_double(fields[column].text, v) || !std::isfinite(v)) {
            throw ParseError("value is not a finite number", line_no, fields[column].column);
        }
        if (!rec.times_ns.empty() && !(t > rec.times_ns.back())) {
            throw NonMonotonicTime("line " + std::to_string(line_no) + ": time " +
                                   std::string(fields[0].text) + " does not exceed the previous time");
        }
        if (mode == TraceMode::Intensity) {
            if (v < 0.0) {
                throw ValidationError("value", "negative intensity on line " + std::to_string(line_no));
            }
            v = std::sqrt(v);
        }
        rec.times_ns.push_back(t);
        rec.values.push_back(v);
    }
    if (rec.times_ns.empty()) throw ParseError("no data rows", line_no, 1);
    return rec;
}

TraceRecord ingest_trace_file(const std::filesystem::path& path, TraceMode mode, std::size_t column) {
    return ingest_trace(read_text_file(path), mode, column);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

void write_csv(const std::filesystem::path& path, const Metadata& metadata,
               const std::vector<std::string>& columns, const std::vector<std::vector<double>>& rows) {
    auto out = open_output(path);
    write_metadata(out, metadata);
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << '\n';
    for (const auto& row : rows) {
        if (row.size() != columns.size()) throw InputError("csv row width does not match the header");
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
        out << '\n';
    }
    if (!out) throw InputError("write failed for " + path.string());
}

void write_sweep_matrix(const std::filesystem::path& path, const SweepResult& sweep,
                        const Metadata& metadata) {
    auto out = open_output(path);
    write_metadata(out, metadata);
    out << "amplitude_MHz\\detuning_MHz";
    for (double d : sweep.detuning) out << ',' << format_number(d / kAngularMHz);
    out << '\n';
    for (std::size_t r = 0; r < sweep.amplitude.size(); ++r) {
        out << format_number(sweep.amplitude[r] / kAngularMHz);
        for (std::size_t c = 0; c < sweep.detuning.size(); ++c) out << ',' << format_number(sweep.at(r, c));
        out << '\n';
    }
    if (!out) throw InputError("write failed for " + path.string());
}

void write_sweep_long(const std::filesystem::path& path, const SweepResult& sweep,
                      const Metadata& metadata) {
    std::vector<std::vector<double>> rows;
    rows.reserve(sweep.signal.size());
    for (std::size_t r = 0; r < sweep.amplitude.size(); ++r) {
        for (std::size_t c = 0; c < sweep.detuning.size(); ++c) {
            rows.push_back({sweep.detuning[c] / kAngularMHz, sweep.amplitude[r] / kAngularMHz, sweep.at(r, c)});
        }
    }
    write_csv(path, metadata, {"detuning_MHz", "amplitude_MHz", "signal"}, rows);
}

SweepResult read_sweep_matrix(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    SweepResult s;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto fields = split_fields(line);
        std::vector<double> values;
        for (std::size_t i = header ? 0 : 1; i < fields.size(); ++i) {
            double x = 0.0;
            if (!parse_double(fields[i].text, x) || !std::isfinite(x)) {
                throw ParseError("expected a number", line_no, fields[i].column);
            }
            values.push_back(x);
        }
        if (!header) {
            for (double d : values) s.detuning.push_back(d * kAngularMHz);
            header = true;
            continue;
        }
        if (values.size() != s.detuning.size() + 1) {
            throw ParseError("row width does not match the detuning axis", line_no, 1);
        }
        s.amplitude.push_back(values.front() * kAngularMHz);
        s.signal.insert(s.signal.end(), values.begin() + 1, values.end());
    }
    if (s.detuning.empty() || s.amplitude.empty()) throw ParseError("empty sweep matrix", line_no, 1);
    for (std::size_t i = 1; i < s.amplitude.size(); ++i) {
        if (!(s.amplitude[i] > s.amplitude[i - 1])) {
            throw ValidationError("amplitude", "sweep matrix rows must increase strictly");
        }
    }
    return s;
}

void write_report(const std::filesystem::path& path, const Metadata& entries) {
    auto out = open_output(path);
    for (const auto& [k, v] : entries) out << k << '=' << v << '\n';
    if (!out) throw InputError("write failed for " + path.string());
}

std::string file_digest(const std::filesystem::path& path) {
    const std::string bytes = read_text_file(path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace rabi
