#pragma once

// Two-column trace files and CSV/report output.
//
// Trace files hold '#'-prefixed header lines (key=value metadata or free
// comments), an optional column-name line, then numeric rows separated by
// commas or whitespace. Written numbers carry 9 significant digits.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rabi/sweeps.hpp"

namespace rabi {

enum class TraceMode {
    Amplitude,  // values used as read
    Intensity,  // values are intensities; amplitudes are their square roots
};

struct TraceRecord {
    std::map<std::string, std::string> metadata;
    std::vector<double> times_ns;  // strictly increasing
    std::vector<double> values;

    std::size_t size() const { return times_ns.size(); }
};

/// `column` selects the value column (1 = the one after time). Throws
/// ParseError on malformed rows, NonMonotonicTime when times do not increase
/// strictly and ValidationError for negative intensities.
TraceRecord ingest_trace(std::string_view text, TraceMode mode = TraceMode::Amplitude,
                         std::size_t column = 1);
TraceRecord ingest_trace_file(const std::filesystem::path& path,
                              TraceMode mode = TraceMode::Amplitude, std::size_t column = 1);

TraceMode parse_trace_mode(std::string_view name);

/// Fixed 9-significant-digit rendering used in every CSV.
std::string format_number(double x);

using Metadata = std::vector<std::pair<std::string, std::string>>;

/// Writes '#' metadata lines, a column-name line and the rows.
void write_csv(const std::filesystem::path& path, const Metadata& metadata,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows);

/// Matrix form: the first line holds the detuning axis (MHz) after a corner
/// label, each following line an amplitude (MHz) and its row of signals.
void write_sweep_matrix(const std::filesystem::path& path, const SweepResult& sweep,
                        const Metadata& metadata);
/// Long form: one line per grid point (detuning_MHz, amplitude_MHz, signal).
void write_sweep_long(const std::filesystem::path& path, const SweepResult& sweep,
                      const Metadata& metadata);
/// Reads the matrix form back (axes converted to rad/s).
SweepResult read_sweep_matrix(const std::filesystem::path& path);

/// key=value lines.
void write_report(const std::filesystem::path& path, const Metadata& entries);

std::string read_text_file(const std::filesystem::path& path);

/// 64-bit FNV-1a digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace rabi
