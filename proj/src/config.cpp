#include "rabi/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "rabi/errors.hpp"
#include "rabi/trace_io.hpp"

namespace rabi {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNs = 1e-9;
constexpr double kAngularMHz = kTwoPi * 1e6;

struct Entry {
    std::string value;
    int line = 0;  // 0 for --set overrides
    int value_column = 0;
    std::string origin;
};

bool key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
}

bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Value text starting at `pos` of `line`; strips a trailing comment and
// unquotes. Throws ParseError.
std::string parse_value(std::string_view line, std::size_t pos, int line_no) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    const int col = static_cast<int>(pos) + 1;
    if (pos >= line.size() || line[pos] == '\r') throw ParseError("missing value", line_no, col);
    if (line[pos] == '"') {
        std::string out;
        std::size_t i = pos + 1;
        for (;; ++i) {
            if (i >= line.size()) throw ParseError("unterminated string", line_no, col);
            const char c = line[i];
            if (c == '"') break;
            if (c == '\\') {
                if (i + 1 >= line.size() || (line[i + 1] != '"' && line[i + 1] != '\\')) {
                    throw ParseError("bad escape", line_no, static_cast<int>(i) + 1);
                }
                out += line[++i];
                continue;
            }
            out += c;
        }
        const std::string_view rest = trim(line.substr(i + 1));
        if (!rest.empty() && rest.front() != '#') {
            throw ParseError("text after closing quote", line_no, static_cast<int>(i) + 2);
        }
        return out;
    }
    std::size_t end = line.size();
    for (std::size_t i = pos + 1; i < line.size(); ++i) {
        if (line[i] == '#' && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
            end = i;
            break;
        }
    }
    return std::string(trim(line.substr(pos, end - pos)));
}

// Splits "key = value" at `line`; returns the key.
std::string parse_assignment(std::string_view line, int line_no, std::size_t& value_pos) {
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t key_begin = i;
    while (i < line.size() && key_char(line[i])) ++i;
    if (i == key_begin) throw ParseError("expected a key", line_no, static_cast<int>(i) + 1);
    const std::string key(line.substr(key_begin, i - key_begin));
    if (key.front() == '.' || key.back() == '.' || key.find("..") != std::string::npos) {
        throw ParseError("malformed key '" + key + "'", line_no, static_cast<int>(key_begin) + 1);
    }
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size() || line[i] != '=') {
        throw ParseError("expected '=' after key '" + key + "'", line_no, static_cast<int>(i) + 1);
    }
    value_pos = i + 1;
    return key;
}

std::map<std::string, Entry> lex(std::string_view text) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    std::map<std::string, Entry> entries;
    std::string section;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        const std::string_view raw =
            text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        ++line_no;
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

        const std::string_view body = trim(raw);
        if (body.empty() || body.front() == '#') continue;
        if (body.front() == '[') {
            const std::size_t col = raw.find('[') + 1;
            const auto close = body.find(']');
            if (close == std::string_view::npos) {
                throw ParseError("missing ']'", line_no, static_cast<int>(col + body.size()));
            }
            const std::string_view rest = trim(body.substr(close + 1));
            if (!rest.empty() && rest.front() != '#') {
                throw ParseError("text after section header", line_no,
                                 static_cast<int>(col + close + 1));
            }
            const std::string_view name = trim(body.substr(1, close - 1));
            if (name.empty() || !std::all_of(name.begin(), name.end(), key_char) ||
                name.front() == '.' || name.back() == '.') {
                throw ParseError("malformed section name", line_no, static_cast<int>(col) + 1);
            }
            section = std::string(name);
            continue;
        }
        std::size_t value_pos = 0;
        const std::string key = parse_assignment(raw, line_no, value_pos);
        const std::string full = section.empty() ? key : section + "." + key;
        std::size_t vcol = value_pos;
        while (vcol < raw.size() && (raw[vcol] == ' ' || raw[vcol] == '\t')) ++vcol;
        Entry e{parse_value(raw, value_pos, line_no), line_no, static_cast<int>(vcol) + 1,
                "line " + std::to_string(line_no)};
        if (!entries.emplace(full, e).second) {
            throw ParseError("duplicate key '" + full + "'", line_no,
                             static_cast<int>(raw.find_first_not_of(" \t")) + 1);
        }
    }
    return entries;
}

std::string render(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

// Typed access to the lexed entries; records provenance and which keys were used.
class Reader {
public:
    explicit Reader(std::map<std::string, Entry> entries) : entries_(std::move(entries)) {}

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    double number(const std::string& key, double fallback) {
        if (const auto v = optional_number(key)) return *v;
        note(key, render(fallback), "default");
        return fallback;
    }

    std::optional<double> optional_number(const std::string& key) {
        const Entry* e = take(key);
        if (!e) return std::nullopt;
        double x = 0.0;
        const char* b = e->value.data();
        const char* end = b + e->value.size();
        const auto r = std::from_chars(b, end, x);
        if (r.ec != std::errc() || r.ptr != end || !std::isfinite(x)) {
            throw ParseError(key + ": expected a finite number, got '" + e->value + "'", e->line,
                             e->value_column);
        }
        note(key, e->value, e->line == 0 ? "override" : "file");
        return x;
    }

    std::uint64_t integer(const std::string& key, std::uint64_t fallback) {
        const Entry* e = take(key);
        if (!e) {
            note(key, std::to_string(fallback), "default");
            return fallback;
        }
        std::uint64_t x = 0;
        const char* b = e->value.data();
        const char* end = b + e->value.size();
        const auto r = std::from_chars(b, end, x);
        if (r.ec != std::errc() || r.ptr != end) {
            throw ParseError(key + ": expected a non-negative integer, got '" + e->value + "'",
                             e->line, e->value_column);
        }
        note(key, e->value, e->line == 0 ? "override" : "file");
        return x;
    }

    bool flag(const std::string& key, bool fallback) {
        const Entry* e = take(key);
        if (!e) {
            note(key, fallback ? "true" : "false", "default");
            return fallback;
        }
        if (e->value != "true" && e->value != "false") {
            throw ParseError(key + ": expected true or false, got '" + e->value + "'", e->line,
                             e->value_column);
        }
        note(key, e->value, e->line == 0 ? "override" : "file");
        return e->value == "true";
    }

    std::string text(const std::string& key, const std::string& fallback) {
        if (const auto v = optional_text(key)) return *v;
        note(key, fallback, "default");
        return fallback;
    }

    std::optional<std::string> optional_text(const std::string& key) {
        const Entry* e = take(key);
        if (!e) return std::nullopt;
        note(key, e->value, e->line == 0 ? "override" : "file");
        return e->value;
    }

    void note(const std::string& key, const std::string& value, const char* source) {
        log_.push_back(key + " = " + value + " (" + source + ")");
    }

    void reject_unused() const {
        for (const auto& [key, e] : entries_) {
            if (!used_.count(key)) {
                throw ValidationError(key, "unknown key (" + e.origin + ")");
            }
        }
    }

    std::vector<std::string> log() const { return log_; }

private:
    const Entry* take(const std::string& key) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return nullptr;
        used_.insert(key);
        return &it->second;
    }

    std::map<std::string, Entry> entries_;
    std::set<std::string> used_;
    std::vector<std::string> log_;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = s.find(',', start);
        out.emplace_back(trim(std::string_view(s).substr(start, comma == std::string::npos ? std::string::npos
                                                                                           : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

void read_component(Reader& r, ComponentConfig& c) {
    const std::string p = "field." + c.name + ".";
    c.kind = r.text(p + "kind", c.kind);
    if (c.kind == "sampled") {
        c.file = r.optional_text(p + "file");
        c.mode = r.text(p + "mode", c.mode);
        c.offset_ns = r.number(p + "offset_ns", c.offset_ns);
    } else {
        c.width_ns = r.number(p + "width_ns", c.width_ns);
        c.center_ns = r.number(p + "center_ns", c.center_ns);
    }
    c.peak_MHz = r.optional_number(p + "peak_MHz");
    c.ratio_db = r.optional_number(p + "ratio_db");
    c.chirp_MHz = r.number(p + "chirp_MHz", c.chirp_MHz);
    c.phase_rad = r.number(p + "phase_rad", c.phase_rad);
}

void positive(double x, const char* key) {
    if (!(x > 0.0) || !std::isfinite(x)) throw ValidationError(key, "must be finite and > 0");
}

void non_negative(double x, const char* key) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError(key, "must be finite and >= 0");
}

void finite(double x, const char* key) {
    if (!std::isfinite(x)) throw ValidationError(key, "must be finite");
}

double t1_to_gamma1_MHz(double t1_ns) { return 1e3 / (kTwoPi * t1_ns); }

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    if (n == 1) {
        v[0] = a;
        return v;
    }
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return v;
}

}  // namespace

void ExperimentConfig::validate() const {
    const auto& e = emitter;
    if (e.T1_ns.has_value() == e.gamma1_MHz.has_value()) {
        throw ValidationError("emitter.T1_ns", "give exactly one of T1_ns and gamma1_MHz");
    }
    if (e.T1_ns) positive(*e.T1_ns, "emitter.T1_ns");
    if (e.gamma1_MHz) positive(*e.gamma1_MHz, "emitter.gamma1_MHz");
    const double g1 = e.T1_ns ? t1_to_gamma1_MHz(*e.T1_ns) : *e.gamma1_MHz;
    if (e.gamma2_MHz) {
        positive(*e.gamma2_MHz, "emitter.gamma2_MHz");
        if (*e.gamma2_MHz < 0.5 * g1 * (1.0 - 1e-12)) {
            throw ValidationError("emitter.gamma2_MHz", "must be >= gamma1 / 2");
        }
    }
    finite(e.detuning_MHz, "emitter.detuning_MHz");

    if (field.components.empty()) throw ValidationError("field.components", "list is empty");
    if (field.area_pi) positive(*field.area_pi, "field.area_pi");
    std::set<std::string> names;
    for (std::size_t i = 0; i < field.components.size(); ++i) {
        const auto& c = field.components[i];
        const std::string p = "field." + c.name + ".";
        if (c.name.empty() || !std::all_of(c.name.begin(), c.name.end(), name_char)) {
            throw ValidationError("field.components", "bad component name '" + c.name + "'");
        }
        if (!names.insert(c.name).second) {
            throw ValidationError("field.components", "duplicate component '" + c.name + "'");
        }
        if (c.kind != "gaussian" && c.kind != "rectangular" && c.kind != "sampled") {
            throw ValidationError(p + "kind", "must be gaussian, rectangular or sampled");
        }
        if (c.kind == "sampled") {
            if (!c.file || c.file->empty()) throw ValidationError(p + "file", "required for sampled shapes");
            if (c.mode != "amplitude" && c.mode != "intensity") {
                throw ValidationError(p + "mode", "must be amplitude or intensity");
            }
            finite(c.offset_ns, (p + "offset_ns").c_str());
        } else {
            positive(c.width_ns, (p + "width_ns").c_str());
            finite(c.center_ns, (p + "center_ns").c_str());
        }
        if (c.peak_MHz && c.ratio_db) {
            throw ValidationError(p + "peak_MHz", "give peak_MHz or ratio_db, not both");
        }
        if (i == 0 && c.ratio_db) {
            throw ValidationError(p + "ratio_db", "the first component is the ratio reference");
        }
        if (!c.peak_MHz && !c.ratio_db && !(i == 0 && field.area_pi)) {
            throw ValidationError(p + "peak_MHz", "needs peak_MHz or ratio_db");
        }
        if (c.peak_MHz) non_negative(*c.peak_MHz, (p + "peak_MHz").c_str());
        if (c.ratio_db) finite(*c.ratio_db, (p + "ratio_db").c_str());
        finite(c.chirp_MHz, (p + "chirp_MHz").c_str());
        finite(c.phase_rad, (p + "phase_rad").c_str());
    }

    const auto& d = detector;
    if (!(d.efficiency > 0.0 && d.efficiency <= 1.0)) {
        throw ValidationError("detector.efficiency", "must lie in (0, 1]");
    }
    non_negative(d.dead_time_ns, "detector.dead_time_ns");
    non_negative(d.jitter_ns, "detector.jitter_ns");
    positive(d.rep_period_ns, "detector.rep_period_ns");
    positive(d.bin_ns, "detector.bin_ns");
    positive(d.range_ns, "detector.range_ns");
    if (d.range_ns > d.rep_period_ns) {
        throw ValidationError("detector.range_ns", "must not exceed rep_period_ns");
    }
    non_negative(d.dark_rate_Hz, "detector.dark_rate_Hz");

    finite(trace.start_ns, "trace.start_ns");
    finite(trace.stop_ns, "trace.stop_ns");
    if (!(trace.stop_ns > trace.start_ns)) throw ValidationError("trace.stop_ns", "must exceed start_ns");
    positive(trace.dt_ns, "trace.dt_ns");
    if ((trace.stop_ns - trace.start_ns) / trace.dt_ns > 5e7) {
        throw ValidationError("trace.dt_ns", "output grid exceeds 5e7 points");
    }

    if (!(jitter.sigma_rel >= 0.0 && jitter.sigma_rel < 0.5)) {
        throw ValidationError("jitter.sigma_rel", "must lie in [0, 0.5)");
    }
    non_negative(jitter.edge_ps, "jitter.edge_ps");

    positive(scan.pulse_ns, "scan.pulse_ns");
    finite(scan.center_ns, "scan.center_ns");
    positive(scan.area_max_pi, "scan.area_max_pi");
    if (scan.points < 2) throw ValidationError("scan.points", "must be >= 2");
    if (scan.samples < 1) throw ValidationError("scan.samples", "must be >= 1");

    const auto& s = sweep;
    positive(s.pedestal_ns, "sweep.pedestal_ns");
    positive(s.main_ns, "sweep.main_ns");
    if (!(s.ratio_db <= 0.0) || !std::isfinite(s.ratio_db)) {
        throw ValidationError("sweep.ratio_db", "must be finite and <= 0 (pedestal weaker)");
    }
    finite(s.chirp_MHz, "sweep.chirp_MHz");
    finite(s.detuning_min_MHz, "sweep.detuning_min_MHz");
    finite(s.detuning_max_MHz, "sweep.detuning_max_MHz");
    if (s.detuning_points < 1) throw ValidationError("sweep.detuning_points", "must be >= 1");
    if (s.detuning_points > 1 && !(s.detuning_max_MHz > s.detuning_min_MHz)) {
        throw ValidationError("sweep.detuning_max_MHz", "must exceed detuning_min_MHz");
    }
    positive(s.area_max_pi, "sweep.area_max_pi");
    if (s.rows < 1) throw ValidationError("sweep.rows", "must be >= 1");
    if (!s.pedestal && !s.main && !s.leak) throw ValidationError("sweep.main", "every component is disabled");
    positive(s.leak_ns, "sweep.leak_ns");
    finite(s.leak_ratio_db, "sweep.leak_ratio_db");
    finite(s.leak_offset_MHz, "sweep.leak_offset_MHz");
    if (!(s.tail_lifetimes >= 5.0) || !std::isfinite(s.tail_lifetimes)) {
        throw ValidationError("sweep.tail_lifetimes", "must be finite and >= 5");
    }

    if (fit.model != "population" && fit.model != "first-detected") {
        throw ValidationError("fit.model", "must be population or first-detected");
    }
    positive(fit.tail_lifetimes, "fit.tail_lifetimes");
    if (fit.max_iterations < 1) throw ValidationError("fit.max_iterations", "must be >= 1");

    if (output_dir.empty()) throw ValidationError("output.dir", "must not be empty");
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
    return emitter == o.emitter && field == o.field && detector == o.detector && trace == o.trace &&
           jitter == o.jitter && scan == o.scan && sweep == o.sweep && fit == o.fit &&
           seed == o.seed && output_dir == o.output_dir;
}

ExperimentConfig parse_config(std::string_view text, std::span<const std::string> overrides) {
    auto entries = lex(text);
    for (std::size_t k = 0; k < overrides.size(); ++k) {
        const std::string& o = overrides[k];
        const std::string origin = "override '" + o + "'";
        try {
            std::size_t value_pos = 0;
            const std::string key = parse_assignment(o, 0, value_pos);
            entries[key] = Entry{parse_value(o, value_pos, 0), 0, static_cast<int>(value_pos) + 1, origin};
        } catch (const ParseError& e) {
            throw ParseError(origin + ": " + e.what(), 0, e.column());
        }
    }

    Reader r(std::move(entries));
    ExperimentConfig c;

    auto& e = c.emitter;
    e.T1_ns = r.optional_number("emitter.T1_ns");
    e.gamma1_MHz = r.optional_number("emitter.gamma1_MHz");
    if (!e.T1_ns && !e.gamma1_MHz) {
        e.T1_ns = 9.5;
        r.note("emitter.T1_ns", "9.5", "default");
    }
    e.gamma2_MHz = r.optional_number("emitter.gamma2_MHz");
    if (!e.gamma2_MHz) r.note("emitter.gamma2_MHz", "gamma1/2", "default");
    e.detuning_MHz = r.number("emitter.detuning_MHz", e.detuning_MHz);

    std::vector<std::string> names{"main"};
    if (const auto list = r.optional_text("field.components")) {
        names = split_list(*list);
    } else {
        r.note("field.components", "main", "default");
    }
    for (const auto& n : names) {
        ComponentConfig comp;
        comp.name = n;
        if (!n.empty() && std::all_of(n.begin(), n.end(), name_char)) read_component(r, comp);
        c.field.components.push_back(std::move(comp));
    }
    c.field.area_pi = r.optional_number("field.area_pi");
    const auto& first = c.field.components.front();
    if (!c.field.area_pi && !first.peak_MHz && !first.ratio_db) {
        c.field.area_pi = 5.7;
        r.note("field.area_pi", "5.7", "default");
    }

    auto& d = c.detector;
    d.efficiency = r.number("detector.efficiency", d.efficiency);
    d.dead_time_ns = r.number("detector.dead_time_ns", d.dead_time_ns);
    d.jitter_ns = r.number("detector.jitter_ns", d.jitter_ns);
    d.rep_period_ns = r.number("detector.rep_period_ns", d.rep_period_ns);
    d.bin_ns = r.number("detector.bin_ns", d.bin_ns);
    d.range_ns = r.number("detector.range_ns", d.range_ns);
    d.dark_rate_Hz = r.number("detector.dark_rate_Hz", d.dark_rate_Hz);

    auto& t = c.trace;
    t.start_ns = r.number("trace.start_ns", t.start_ns);
    t.stop_ns = r.number("trace.stop_ns", t.stop_ns);
    t.dt_ns = r.number("trace.dt_ns", t.dt_ns);
    t.pulses = r.integer("trace.pulses", t.pulses);

    c.jitter.sigma_rel = r.number("jitter.sigma_rel", c.jitter.sigma_rel);
    c.jitter.edge_ps = r.number("jitter.edge_ps", c.jitter.edge_ps);

    auto& sc = c.scan;
    sc.pulse_ns = r.number("scan.pulse_ns", sc.pulse_ns);
    sc.center_ns = r.number("scan.center_ns", sc.center_ns);
    sc.area_max_pi = r.number("scan.area_max_pi", sc.area_max_pi);
    sc.points = r.integer("scan.points", sc.points);
    sc.samples = r.integer("scan.samples", sc.samples);
    sc.stratified = r.flag("scan.stratified", sc.stratified);

    auto& s = c.sweep;
    s.pedestal_ns = r.number("sweep.pedestal_ns", s.pedestal_ns);
    s.main_ns = r.number("sweep.main_ns", s.main_ns);
    s.ratio_db = r.number("sweep.ratio_db", s.ratio_db);
    s.chirp_MHz = r.number("sweep.chirp_MHz", s.chirp_MHz);
    s.detuning_min_MHz = r.number("sweep.detuning_min_MHz", s.detuning_min_MHz);
    s.detuning_max_MHz = r.number("sweep.detuning_max_MHz", s.detuning_max_MHz);
    s.detuning_points = r.integer("sweep.detuning_points", s.detuning_points);
    s.area_max_pi = r.number("sweep.area_max_pi", s.area_max_pi);
    s.rows = r.integer("sweep.rows", s.rows);
    s.pedestal = r.flag("sweep.pedestal", s.pedestal);
    s.main = r.flag("sweep.main", s.main);
    s.leak = r.flag("sweep.leak", s.leak);
    s.leak_ns = r.number("sweep.leak_ns", s.leak_ns);
    s.leak_ratio_db = r.number("sweep.leak_ratio_db", s.leak_ratio_db);
    s.leak_offset_MHz = r.number("sweep.leak_offset_MHz", s.leak_offset_MHz);
    s.tail_lifetimes = r.number("sweep.tail_lifetimes", s.tail_lifetimes);

    c.fit.model = r.text("fit.model", c.fit.model);
    c.fit.tail_lifetimes = r.number("fit.tail_lifetimes", c.fit.tail_lifetimes);
    c.fit.max_iterations = r.integer("fit.max_iterations", c.fit.max_iterations);

    c.seed = r.integer("run.seed", c.seed);
    c.output_dir = r.text("output.dir", c.output_dir);

    r.reject_unused();
    c.provenance = r.log();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
    ExperimentConfig c = parse_config(read_text_file(path), overrides);
    const auto base = std::filesystem::absolute(path).parent_path();
    for (auto& comp : c.field.components) {
        if (comp.file && std::filesystem::path(*comp.file).is_relative()) {
            comp.file = (base / *comp.file).lexically_normal().string();
        }
    }
    return c;
}

std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream o;
    auto num = [&](const char* key, double x) { o << key << " = " << render(x) << '\n'; };
    auto integer = [&](const char* key, std::uint64_t x) { o << key << " = " << x << '\n'; };
    auto flag = [&](const char* key, bool x) { o << key << " = " << (x ? "true" : "false") << '\n'; };

    o << "[emitter]\n";
    if (c.emitter.T1_ns) num("T1_ns", *c.emitter.T1_ns);
    if (c.emitter.gamma1_MHz) num("gamma1_MHz", *c.emitter.gamma1_MHz);
    if (c.emitter.gamma2_MHz) num("gamma2_MHz", *c.emitter.gamma2_MHz);
    num("detuning_MHz", c.emitter.detuning_MHz);

    o << "\n[field]\ncomponents = ";
    for (std::size_t i = 0; i < c.field.components.size(); ++i) {
        o << (i ? ", " : "") << c.field.components[i].name;
    }
    o << '\n';
    if (c.field.area_pi) num("area_pi", *c.field.area_pi);
    for (const auto& comp : c.field.components) {
        o << "\n[field." << comp.name << "]\n";
        o << "kind = " << comp.kind << '\n';
        if (comp.kind == "sampled") {
            if (comp.file) o << "file = " << quote(*comp.file) << '\n';
            o << "mode = " << comp.mode << '\n';
            num("offset_ns", comp.offset_ns);
        } else {
            num("width_ns", comp.width_ns);
            num("center_ns", comp.center_ns);
        }
        if (comp.peak_MHz) num("peak_MHz", *comp.peak_MHz);
        if (comp.ratio_db) num("ratio_db", *comp.ratio_db);
        num("chirp_MHz", comp.chirp_MHz);
        num("phase_rad", comp.phase_rad);
    }

    const auto& d = c.detector;
    o << "\n[detector]\n";
    num("efficiency", d.efficiency);
    num("dead_time_ns", d.dead_time_ns);
    num("jitter_ns", d.jitter_ns);
    num("rep_period_ns", d.rep_period_ns);
    num("bin_ns", d.bin_ns);
    num("range_ns", d.range_ns);
    num("dark_rate_Hz", d.dark_rate_Hz);

    o << "\n[trace]\n";
    num("start_ns", c.trace.start_ns);
    num("stop_ns", c.trace.stop_ns);
    num("dt_ns", c.trace.dt_ns);
    integer("pulses", c.trace.pulses);

    o << "\n[jitter]\n";
    num("sigma_rel", c.jitter.sigma_rel);
    num("edge_ps", c.jitter.edge_ps);

    o << "\n[scan]\n";
    num("pulse_ns", c.scan.pulse_ns);
    num("center_ns", c.scan.center_ns);
    num("area_max_pi", c.scan.area_max_pi);
    integer("points", c.scan.points);
    integer("samples", c.scan.samples);
    flag("stratified", c.scan.stratified);

    const auto& s = c.sweep;
    o << "\n[sweep]\n";
    num("pedestal_ns", s.pedestal_ns);
    num("main_ns", s.main_ns);
    num("ratio_db", s.ratio_db);
    num("chirp_MHz", s.chirp_MHz);
    num("detuning_min_MHz", s.detuning_min_MHz);
    num("detuning_max_MHz", s.detuning_max_MHz);
    integer("detuning_points", s.detuning_points);
    num("area_max_pi", s.area_max_pi);
    integer("rows", s.rows);
    flag("pedestal", s.pedestal);
    flag("main", s.main);
    flag("leak", s.leak);
    num("leak_ns", s.leak_ns);
    num("leak_ratio_db", s.leak_ratio_db);
    num("leak_offset_MHz", s.leak_offset_MHz);
    num("tail_lifetimes", s.tail_lifetimes);

    o << "\n[fit]\n";
    o << "model = " << c.fit.model << '\n';
    num("tail_lifetimes", c.fit.tail_lifetimes);
    integer("max_iterations", c.fit.max_iterations);

    o << "\n[run]\n";
    integer("seed", c.seed);
    o << "\n[output]\ndir = " << quote(c.output_dir) << '\n';
    return o.str();
}

EmitterModel make_emitter(const ExperimentConfig& c) {
    const auto& e = c.emitter;
    const double g1 = e.T1_ns ? 1.0 / (*e.T1_ns * kNs) : *e.gamma1_MHz * kAngularMHz;
    EmitterModel m = EmitterModel::radiative(g1, e.detuning_MHz * kAngularMHz);
    if (e.gamma2_MHz) m.gamma2 = std::max(*e.gamma2_MHz * kAngularMHz, 0.5 * g1);
    m.validate();
    return m;
}

DriveField make_field(const ExperimentConfig& c) {
    std::vector<FieldComponent> comps;
    double reference = 0.0;
    for (std::size_t i = 0; i < c.field.components.size(); ++i) {
        const auto& comp = c.field.components[i];
        double peak = kAngularMHz;  // placeholder, rescaled by the area target
        if (comp.peak_MHz) peak = *comp.peak_MHz * kAngularMHz;
        if (comp.ratio_db) peak = reference * amplitude_ratio_from_db(*comp.ratio_db);
        if (i == 0) reference = peak;

        const double center = comp.center_ns * kNs;
        const double width = comp.width_ns * kNs;
        const PhaseLaw phase{comp.phase_rad, comp.chirp_MHz * kAngularMHz};
        if (comp.kind == "gaussian") {
            comps.push_back({Envelope::gaussian(peak, width, center), phase});
        } else if (comp.kind == "rectangular") {
            comps.push_back({Envelope::rectangular(peak, width, center), phase});
        } else {
            const TraceRecord rec = ingest_trace_file(*comp.file, parse_trace_mode(comp.mode));
            double top = 0.0;
            for (double v : rec.values) top = std::max(top, std::abs(v));
            if (!(top > 0.0)) throw ValidationError("field." + comp.name + ".file", "shape is all zero");
            std::vector<double> times(rec.size());
            std::vector<double> amps(rec.size());
            for (std::size_t k = 0; k < rec.size(); ++k) {
                times[k] = (rec.times_ns[k] + comp.offset_ns) * kNs;
                amps[k] = std::max(rec.values[k], 0.0) / top * peak;
            }
            comps.push_back({Envelope::sampled(times, std::move(amps)), phase});
        }
    }
    DriveField field(std::move(comps));
    if (c.field.area_pi) {
        field = scale_to_area(field, *c.field.area_pi * std::numbers::pi, 0.0, field.support());
    }
    return field;
}

DetectorModel make_detector(const ExperimentConfig& c) {
    const auto& d = c.detector;
    DetectorModel m;
    m.efficiency = d.efficiency;
    m.dead_time = d.dead_time_ns * kNs;
    m.timing_jitter_sigma = d.jitter_ns * kNs;
    m.rep_period = d.rep_period_ns * kNs;
    m.bin_width = d.bin_ns * kNs;
    m.range = d.range_ns * kNs;
    m.dark_count_rate = d.dark_rate_Hz;
    m.validate();
    return m;
}

JitterModel make_jitter(const ExperimentConfig& c) {
    JitterModel m{c.jitter.sigma_rel, c.jitter.edge_ps * 1e-12};
    m.validate();
    return m;
}

CompositeFieldTemplate make_sweep_template(const ExperimentConfig& c) {
    const auto& s = c.sweep;
    CompositeFieldTemplate t;
    t.center = 0.0;
    t.pedestal_fwhm = s.pedestal_ns * kNs;
    t.main_fwhm = s.main_ns * kNs;
    t.ratio_db = s.ratio_db;
    t.chirp = s.chirp_MHz * kAngularMHz;
    t.pedestal_enabled = s.pedestal;
    t.main_enabled = s.main;
    t.leak_enabled = s.leak;
    t.leak_fwhm = s.leak_ns * kNs;
    t.leak_ratio_db = s.leak_ratio_db;
    t.leak_offset = s.leak_offset_MHz * kAngularMHz;
    t.validate();
    return t;
}

DriveField scan_template(const ExperimentConfig& c) {
    return DriveField(Envelope::gaussian(1.0, c.scan.pulse_ns * kNs, c.scan.center_ns * kNs));
}

std::vector<double> scan_amplitudes(const ExperimentConfig& c) {
    const double top = c.scan.area_max_pi * std::numbers::pi / gaussian_area(1.0, c.scan.pulse_ns * kNs);
    return linspace(0.0, top, c.scan.points);
}

std::vector<double> sweep_detunings(const ExperimentConfig& c) {
    auto v = linspace(c.sweep.detuning_min_MHz, c.sweep.detuning_max_MHz, c.sweep.detuning_points);
    for (double& x : v) x *= kAngularMHz;
    return v;
}

std::vector<double> sweep_amplitudes(const ExperimentConfig& c) {
    const double top = c.sweep.area_max_pi * std::numbers::pi / gaussian_area(1.0, c.sweep.main_ns * kNs);
    std::vector<double> v(c.sweep.rows);
    for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = top * static_cast<double>(k + 1) / static_cast<double>(v.size());
    }
    return v;
}

}  // namespace rabi
