#include "rabi/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <ostream>

#include "rabi/config.hpp"
#include "rabi/detection.hpp"
#include "rabi/errors.hpp"
#include "rabi/fitting.hpp"
#include "rabi/jitter.hpp"
#include "rabi/parallel.hpp"
#include "rabi/sweeps.hpp"
#include "rabi/trace_io.hpp"

#ifndef RABI_VERSION
#define RABI_VERSION "0.0.0"
#endif

namespace rabi {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr double kPi = std::numbers::pi;
constexpr double kAngularMHz = 2.0 * kPi * 1e6;
constexpr double kNs = 1e-9;

class UsageError : public Error {
public:
    using Error::Error;
};

struct Invocation {
    std::string command;
    ExperimentConfig config;
    std::map<std::string, std::string> options;
    fs::path out_dir;
};

struct RunRecord {
    std::vector<fs::path> inputs;
    std::vector<std::string> outputs;  // file names inside out_dir
};

double option_number(const Invocation& inv, const std::string& key) {
    const std::string& s = inv.options.at(key);
    double x = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(x)) {
        throw ValidationError(key, "expected a finite number, got '" + s + "'");
    }
    return x;
}

bool has(const Invocation& inv, const std::string& key) { return inv.options.count(key) != 0; }

Metadata base_metadata(const Invocation& inv) {
    return {{"command", inv.command}, {"version", RABI_VERSION}, {"seed", std::to_string(inv.config.seed)}};
}

std::string emit(const Invocation& inv, RunRecord& rec, const std::string& name) {
    rec.outputs.push_back(name);
    return (inv.out_dir / name).string();
}

// ---------------------------------------------------------------- commands

void cmd_trace(const Invocation& inv, RunRecord& rec, std::ostream& out) {
    const auto& cfg = inv.config;
    const EmitterModel emitter = make_emitter(cfg);
    const DriveField field = make_field(cfg);
    const Interval span{cfg.trace.start_ns * kNs, cfg.trace.stop_ns * kNs};
    const auto traj = integrate(emitter, field, BlochState::ground(), span, cfg.trace.dt_ns * kNs);

    std::vector<std::vector<double>> rows;
    rows.reserve(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const double p = traj.states[i].rho_ee;
        rows.push_back({traj.times[i] / kNs, p, emitter.gamma1 * p * kNs});
    }
    const double area = field.is_zero() ? 0.0 : pulse_area(field, 0.0, field.support());
    Metadata meta = base_metadata(inv);
    meta.emplace_back("omega_max_MHz", format_number(field.peak() / kAngularMHz));
    meta.emplace_back("area_pi", format_number(area / kPi));
    meta.emplace_back("emitted", format_number(traj.emitted));
    write_csv(emit(inv, rec, "trace.csv"), meta, {"t_ns", "rho_ee", "emission_rate_per_ns"}, rows);
    out << "trace: " << traj.size() << " samples, omega_max/2pi = " << format_number(field.peak() / kAngularMHz)
        << " MHz, area = " << format_number(area / kPi) << " pi\n";

    if (cfg.trace.pulses == 0) return;
    const DetectorModel det = make_detector(cfg);
    const auto hist = simulate_tcspc(emitter, field, det, cfg.trace.pulses, cfg.seed);

    // thinned-Poisson expectation for comparison
    const Interval rate_span{std::min(0.0, field.support().begin), det.range};
    const auto rate_traj = integrate(emitter, field, BlochState::ground(), rate_span, 0.01 * kNs);
    const auto density = first_detected_density(emission_rate(rate_traj, emitter), det.efficiency);
    const auto probs = bin_probabilities(density, hist.edges);

    std::vector<std::vector<double>> hrows;
    for (std::size_t i = 0; i < hist.counts.size(); ++i) {
        hrows.push_back({0.5 * (hist.edges[i] + hist.edges[i + 1]) / kNs, static_cast<double>(hist.counts[i]),
                         static_cast<double>(hist.n_pulses) * probs[i]});
    }
    Metadata hmeta = base_metadata(inv);
    hmeta.emplace_back("n_pulses", std::to_string(hist.n_pulses));
    hmeta.emplace_back("bin_ns", format_number(det.bin_width / kNs));
    hmeta.emplace_back("emitted", std::to_string(hist.emitted));
    hmeta.emplace_back("detected", std::to_string(hist.detected));
    write_csv(emit(inv, rec, "histogram.csv"), hmeta, {"t_ns", "counts", "expected"}, hrows);
    out << "histogram: " << hist.total() << " counts in range from " << hist.n_pulses << " pulses\n";
}

void cmd_power_scan(const Invocation& inv, RunRecord& rec, std::ostream& out) {
    const auto& cfg = inv.config;
    const EmitterModel emitter = make_emitter(cfg);
    const DriveField tmpl = scan_template(cfg);
    const auto amps = scan_amplitudes(cfg);
    PowerScanOptions opts;
    opts.rep_period = cfg.detector.rep_period_ns * kNs;
    opts.stratified = cfg.scan.stratified;
    const PowerScan scan = averaged_power_scan(emitter, tmpl, amps, make_jitter(cfg),
                                               static_cast<int>(cfg.scan.samples), cfg.seed, opts);
    const double unit_area = gaussian_area(1.0, cfg.scan.pulse_ns * kNs);

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < scan.size(); ++i) {
        rows.push_back({scan.amplitude[i] / kAngularMHz, scan.area_mean[i] / kPi, scan.signal[i],
                        scan.std_error[i], scan.area_sigma[i] / kPi});
    }
    Metadata meta = base_metadata(inv);
    meta.emplace_back("pulse_ns", format_number(cfg.scan.pulse_ns));
    meta.emplace_back("samples", std::to_string(cfg.scan.samples));
    write_csv(emit(inv, rec, "power_scan.csv"), meta,
              {"amplitude_MHz", "area_pi", "signal", "std_error", "area_sigma_pi"}, rows);

    const auto [lo, hi] = std::minmax_element(scan.signal.begin(), scan.signal.end());
    const auto extrema = scan_extrema(scan, 0.01 * (*hi - *lo));
    std::vector<std::vector<double>> erows;
    for (const auto& e : extrema) {
        erows.push_back({e.amplitude / kAngularMHz, e.amplitude * unit_area / kPi, e.value, e.maximum ? 1.0 : 0.0});
    }
    write_csv(emit(inv, rec, "extrema.csv"), base_metadata(inv), {"amplitude_MHz", "area_pi", "signal", "maximum"},
              erows);

    const auto vis = fringe_visibilities(extrema);
    std::string vis_list;
    std::size_t resolved = 0;
    for (std::size_t i = 0; i < vis.size(); ++i) {
        vis_list += (i ? "," : "") + format_number(vis[i]);
        if (vis[i] > 0.02) ++resolved;
    }
    Metadata summary = base_metadata(inv);
    summary.emplace_back("extrema", std::to_string(extrema.size()));
    if (!extrema.empty()) {
        summary.emplace_back("first_max_area_pi", format_number(extrema.front().amplitude * unit_area / kPi));
        summary.emplace_back("first_max_signal", format_number(extrema.front().value));
    }
    summary.emplace_back("visibilities", vis_list);
    summary.emplace_back("resolved_cycles", std::to_string(resolved));
    write_report(emit(inv, rec, "power_scan_summary.txt"), summary);
    out << "power-scan: " << scan.size() << " points, " << extrema.size() << " extrema, " << resolved
        << " cycles with visibility > 0.02\n";
}

void cmd_sweep2d(const Invocation& inv, RunRecord& rec, std::ostream& out) {
    const auto& cfg = inv.config;
    SweepOptions opts;
    opts.tail_lifetimes = cfg.sweep.tail_lifetimes;
    const auto sweep = sweep_2d(make_emitter(cfg), make_sweep_template(cfg), sweep_detunings(cfg),
                                sweep_amplitudes(cfg), opts);
    Metadata meta = base_metadata(inv);
    meta.emplace_back("main_ns", format_number(cfg.sweep.main_ns));
    meta.emplace_back("ratio_db", format_number(cfg.sweep.ratio_db));
    write_sweep_matrix(emit(inv, rec, "sweep_matrix.csv"), sweep, meta);
    write_sweep_long(emit(inv, rec, "sweep_long.csv"), sweep, meta);
    out << "sweep2d: " << sweep.amplitude.size() << " x " << sweep.detuning.size() << " grid\n";
}

void cmd_cross_section(const Invocation& inv, RunRecord& rec, std::ostream& out) {
    const auto& cfg = inv.config;
    const double unit_area = gaussian_area(1.0, cfg.sweep.main_ns * kNs);
    if (has(inv, "area_pi") == has(inv, "amplitude_MHz")) {
        throw UsageError("cross-section needs exactly one of --area-pi and --amplitude-MHz");
    }
    const double a = has(inv, "area_pi") ? option_number(inv, "area_pi") * kPi / unit_area
                                         : option_number(inv, "amplitude_MHz") * kAngularMHz;
    SweepResult sweep;
    if (has(inv, "from")) {
        sweep = read_sweep_matrix(inv.options.at("from"));
        rec.inputs.emplace_back(inv.options.at("from"));
    } else {
        SweepOptions opts;
        opts.tail_lifetimes = cfg.sweep.tail_lifetimes;
        const std::vector<double> row{a};
        sweep = sweep_2d(make_emitter(cfg), make_sweep_template(cfg), sweep_detunings(cfg), row, opts);
    }
    const auto cs = cross_section(sweep, a);
    std::vector<std::vector<double>> rows;
    for (const auto& [d, s] : cs.points) rows.push_back({d / kAngularMHz, s});
    Metadata meta = base_metadata(inv);
    meta.emplace_back("amplitude_MHz", format_number(cs.amplitude / kAngularMHz));
    write_csv(emit(inv, rec, "cross_section.csv"), meta, {"detuning_MHz", "signal"}, rows);

    Metadata report = base_metadata(inv);
    report.emplace_back("row", std::to_string(cs.row));
    report.emplace_back("amplitude_MHz", format_number(cs.amplitude / kAngularMHz));
    report.emplace_back("area_pi", format_number(cs.amplitude * unit_area / kPi));
    std::string fwhm = "unresolved";
    SpectralPeak peak;
    if (cs.points.size() >= 3) {
        try {
            peak = spectral_peak(cs.points);
            fwhm = format_number(peak.fwhm / kAngularMHz);
        } catch (const ValidationError&) {
            // half maximum not reached inside the axis
            const auto best = std::max_element(cs.points.begin(), cs.points.end(),
                                               [](const auto& x, const auto& y) { return x.second < y.second; });
            peak.position = best->first;
            peak.value = best->second;
        }
    }
    report.emplace_back("peak_MHz", format_number(peak.position / kAngularMHz));
    report.emplace_back("peak_signal", format_number(peak.value));
    report.emplace_back("fwhm_MHz", fwhm);
    write_report(emit(inv, rec, "cross_section_peak.txt"), report);
    out << "cross-section: row " << cs.row << ", peak at " << format_number(peak.position / kAngularMHz)
        << " MHz, fwhm " << fwhm << " MHz\n";
}

void write_fit(const Invocation& inv, RunRecord& rec, const std::string& stem, Metadata report,
               const FitResult& fit) {
    report.emplace_back("cost", format_number(fit.cost));
    const auto dof = static_cast<double>(fit.n_residuals) - static_cast<double>(fit.params.size());
    report.emplace_back("chi2_reduced", format_number(dof > 0 ? fit.cost / dof : 0.0));
    report.emplace_back("status", to_string(fit.status));
    report.emplace_back("iterations", std::to_string(fit.iterations));
    json j;
    for (const auto& [k, v] : report) j[k] = v;
    write_report(emit(inv, rec, stem + ".txt"), report);
    const std::string path = emit(inv, rec, stem + ".json");
    std::ofstream(path, std::ios::binary) << j.dump(2) << '\n';
}

void cmd_fit_trace(const Invocation& inv, RunRecord& rec, std::ostream& out) {
    const auto& cfg = inv.config;
    const std::string data_path = inv.options.at("data");
    const auto column = static_cast<std::size_t>(option_number(inv, "column"));
    const TraceRecord tr = ingest_trace_file(data_path, TraceMode::Amplitude, column);
    rec.inputs.emplace_back(data_path);

    TraceData data;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        data.times.push_back(tr.times_ns[i] * kNs);
        data.values.push_back(tr.values[i]);
    }
    if (const auto it = tr.metadata.find("bin_ns"); it != tr.metadata.end()) {
        double bin = 0.0;
        const auto r = std::from_chars(it->second.data(), it->second.data() + it->second.size(), bin);
        if (r.ec != std::errc() || !(bin > 0.0)) throw ValidationError("bin_ns", "header value must be > 0");
        data.bin_width = bin * kNs;
    }

    std::optional<Envelope> envelope;
    if (has(inv, "pulse")) {
        const TraceRecord pr =
            ingest_trace_file(inv.options.at("pulse"), parse_trace_mode(inv.options.at("pulse_mode")));
        rec.inputs.emplace_back(inv.options.at("pulse"));
        std::vector<double> t(pr.size());
        for (std::size_t i = 0; i < pr.size(); ++i) t[i] = pr.times_ns[i] * kNs;
        envelope = Envelope::sampled(t, pr.values);
    } else {
        envelope = make_field(cfg).components().front().envelope;
    }

    const EmitterModel emitter = make_emitter(cfg);
    TraceFitOptions opts;
    opts.model = cfg.fit.model == "first-detected" ? TraceModel::FirstDetected : TraceModel::ExcitedPopulation;
    opts.efficiency = cfg.detector.efficiency;
    opts.min_tail_lifetimes = cfg.fit.tail_lifetimes;
    opts.max_iterations = static_cast<int>(cfg.fit.max_iterations);
    const TraceFit tf = fit_trace(data, *envelope, emitter, opts);
    const auto& f = tf.fit;

    Metadata report = base_metadata(inv);
    for (const auto& name : f.names) {
        report.emplace_back(name, format_number(f.value(name)));
        report.emplace_back(name + "_sigma", format_number(f.sigma(name)));
    }
    const double rel = f.sigma("s") / f.value("s");
    report.emplace_back("omega_max_MHz", format_number(tf.omega_max / kAngularMHz));
    report.emplace_back("omega_max_sigma_MHz", format_number(std::abs(rel) * tf.omega_max / kAngularMHz));
    report.emplace_back("area_pi", format_number(tf.area / kPi));
    report.emplace_back("area_sigma_pi", format_number(std::abs(rel) * tf.area / kPi));
    write_fit(inv, rec, "fit_trace", report, f);

    const auto model = trace_model(data, *envelope, emitter, f.value("s"), f.value("t0_ns"), f.value("b"),
                                   f.value("c"), opts);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < data.times.size(); ++i) rows.push_back({tr.times_ns[i], data.values[i], model[i]});
    write_csv(emit(inv, rec, "fit_trace_curve.csv"), base_metadata(inv), {"t_ns", "data", "model"}, rows);
    out << "fit-trace: omega_max/2pi = " << format_number(tf.omega_max / kAngularMHz)
        << " MHz, area = " << format_number(tf.area / kPi) << " pi (" << to_string(f.status) << ")\n";
}

void cmd_fit_power_scan(const Invocation& inv, RunRecord& rec, std::ostream& out) {
    const std::string data_path = inv.options.at("data");
    const auto column = static_cast<std::size_t>(option_number(inv, "column"));
    const TraceRecord tr = ingest_trace_file(data_path, TraceMode::Amplitude, column);
    rec.inputs.emplace_back(data_path);

    // fitted on the file's amplitude axis, so parameters come out per MHz
    PowerScan scan;
    scan.amplitude = tr.times_ns;
    scan.signal = tr.values;
    scan.std_error.assign(tr.size(), 0.0);
    scan.area_mean.assign(tr.size(), 0.0);
    scan.area_sigma.assign(tr.size(), 0.0);
    const PowerScanFit fit = fit_power_scan(scan);

    Metadata report = base_metadata(inv);
    const std::map<std::string, std::string> unit{{"background_slope", "_per_MHz"},
                                                  {"decay_slope", "_per_MHz"},
                                                  {"period", "_MHz"},
                                                  {"phase", "_rad"}};
    for (const auto& name : fit.fit.names) {
        const std::string key = name + (unit.count(name) ? unit.at(name) : "");
        report.emplace_back(key, format_number(fit.fit.value(name)));
        report.emplace_back(key + "_sigma", format_number(fit.fit.sigma(name)));
    }
    report.emplace_back("pi_amplitude_MHz", format_number(fit.pi_amplitude()));
    report.emplace_back("residual_norm", format_number(fit.residual_norm));
    write_fit(inv, rec, "fit_power_scan", report, fit.fit);

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < scan.size(); ++i) {
        rows.push_back({scan.amplitude[i], scan.signal[i], power_scan_model(fit, scan.amplitude[i])});
    }
    write_csv(emit(inv, rec, "fit_power_scan_curve.csv"), base_metadata(inv), {"amplitude_MHz", "data", "model"},
              rows);
    out << "fit-power-scan: pi amplitude = " << format_number(fit.pi_amplitude()) << " MHz\n";
}

void cmd_pi_pulse(const Invocation& inv, RunRecord& rec, std::ostream& out) {
    const double t_ns = option_number(inv, "T_ns");
    const double wavelength = option_number(inv, "wavelength_nm") * 1e-9;
    const double rep = option_number(inv, "rep_kHz") * 1e3;
    const double photons = option_number(inv, "photons");
    if (!(t_ns > 0.0)) throw ValidationError("T_ns", "must be > 0");
    const double power = power_for_photons(photons, rep, wavelength);
    const double rect_omega = kPi / (t_ns * kNs);
    const double gauss_peak = kPi / gaussian_area(1.0, t_ns * kNs);

    Metadata report = base_metadata(inv);
    report.emplace_back("pulse_ns", format_number(t_ns));
    report.emplace_back("wavelength_nm", format_number(wavelength * 1e9));
    report.emplace_back("rep_kHz", format_number(rep * 1e-3));
    report.emplace_back("photons_per_pulse", format_number(photons));
    report.emplace_back("photon_energy_J", format_number(power / (photons * rep)));
    report.emplace_back("average_power_W", format_number(power));
    report.emplace_back("photons_per_pulse_check", format_number(photons_per_pulse(power, rep, wavelength)));
    report.emplace_back("rect_omega_rad_per_s", format_number(rect_omega));
    report.emplace_back("rect_omega_MHz", format_number(rect_omega / kAngularMHz));
    report.emplace_back("gaussian_peak_MHz", format_number(gauss_peak / kAngularMHz));
    write_report(emit(inv, rec, "pi_pulse.txt"), report);
    for (std::size_t i = 3; i < report.size(); ++i) out << report[i].first << '=' << report[i].second << '\n';
}

using Command = void (*)(const Invocation&, RunRecord&, std::ostream&);

Command lookup(const std::string& name) {
    static const std::map<std::string, Command> table{
        {"trace", cmd_trace},         {"power-scan", cmd_power_scan},
        {"sweep2d", cmd_sweep2d},     {"cross-section", cmd_cross_section},
        {"fit-trace", cmd_fit_trace}, {"fit-power-scan", cmd_fit_power_scan},
        {"pi-pulse", cmd_pi_pulse}};
    const auto it = table.find(name);
    if (it == table.end()) throw ValidationError("command", "unknown command '" + name + "'");
    return it->second;
}

// Runs a command and writes its manifest; returns the record.
RunRecord execute(const Invocation& inv, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(inv.out_dir);
    RunRecord rec;
    lookup(inv.command)(inv, rec, out);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json m;
    m["tool"] = "rabi";
    m["version"] = RABI_VERSION;
    m["command"] = inv.command;
    m["options"] = json::object();
    for (const auto& [k, v] : inv.options) m["options"][k] = v;
    m["seed"] = inv.config.seed;
    m["config"] = serialize_config(inv.config);
    m["provenance"] = inv.config.provenance;
    m["threads"] = thread_count();
    m["wall_time_s"] = wall;
    m["inputs"] = json::array();
    for (const auto& p : rec.inputs) {
        m["inputs"].push_back({{"path", fs::absolute(p).string()}, {"digest", file_digest(p)}});
    }
    m["outputs"] = json::array();
    for (const auto& name : rec.outputs) {
        m["outputs"].push_back({{"file", name}, {"digest", file_digest(inv.out_dir / name)}});
    }
    const fs::path manifest = inv.out_dir / (inv.command + "_manifest.json");
    std::ofstream(manifest, std::ios::binary) << m.dump(2) << '\n';
    out << "manifest: " << manifest.string() << '\n';
    return rec;
}

int replay(const fs::path& manifest_path, const std::string& out_override, std::ostream& out) {
    json m;
    try {
        m = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw ValidationError("manifest", std::string("not a manifest: ") + e.what());
    }
    if (!m.contains("command") || !m.contains("config") || !m.contains("outputs")) {
        throw ValidationError("manifest", "missing command, config or outputs");
    }
    Invocation inv;
    inv.command = m["command"].get<std::string>();
    inv.config = parse_config(m["config"].get<std::string>());
    for (const auto& [k, v] : m["options"].items()) inv.options[k] = v.get<std::string>();
    inv.out_dir = out_override.empty() ? manifest_path.parent_path() / "replay" : fs::path(out_override);
    if (fs::exists(inv.out_dir) && fs::equivalent(fs::absolute(inv.out_dir), fs::absolute(manifest_path).parent_path())) {
        throw ValidationError("out", "replay output must not overwrite the recorded run");
    }
    for (const auto& in : m["inputs"]) {
        const std::string path = in["path"].get<std::string>();
        if (file_digest(path) != in["digest"].get<std::string>()) {
            throw ValidationError("inputs", path + " changed since the recorded run");
        }
    }

    execute(inv, out);
    std::size_t differ = 0;
    for (const auto& o : m["outputs"]) {
        const std::string name = o["file"].get<std::string>();
        const bool same = fs::exists(inv.out_dir / name) && file_digest(inv.out_dir / name) == o["digest"].get<std::string>();
        out << "replay: " << name << (same ? " identical" : " DIFFERS") << '\n';
        if (!same) ++differ;
    }
    if (differ) throw NumericalError(std::to_string(differ) + " replayed outputs differ from the manifest");
    out << "replay: all " << m["outputs"].size() << " outputs bit-identical\n";
    return kExitOk;
}

int selftest(std::ostream& out) {
    const auto checks = run_selftest();
    std::size_t failed = 0;
    for (const auto& c : checks) {
        out << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
        if (!c.passed) ++failed;
    }
    if (failed) {
        out << "selftest: " << failed << " of " << checks.size() << " checks failed\n";
        return kExitNumerical;
    }
    out << "selftest: all " << checks.size() << " oracle checks passed\n";
    return kExitOk;
}

void error_line(std::ostream& err, json j) { err << "error: " << j.dump() << '\n'; }

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-level emitter simulator: Bloch traces, photon counting, power scans and sweeps", "rabi"};
    app.require_subcommand(1);
    app.set_version_flag("--version", RABI_VERSION);

    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    std::map<std::string, std::string> opts;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
        sub->add_option("--set", sets, "override a config key, KEY=VALUE (repeatable)");
        sub->add_option("--out", out_dir, "output directory (default: output.dir of the config)");
    };
    auto value = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
        return sub->add_option_function<std::string>(flag, [&opts, key](const std::string& v) { opts[key] = v; }, help);
    };

    common(app.add_subcommand("trace", "excited population and emission rate vs time, optional TCSPC histogram"));
    common(app.add_subcommand("power-scan", "jitter-averaged emission vs peak Rabi frequency"));
    common(app.add_subcommand("sweep2d", "emission map over detuning and field strength"));
    auto* cs = app.add_subcommand("cross-section", "one amplitude row of the detuning map with its peak");
    common(cs);
    value(cs, "--area-pi", "area_pi", "main-pulse area of the row, in units of pi");
    value(cs, "--amplitude-MHz", "amplitude_MHz", "main-pulse peak Rabi frequency / 2 pi");
    value(cs, "--from", "from", "read rows from an existing sweep_matrix.csv")->check(CLI::ExistingFile);
    auto* ft = app.add_subcommand("fit-trace", "fit the Bloch model to a measured trace or histogram");
    common(ft);
    value(ft, "--data", "data", "two-column trace (t_ns, value)")->required()->check(CLI::ExistingFile);
    value(ft, "--column", "column", "value column after time (default 1)");
    value(ft, "--pulse", "pulse", "measured excitation pulse shape (t_ns, value)")->check(CLI::ExistingFile);
    value(ft, "--pulse-mode", "pulse_mode", "amplitude or intensity (default intensity)");
    auto* fp = app.add_subcommand("fit-power-scan", "damped-sinusoid fit to a power scan");
    common(fp);
    value(fp, "--data", "data", "power_scan.csv")->required()->check(CLI::ExistingFile);
    value(fp, "--column", "column", "signal column after amplitude (default 2)");
    auto* pp = app.add_subcommand("pi-pulse", "photon budget and pi-pulse Rabi frequency");
    pp->add_option("--out", out_dir, "output directory");
    value(pp, "--T-ns", "T_ns", "pulse duration in ns")->required();
    value(pp, "--wavelength-nm", "wavelength_nm", "laser wavelength in nm")->required();
    value(pp, "--rep-khz", "rep_kHz", "repetition rate in kHz")->required();
    value(pp, "--photons", "photons", "photons per pulse")->required();
    app.add_subcommand("selftest", "run the analytic-oracle checks");
    auto* rp = app.add_subcommand("replay", "re-run a manifest and verify bit-identical outputs");
    std::string manifest;
    rp->add_option("--manifest", manifest, "a *_manifest.json")->required()->check(CLI::ExistingFile);
    rp->add_option("--out", out_dir, "output directory (default: <manifest dir>/replay)");

    try {
        try {
            app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return kExitOk;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return kExitOk;
        } catch (const CLI::CallForVersion&) {
            out << RABI_VERSION << '\n';
            return kExitOk;
        } catch (const CLI::ParseError& e) {
            throw UsageError(e.what());
        }

        const auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (name == "selftest") return selftest(out);
        if (name == "replay") return replay(manifest, out_dir, out);

        Invocation inv;
        inv.command = name;
        inv.config = config_path.empty() ? parse_config("", sets) : load_config(config_path, sets);
        inv.options = opts;
        if (name == "fit-trace") {
            inv.options.try_emplace("column", "1");
            inv.options.try_emplace("pulse_mode", "intensity");
        }
        if (name == "fit-power-scan") inv.options.try_emplace("column", "2");
        // input paths are recorded absolute so a manifest replays from anywhere
        for (const char* key : {"data", "pulse", "from"}) {
            if (inv.options.count(key)) inv.options[key] = fs::absolute(inv.options[key]).lexically_normal().string();
        }
        inv.out_dir = out_dir.empty() ? fs::path(inv.config.output_dir) : fs::path(out_dir);
        execute(inv, out);
        return kExitOk;
    } catch (const UsageError& e) {
        error_line(err, {{"error", "usage"}, {"message", e.what()}});
        err << app.help();
        return kExitUsage;
    } catch (const ParseError& e) {
        error_line(err, {{"error", "parse"}, {"line", e.line()}, {"column", e.column()}, {"message", e.what()}});
        return kExitInput;
    } catch (const ValidationError& e) {
        error_line(err, {{"error", "validation"}, {"key", e.key()}, {"message", e.what()}});
        return kExitInput;
    } catch (const InputError& e) {
        error_line(err, {{"error", "input"}, {"message", e.what()}});
        return kExitInput;
    } catch (const NumericalError& e) {
        error_line(err, {{"error", "numerical"}, {"message", e.what()}});
        return kExitNumerical;
    } catch (const fs::filesystem_error& e) {
        error_line(err, {{"error", "input"}, {"message", e.what()}});
        return kExitInput;
    } catch (const std::exception& e) {
        error_line(err, {{"error", "internal"}, {"message", e.what()}});
        return kExitInternal;
    }
}

}  // namespace rabi
