// inloop - feedback-controlled cavity optomechanics toolkit.
//
// Subcommands: spectrum, occupancy, omit, simulate, sweep-detuning,
// sweep-gain, cooling-curve, steady-state, check.
// Exit codes: 0 success, 1 config error, 2 physics instability,
// 3 numerical non-convergence.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "inloop/inloop.hpp"

namespace fs = std::filesystem;
using namespace inloop;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string mode;
    int branch = -2;  // -2: not given
    double gain = std::numeric_limits<double>::quiet_NaN();
    std::string out_dir = ".";
    unsigned threads = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string format = "csv";
    std::vector<std::string> raw_flags;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_seed = false) {
    cmd->add_option("--config", a.config_path, "JSON config file");
    cmd->add_option("--preset", a.preset,
                    "bundled preset (fig2, fig3, fig4, figs1)");
    cmd->add_option("--mode", a.mode, "response mode: exact | effective")
        ->check(CLI::IsMember({"exact", "effective"}));
    cmd->add_option("--gain", a.gain,
                    "override the normalised loop gain G_fb");
    cmd->add_option("--branch", a.branch,
                    "select a steady-state branch by index (default: lowest "
                    "stable; overrides a pinned n_s)");
    cmd->add_option("--out", a.out_dir, "output directory");
    cmd->add_option("--threads", a.threads,
                    "worker threads (default: OPTOMECH_THREADS or all cores)");
    cmd->add_option("--format", a.format, "output format")
        ->check(CLI::IsMember({"csv", "json"}));
    if (with_seed) {
        auto* o = cmd->add_option("--seed", a.seed, "simulation RNG seed");
        o->each([&a](const std::string&) { a.seed_set = true; });
    }
}

unsigned resolve_threads(const CommonArgs& a) {
    if (a.threads > 0) return a.threads;
    if (const char* env = std::getenv("OPTOMECH_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return 0;  // library default: all cores
}

struct LoadedRun {
    RunConfig cfg;
    RunManifest manifest;
};

LoadedRun load_run(const CommonArgs& a, const std::string& subcommand) {
    if (a.config_path.empty() == a.preset.empty())
        throw ConfigError("give exactly one of --config or --preset");
    LoadedRun run;
    if (!a.preset.empty()) {
        run.cfg = load_preset(a.preset);
        run.manifest.config_path = "preset:" + a.preset;
        run.manifest.preset = a.preset;
    } else {
        run.cfg = load_config_file(a.config_path);
        run.manifest.config_path = a.config_path;
    }
    // flag overrides (flag beats config); the branch choice comes first
    // because the gain normalisation depends on the working point
    if (!a.mode.empty())
        run.cfg.spectrum.mode =
            a.mode == "exact" ? ResponseMode::exact : ResponseMode::effective;
    if (a.branch >= -1) {
        run.cfg.branch = a.branch;
        run.cfg.has_n_s = false;  // an explicit branch asks for the solver
    }
    if (!std::isnan(a.gain))
        run.cfg.filter = with_normalized_gain(
            run.cfg.filter, run.cfg.params, run.cfg.working_point().n_s,
            a.gain);
    if (a.seed_set) run.cfg.sim.seed = a.seed;

    // canonicalise: run from the fixed point of export/parse, so outputs
    // are reproducible byte-for-byte from the manifest alone
    run.cfg = parse_config(resolved_config(run.cfg));

    run.manifest.subcommand = subcommand;
    run.manifest.flags = a.raw_flags;
    run.manifest.resolved = resolved_config(run.cfg);
    run.manifest.config_sha256 = sha256_hex(run.manifest.resolved.dump());
    run.manifest.timestamp = utc_timestamp_now();
    return run;
}

std::string out_path(const CommonArgs& a, const std::string& file) {
    fs::create_directories(a.out_dir);
    return (fs::path(a.out_dir) / file).string();
}

void finish(LoadedRun& run, const CommonArgs& a,
            const std::vector<std::string>& outputs) {
    run.manifest.outputs = outputs;
    write_manifest(run.manifest, out_path(a, run.manifest.subcommand +
                                                 ".manifest.json"));
}

std::vector<std::string> spectrum_comments(const RunConfig& cfg,
                                           const SteadyStateBranch& wp,
                                           const EffectiveCavity& eff) {
    return {
        "preset: " + cfg.name,
        "n_s: " + format_double(wp.n_s),
        "detuning_hz: " + format_double(rad_to_hz(wp.delta)),
        "kappa_eff_hz: " + format_double(rad_to_hz(eff.kappa_eff)),
        "delta_eff_hz: " + format_double(rad_to_hz(eff.delta_eff)),
        "coupling_g_hz: " +
            format_double(rad_to_hz(coupling_G(cfg.params, wp.n_s))),
    };
}

int cmd_spectrum(const CommonArgs& a) {
    LoadedRun run = load_run(a, "spectrum");
    const RunConfig& cfg = run.cfg;
    const SteadyStateBranch wp = cfg.working_point();
    const EffectiveCavity eff =
        effective_cavity(cfg.params, cfg.filter, wp.n_s);
    const double G = coupling_G(cfg.params, wp.n_s);
    const auto grid = make_spectrum_grid(cfg.params, eff, G,
                                         cfg.spectrum.n_points,
                                         cfg.spectrum.span);
    SpectrumGrid g =
        cfg.spectrum.mode == ResponseMode::exact
            ? s_qq_exact(grid, cfg.params, cfg.filter, wp)
            : s_qq_approx(grid, eff, cfg.params, G,
                          z_delta(cfg.params, wp.delta, eff));
    if (cfg.params.mass) s_xx_from_s_qq(g, cfg.params);

    std::string file;
    if (a.format == "json") {
        file = out_path(a, "spectrum.json");
        nlohmann::json j;
        j["convention"] = "one-sided, per Hz";
        j["mode"] = to_string(g.mode);
        for (std::size_t i = 0; i < g.omega.size(); ++i) {
            j["omega_hz"].push_back(rad_to_hz(g.omega[i]));
            j["s_th"].push_back(one_sided_hz_factor * g.s_thermal[i]);
            j["s_rp"].push_back(one_sided_hz_factor * g.s_rp[i]);
            j["s_fb"].push_back(one_sided_hz_factor * g.s_fb[i]);
            j["s_total"].push_back(one_sided_hz_factor * g.s_total[i]);
            if (!g.s_xx.empty())
                j["s_xx_m2_per_hz"].push_back(2.0 * g.s_xx[i]);
        }
        std::ofstream out(file);
        out << j.dump() << "\n";
    } else {
        file = out_path(a, "spectrum.csv");
        write_spectrum_csv(g, file, spectrum_comments(cfg, wp, eff));
    }
    std::cout << "spectrum: " << g.omega.size() << " points";
    try {
        const NormalModes nm = find_normal_modes(g, cfg.spectrum.prominence);
        if (nm.single_peaked)
            std::cout << ", single peak at "
                      << format_double(rad_to_hz(nm.omega_plus)) << " Hz";
        else
            std::cout << ", double peak at "
                      << format_double(rad_to_hz(nm.omega_minus)) << " / "
                      << format_double(rad_to_hz(nm.omega_plus))
                      << " Hz (splitting "
                      << format_double(rad_to_hz(nm.splitting)) << " Hz)";
    } catch (const ConfigError& e) {
        std::cout << " (peak classification unavailable: " << e.what()
                  << ")";
    }
    std::cout << "\n  -> " << file << "\n";
    finish(run, a, {file});
    return 0;
}

int cmd_steady_state(const CommonArgs& a) {
    LoadedRun run = load_run(a, "steady-state");
    const RunConfig& cfg = run.cfg;
    const auto branches = solve_steady_state(cfg.params, cfg.filter);
    nlohmann::json rows = nlohmann::json::array();
    std::cout << "n_s            delta_hz        q_s            stable\n";
    for (const auto& b : branches) {
        std::cout << format_double(b.n_s) << "  "
                  << format_double(rad_to_hz(b.delta)) << "  "
                  << format_double(b.q_s) << "  "
                  << (b.stable ? "yes" : "no") << "\n";
        rows.push_back({{"n_s", b.n_s},
                        {"alpha_s", b.alpha_s},
                        {"q_s", b.q_s},
                        {"delta_hz", rad_to_hz(b.delta)},
                        {"phi_bar", b.phi_bar},
                        {"stable", b.stable}});
    }
    if (cfg.has_n_s)
        std::cout << "pinned working point n_s = " << format_double(cfg.n_s)
                  << " (G = "
                  << format_double(
                         rad_to_hz(coupling_G(cfg.params, cfg.n_s)))
                  << " Hz)\n";
    const std::string file = out_path(a, "steady_state.json");
    std::ofstream out(file);
    out << rows.dump(2) << "\n";
    finish(run, a, {file});
    return 0;
}

int cmd_occupancy(const CommonArgs& a) {
    LoadedRun run = load_run(a, "occupancy");
    const RunConfig& cfg = run.cfg;
    const SteadyStateBranch wp = cfg.working_point();
    const EffectiveCavity eff =
        effective_cavity(cfg.params, cfg.filter, wp.n_s);
    const double G = coupling_G(cfg.params, wp.n_s);
    const double z = z_delta(cfg.params, wp.delta, eff);
    const OccupancyResult closed = phonon_number_closed(cfg.params, eff, G, z);
    const OccupancyResult integ =
        cfg.spectrum.mode == ResponseMode::exact
            ? phonon_number_integral(cfg.params, cfg.filter, wp)
            : phonon_number_integral(cfg.params, eff, G, z);

    nlohmann::json j;
    j["n_m_closed"] = closed.n_m;
    j["n_m_integral"] = integ.n_m;
    j["gamma_eff_hz"] = rad_to_hz(closed.gamma_eff);
    j["a_plus_hz"] = rad_to_hz(closed.a_plus);
    j["a_minus_hz"] = rad_to_hz(closed.a_minus);
    j["n_m_eff"] = closed.n_m_eff;
    j["n_m_th_eff"] = closed.n_m_th_eff;
    j["kappa_eff_hz"] = rad_to_hz(eff.kappa_eff);
    j["cooperativity_eff"] = cooperativity(G, eff.kappa_eff,
                                           cfg.params.gamma_m);
    j["in_regime"] = closed.flags.all();
    std::cout << "n_m (closed form) = " << format_double(closed.n_m)
              << "\nn_m (integral)    = " << format_double(integ.n_m)
              << "\nGamma_eff/2pi     = "
              << format_double(rad_to_hz(closed.gamma_eff)) << " Hz\n";
    if (!closed.flags.all())
        std::cout << "note: outside the closed-form validity regime\n";
    const std::string file = out_path(a, "occupancy.json");
    std::ofstream out(file);
    out << j.dump(2) << "\n";
    finish(run, a, {file});
    return 0;
}

int cmd_omit(const CommonArgs& a) {
    LoadedRun run = load_run(a, "omit");
    const RunConfig& cfg = run.cfg;
    const SteadyStateBranch wp = cfg.working_point();
    const EffectiveCavity eff =
        effective_cavity(cfg.params, cfg.filter, wp.n_s);
    const double G = coupling_G(cfg.params, wp.n_s);

    auto spectrum_at = [&](const FeedbackFilter& f) {
        const EffectiveCavity e = effective_cavity(cfg.params, f, wp.n_s);
        const CavityResponse chi =
            cfg.spectrum.mode == ResponseMode::exact
                ? CavityResponse::exact(cfg.params, f, wp.n_s)
                : CavityResponse::lorentzian(e);
        const auto grid = make_spectrum_grid(cfg.params, e, G,
                                             cfg.spectrum.n_points,
                                             cfg.spectrum.span);
        return transmission_spectrum(grid, cfg.params, wp.delta, G, chi);
    };

    const TransmissionSpectrum ts = spectrum_at(cfg.filter);
    const std::string file = out_path(a, "omit.csv");
    write_omit_csv(ts, file, spectrum_comments(cfg, wp, eff));
    std::vector<std::string> outputs{file};

    // a gain-axis sweep section turns this into the transmission map:
    // long-format rows (g_fb, omega_hz, ...) across the grid of loop gains
    if (cfg.sweep && cfg.sweep->axis == "gain") {
        const std::string map_file = out_path(a, "omit_sweep.csv");
        std::ofstream out(map_file);
        out << "g_fb,omega_hz,t_re,t_im,s_t,epsilon,q,rho,phase_rad\n";
        for (double g_fb : cfg.sweep->values) {
            const FeedbackFilter fg =
                with_normalized_gain(cfg.filter, cfg.params, wp.n_s, g_fb);
            const TransmissionSpectrum row = spectrum_at(fg);
            for (std::size_t i = 0; i < row.points.size(); ++i) {
                const FanoPoint& pt = row.points[i];
                out << format_double(g_fb) << ','
                    << format_double(rad_to_hz(pt.omega)) << ','
                    << format_double(pt.t.real()) << ','
                    << format_double(pt.t.imag()) << ','
                    << format_double(pt.s_t) << ','
                    << format_double(pt.epsilon) << ','
                    << format_double(pt.q) << ',' << format_double(pt.rho)
                    << ',' << format_double(row.phase[i]) << "\n";
            }
        }
        outputs.push_back(map_file);
    }
    std::cout << "omit: " << ts.points.size() << " points -> " << file
              << "\n";
    finish(run, a, outputs);
    return 0;
}

int cmd_simulate(const CommonArgs& a, const std::string& dump_format) {
    LoadedRun run = load_run(a, "simulate");
    const RunConfig& cfg = run.cfg;
    if (!(cfg.sim.dt > 0.0))
        throw ConfigError("simulate: config needs a 'simulation' table");
    const SteadyStateBranch wp = cfg.working_point();
    SimConfig sim;
    sim.dt = cfg.sim.dt;
    sim.duration = cfg.sim.duration;
    sim.seed = cfg.sim.seed;
    sim.record_decimation = cfg.sim.record_decimation;

    const StabilityReport stab =
        dynamical_stability(cfg.params, cfg.filter, wp);
    if (!stab.stable)
        std::cout << "warning: linear drift unstable (leading rate "
                  << format_double(stab.leading_rate) << " rad/s); "
                  << "running with divergence detection\n";

    const SimResult res = run_simulation(cfg.params, cfg.filter, wp, sim);
    if (res.diverged)
        std::cout << "simulation diverged at t = "
                  << format_double(res.blowup_time) << " s\n";

    std::vector<std::string> outputs;
    if (dump_format == "csv") {
        const std::string file = out_path(a, "timeseries.csv");
        std::ofstream out(file);
        out << "t_s,q,p,re_a,im_a,photocurrent\n";
        for (std::size_t i = 0; i < res.q.size(); ++i)
            out << format_double(double(i + 1) * res.dt_sample) << ','
                << format_double(res.q[i]) << ',' << format_double(res.p[i])
                << ',' << format_double(res.re_a[i]) << ','
                << format_double(res.im_a[i]) << ','
                << format_double(res.photocurrent[i]) << "\n";
        outputs.push_back(file);
    } else {
        // raw little-endian doubles, columns interleaved
        const std::string file = out_path(a, "timeseries.bin");
        std::ofstream out(file, std::ios::binary);
        const std::size_t n = res.q.size();
        out.write(reinterpret_cast<const char*>(&res.dt_sample),
                  sizeof(double));
        const double nd = static_cast<double>(n);
        out.write(reinterpret_cast<const char*>(&nd), sizeof(double));
        for (std::size_t i = 0; i < n; ++i) {
            const double row[5] = {res.q[i], res.p[i], res.re_a[i],
                                   res.im_a[i], res.photocurrent[i]};
            out.write(reinterpret_cast<const char*>(row), sizeof row);
        }
        outputs.push_back(file);
    }

    // PSD of the displacement record, same schema as analytic spectra
    if (res.q.size() >= 1u << 15) {
        std::size_t nfft = 1;
        while (nfft * 16 < res.q.size()) nfft <<= 1;
        nfft = std::min<std::size_t>(nfft, 1u << 18);
        const PsdEstimate psd = estimate_psd(res.q, res.dt_sample, nfft);
        const std::string file = out_path(a, "psd.csv");
        write_psd_csv(psd, file, {"source: simulated displacement"});
        outputs.push_back(file);
    }
    std::cout << "simulate: " << res.q.size() << " samples -> "
              << outputs.front() << "\n";
    finish(run, a, outputs);
    return 0;
}

int cmd_sweep(const CommonArgs& a, const std::string& axis) {
    const std::string name =
        axis == "detuning" ? "sweep-detuning" : "sweep-gain";
    LoadedRun run = load_run(a, name);
    const RunConfig& cfg = run.cfg;
    const SteadyStateBranch wp = cfg.working_point();
    SweepOptions grid;
    if (cfg.sweep && cfg.sweep->axis == axis) {
        grid = *cfg.sweep;
    } else if (axis == "gain") {
        for (int i = 0; i < 50; ++i) grid.values.push_back(0.97 * i / 49.0);
    } else {
        for (int i = 0; i < 81; ++i)
            grid.values.push_back(cfg.params.omega_m * (0.95 + 0.1 * i / 80.0));
    }
    const unsigned threads = resolve_threads(a);
    const SweepResult res =
        axis == "detuning"
            ? sweep_detuning(cfg.params, cfg.filter, wp.n_s, wp.delta,
                             grid.values, cfg.spectrum, threads)
            : sweep_gain(cfg.params, cfg.filter, wp.n_s, grid.values,
                         cfg.spectrum, threads);
    const std::string csv = out_path(a, name + ".csv");
    write_sweep_csv(res, csv);
    const std::string summary = out_path(a, name + "-summary.json");
    std::ofstream out(summary);
    out << sweep_summary_json(res).dump(2) << "\n";
    std::cout << name << ": " << res.points.size() << " points, "
              << res.summary.failures << " failures -> " << csv << "\n";
    if (axis == "gain" && std::isfinite(res.summary.transition_gain))
        std::cout << "  transition gain " << res.summary.transition_gain
                  << ", max-gain implied G "
                  << format_double(rad_to_hz(res.summary.implied_g))
                  << " Hz\n";
    if (axis == "detuning" && std::isfinite(res.summary.min_gap))
        std::cout << "  minimum gap "
                  << format_double(rad_to_hz(res.summary.min_gap))
                  << " Hz at detuning "
                  << format_double(rad_to_hz(res.summary.min_gap_axis))
                  << " Hz\n";
    finish(run, a, {csv, summary});
    return 0;
}

int cmd_cooling_curve(const CommonArgs& a) {
    LoadedRun run = load_run(a, "cooling-curve");
    const RunConfig& cfg = run.cfg;
    const SteadyStateBranch wp = cfg.working_point();
    std::vector<double> gains;
    if (cfg.cooling_curve)
        gains = cfg.cooling_curve->values;
    else if (cfg.sweep && cfg.sweep->axis == "gain")
        gains = cfg.sweep->values;
    else
        for (int i = 0; i < 60; ++i) gains.push_back(0.97 * i / 59.0);
    const auto pts = cooling_ratio_curve(cfg.params, cfg.filter, wp.n_s,
                                         gains, resolve_threads(a));
    std::string file;
    if (a.format == "json") {
        file = out_path(a, "cooling_curve.json");
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& p : pts)
            rows.push_back({{"g_fb", p.g_fb},
                            {"kappa_eff_hz", rad_to_hz(p.kappa_eff)},
                            {"gamma_eff_hz", rad_to_hz(p.gamma_eff)},
                            {"n_m_closed", p.n_m_closed},
                            {"n_m_integral", p.n_m_integral},
                            {"ratio_db", p.ratio_db},
                            {"ratio_integral_db", p.ratio_integral_db}});
        std::ofstream out(file);
        out << rows.dump(2) << "\n";
    } else {
        file = out_path(a, "cooling_curve.csv");
        write_cooling_csv(pts, file, {"preset: " + cfg.name});
    }
    const CoolingPoint* best = nullptr;
    for (const auto& p : pts)
        if (!best || p.ratio_db < best->ratio_db) best = &p;
    if (best)
        std::cout << "cooling-curve: minimum " << format_double(best->ratio_db)
                  << " dB at G_fb = " << format_double(best->g_fb) << "\n";
    finish(run, a, {file});
    return 0;
}

int cmd_check(std::uint64_t seed, int draws) {
    const auto results = run_invariant_checks(seed ? seed : 2026, draws);
    bool all = true;
    std::printf("%-55s %-6s %-12s\n", "invariant", "status", "worst");
    for (const auto& r : results) {
        all = all && r.pass;
        std::printf("%-55s %-6s %-12.3e (%s)\n", r.name.c_str(),
                    r.pass ? "PASS" : "FAIL", r.worst, r.note.c_str());
    }
    return all ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"in-loop cavity optomechanics toolkit"};
    app.require_subcommand(1);

    CommonArgs a;
    for (int i = 1; i < argc; ++i) a.raw_flags.emplace_back(argv[i]);

    auto* sp = app.add_subcommand("spectrum",
                                  "displacement noise spectrum at the "
                                  "configured working point");
    add_common(sp, a);
    auto* ss = app.add_subcommand("steady-state",
                                  "steady-state branch table");
    add_common(ss, a);
    auto* oc = app.add_subcommand("occupancy",
                                  "phonon occupancy, closed form and "
                                  "integral");
    add_common(oc, a);
    auto* om = app.add_subcommand("omit", "seed transmission spectrum");
    add_common(om, a);
    std::string dump_format = "csv";
    auto* si = app.add_subcommand("simulate",
                                  "stochastic time-domain simulation");
    add_common(si, a, true);
    si->add_option("--dump", dump_format, "time-series dump format")
        ->check(CLI::IsMember({"csv", "bin"}));
    auto* sd = app.add_subcommand("sweep-detuning",
                                  "spectra vs detuning (avoided crossing)");
    add_common(sd, a);
    auto* sg = app.add_subcommand("sweep-gain",
                                  "spectra vs feedback gain (weak to strong "
                                  "coupling)");
    add_common(sg, a);
    auto* cc = app.add_subcommand("cooling-curve",
                                  "phonon ratio vs feedback gain");
    add_common(cc, a);
    auto* ck = app.add_subcommand("check", "randomised invariant self-test");
    std::uint64_t check_seed = 0;
    int check_draws = 100;
    ck->add_option("--seed", check_seed, "RNG seed for the draws");
    ck->add_option("--draws", check_draws, "number of random systems");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (sp->parsed()) return cmd_spectrum(a);
        if (ss->parsed()) return cmd_steady_state(a);
        if (oc->parsed()) return cmd_occupancy(a);
        if (om->parsed()) return cmd_omit(a);
        if (si->parsed()) return cmd_simulate(a, dump_format);
        if (sd->parsed()) return cmd_sweep(a, "detuning");
        if (sg->parsed()) return cmd_sweep(a, "gain");
        if (cc->parsed()) return cmd_cooling_curve(a);
        if (ck->parsed()) return cmd_check(check_seed, check_draws);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const InstabilityError& e) {
        std::cerr << "instability: " << e.what() << "\n";
        return 2;
    } catch (const SingularityError& e) {
        std::cerr << "singularity: " << e.what() << "\n";
        return 2;
    } catch (const ConvergenceError& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
