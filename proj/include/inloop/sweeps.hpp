#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "inloop/csv.hpp"
#include "inloop/errors.hpp"
#include "inloop/filter_design.hpp"
#include "inloop/occupancy.hpp"
#include "inloop/params.hpp"
#include "inloop/response.hpp"
#include "inloop/spectra.hpp"
#include "inloop/steady_state.hpp"

// Parameter sweeps over detuning and feedback gain. Grid points run on a
// shared task queue; per-point failures are recorded and counted, never
// abort the sweep; output rows are written in grid order.

namespace inloop {

struct SweepPoint {
    double axis_value = 0.0;  // detuning (rad/s) or normalised gain
    bool ok = false;
    std::string error;
    double g_fb = 0.0;
    double kappa_eff = 0.0;
    double delta_eff = 0.0;
    double coupling = 0.0;
    NormalModes modes;
    SpectrumGrid spectrum;
};

struct SweepSummary {
    std::string axis;
    std::size_t failures = 0;
    // detuning sweeps: avoided-crossing gap
    double min_gap = std::numeric_limits<double>::quiet_NaN();
    double min_gap_axis = std::numeric_limits<double>::quiet_NaN();
    // gain sweeps: single->double transition and max-gain splitting
    double transition_gain = std::numeric_limits<double>::quiet_NaN();
    double transition_g_over_kappa =
        std::numeric_limits<double>::quiet_NaN();
    double max_gain_splitting = std::numeric_limits<double>::quiet_NaN();
    double implied_g_raw = std::numeric_limits<double>::quiet_NaN();
    double implied_g = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
    std::vector<SweepPoint> points;
    SweepSummary summary;
};

namespace detail {

template <typename Fn>
void parallel_for_points(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads,
                                 static_cast<unsigned>(std::max<std::size_t>(n, 1)));
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

}  // namespace detail

// Detuning sweep at fixed loop gain. The pump amplitude is held at the value
// implied by (n_s_ref, delta_ref), so the photon number follows the cavity
// Lorentzian as the detuning moves, exactly as when the laser is stepped.
[[nodiscard]] inline SweepResult sweep_detuning(
    const PhysicalParams& p, const FeedbackFilter& f, double n_s_ref,
    double delta_ref, const std::vector<double>& detunings,
    const SpectrumOptions& opt, unsigned threads = 0) {
    const double drive_scale =
        n_s_ref * (p.kappa * p.kappa + delta_ref * delta_ref);

    SweepResult res;
    res.summary.axis = "detuning";
    res.points.resize(detunings.size());
    detail::parallel_for_points(
        detunings.size(), threads, [&](std::size_t i) {
            SweepPoint& pt = res.points[i];
            pt.axis_value = detunings[i];
            try {
                const double delta = detunings[i];
                const double n_s =
                    drive_scale / (p.kappa * p.kappa + delta * delta);
                PhysicalParams pd = p;
                pd.delta0 = delta + 2.0 * p.g0 * p.g0 * n_s / p.omega_m;
                const SteadyStateBranch wp = pinned_working_point(pd, f, n_s);
                const EffectiveCavity eff = effective_cavity(pd, f, n_s);
                pt.g_fb = normalized_gain(pd, f, n_s);
                pt.kappa_eff = eff.kappa_eff;
                pt.delta_eff = eff.delta_eff;
                pt.coupling = coupling_G(pd, n_s);
                const auto grid = make_spectrum_grid(pd, eff, pt.coupling,
                                                     opt.n_points, opt.span);
                pt.spectrum =
                    opt.mode == ResponseMode::exact
                        ? s_qq_exact(grid, pd, f, wp)
                        : s_qq_approx(grid, eff, pd, pt.coupling,
                                      z_delta(pd, delta, eff));
                pt.modes = find_normal_modes(pt.spectrum, opt.prominence);
                pt.ok = true;
            } catch (const std::exception& e) {
                pt.error = e.what();
            }
        });

    double best = std::numeric_limits<double>::infinity();
    for (const auto& pt : res.points) {
        if (!pt.ok) {
            ++res.summary.failures;
            continue;
        }
        if (!pt.modes.single_peaked && pt.modes.splitting < best) {
            best = pt.modes.splitting;
            res.summary.min_gap = pt.modes.splitting;
            res.summary.min_gap_axis = pt.axis_value;
        }
    }
    return res;
}

// Gain sweep at fixed detuning. The axis is the normalised gain G_fb; the
// filter's scalar gain is rescaled per point so the x-axis matches the
// normalisation exactly.
[[nodiscard]] inline SweepResult sweep_gain(const PhysicalParams& p,
                                            const FeedbackFilter& f,
                                            double n_s,
                                            const std::vector<double>& gains,
                                            const SpectrumOptions& opt,
                                            unsigned threads = 0) {
    SweepResult res;
    res.summary.axis = "gain";
    res.points.resize(gains.size());
    const double delta = detuning_at(p, n_s);
    detail::parallel_for_points(gains.size(), threads, [&](std::size_t i) {
        SweepPoint& pt = res.points[i];
        pt.axis_value = gains[i];
        try {
            const FeedbackFilter fg = with_normalized_gain(f, p, n_s, gains[i]);
            const SteadyStateBranch wp = pinned_working_point(p, fg, n_s);
            const EffectiveCavity eff = effective_cavity(p, fg, n_s);
            pt.g_fb = normalized_gain(p, fg, n_s);
            pt.kappa_eff = eff.kappa_eff;
            pt.delta_eff = eff.delta_eff;
            pt.coupling = coupling_G(p, n_s);
            const auto grid = make_spectrum_grid(p, eff, pt.coupling,
                                                 opt.n_points, opt.span);
            pt.spectrum = opt.mode == ResponseMode::exact
                              ? s_qq_exact(grid, p, fg, wp)
                              : s_qq_approx(grid, eff, p, pt.coupling,
                                            z_delta(p, delta, eff));
            pt.modes = find_normal_modes(pt.spectrum, opt.prominence);
            pt.ok = true;
        } catch (const std::exception& e) {
            pt.error = e.what();
        }
    });

    // transition gain: midpoint between the last single-peaked and the first
    // double-peaked point of the ordered grid
    const SweepPoint* prev = nullptr;
    for (const auto& pt : res.points) {
        if (!pt.ok) {
            ++res.summary.failures;
            continue;
        }
        if (prev && prev->modes.single_peaked && !pt.modes.single_peaked &&
            !std::isfinite(res.summary.transition_gain)) {
            res.summary.transition_gain =
                0.5 * (prev->axis_value + pt.axis_value);
            const double kappa_mid = 0.5 * (prev->kappa_eff + pt.kappa_eff);
            res.summary.transition_g_over_kappa = pt.coupling / kappa_mid;
        }
        prev = &pt;
    }
    for (auto it = res.points.rbegin(); it != res.points.rend(); ++it) {
        if (!it->ok) continue;
        if (!it->modes.single_peaked) {
            res.summary.max_gain_splitting = it->modes.splitting;
            res.summary.implied_g_raw =
                it->modes.splitting / std::sqrt(2.0);
            // account for the residual cavity-mechanics detuning of the
            // model: splitting^2 = 2 G^2 + (delta_eff - omega_m)^2
            const double dm = it->delta_eff - p.omega_m;
            const double s2 = it->modes.splitting * it->modes.splitting;
            res.summary.implied_g =
                std::sqrt(std::max(s2 - dm * dm, 0.0) / 2.0);
        }
        break;
    }
    return res;
}

// Long-format matrix CSV: axis_value, omega_hz, s_th, s_rp, s_fb, s_total.
inline void write_sweep_csv(const SweepResult& res, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("sweep: cannot write '" + path + "'");
    out << "# spectral densities: one-sided, per Hz\n";
    out << "# axis: " << res.summary.axis << "\n";
    const bool detuning = res.summary.axis == "detuning";
    out << "axis_value,omega_hz,s_th,s_rp,s_fb,s_total,status\n";
    for (const auto& pt : res.points) {
        const std::string axis = format_double(
            detuning ? rad_to_hz(pt.axis_value) : pt.axis_value);
        if (!pt.ok) {
            out << axis << ",,,,,,failed\n";
            continue;
        }
        const auto& g = pt.spectrum;
        for (std::size_t i = 0; i < g.omega.size(); ++i) {
            out << axis << ',' << format_double(rad_to_hz(g.omega[i])) << ','
                << format_double(one_sided_hz_factor * g.s_thermal[i]) << ','
                << format_double(one_sided_hz_factor * g.s_rp[i]) << ','
                << format_double(one_sided_hz_factor * g.s_fb[i]) << ','
                << format_double(one_sided_hz_factor * g.s_total[i])
                << ",ok\n";
        }
    }
}

[[nodiscard]] inline nlohmann::json sweep_summary_json(const SweepResult& res) {
    using nlohmann::json;
    const bool detuning = res.summary.axis == "detuning";
    json traces = json::array();
    for (const auto& pt : res.points) {
        json row;
        row["axis_value"] =
            detuning ? rad_to_hz(pt.axis_value) : pt.axis_value;
        row["ok"] = pt.ok;
        if (pt.ok) {
            row["g_fb"] = pt.g_fb;
            row["kappa_eff_hz"] = rad_to_hz(pt.kappa_eff);
            row["delta_eff_hz"] = rad_to_hz(pt.delta_eff);
            row["single_peaked"] = pt.modes.single_peaked;
            row["omega_plus_hz"] = rad_to_hz(pt.modes.omega_plus);
            row["omega_minus_hz"] = rad_to_hz(pt.modes.omega_minus);
            row["splitting_hz"] = rad_to_hz(pt.modes.splitting);
        } else {
            row["error"] = pt.error;
        }
        traces.push_back(row);
    }
    json j;
    j["axis"] = res.summary.axis;
    j["failures"] = res.summary.failures;
    j["points"] = traces;
    if (detuning) {
        j["min_gap_hz"] = rad_to_hz(res.summary.min_gap);
        j["min_gap_at_detuning_hz"] = rad_to_hz(res.summary.min_gap_axis);
    } else {
        j["transition_gain"] = res.summary.transition_gain;
        j["transition_g_over_kappa_eff"] =
            res.summary.transition_g_over_kappa;
        j["max_gain_splitting_hz"] = rad_to_hz(res.summary.max_gain_splitting);
        j["implied_g_raw_hz"] = rad_to_hz(res.summary.implied_g_raw);
        j["implied_g_hz"] = rad_to_hz(res.summary.implied_g);
    }
    return j;
}

}  // namespace inloop
