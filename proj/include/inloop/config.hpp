#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "inloop/errors.hpp"
#include "inloop/filter_design.hpp"
#include "inloop/params.hpp"
#include "inloop/response.hpp"
#include "inloop/spectra.hpp"
#include "inloop/steady_state.hpp"

// JSON run configuration. External units throughout: Hz, W, K, s, kg;
// complex zeros/poles as [re_hz, im_hz] pairs. Files may carry //-comments.
//
// The feedback block either lists the filter explicitly (gain, zeros_hz,
// poles_hz, delay_s) or asks for calibration: {"calibrate": {kappa_eff_hz,
// delta_eff_hz, gamma_f_hz}} builds the band-pass loop that reproduces that
// effective cavity at the configured working point. The resolved config
// (and hence the manifest hash) always contains the explicit filter.

namespace inloop {

struct SweepOptions {
    std::string axis;  // "detuning" | "gain"
    std::vector<double> values;  // rad/s for detuning, G_fb for gain
};

struct RunConfig {
    PhysicalParams params;
    FeedbackFilter filter;
    bool has_n_s = false;
    double n_s = 0.0;  // pinned intracavity photon number, if given
    int branch = -1;   // steady-state branch index; -1 = lowest stable
    SpectrumOptions spectrum;
    std::optional<SweepOptions> sweep;
    std::optional<SweepOptions> cooling_curve;
    struct Sim {
        double dt = 0.0;
        double duration = 0.0;
        std::uint64_t seed = 1;
        int record_decimation = 1;
    } sim;
    std::string name;

    // Working point: pinned n_s when given, otherwise a steady-state
    // branch from the power budget (the lowest stable one unless an
    // explicit branch index is selected).
    [[nodiscard]] SteadyStateBranch working_point() const {
        if (has_n_s) return pinned_working_point(params, filter, n_s);
        const auto branches = solve_steady_state(params, filter);
        if (branch < 0) return lowest_stable_branch(branches);
        if (static_cast<std::size_t>(branch) >= branches.size())
            throw ConfigError("working_point: branch index " +
                              std::to_string(branch) + " out of range (" +
                              std::to_string(branches.size()) +
                              " branches)");
        return branches[static_cast<std::size_t>(branch)];
    }
};

namespace detail {

using nlohmann::json;

inline double require_number(const json& j, const std::string& key,
                             const std::string& ctx) {
    if (!j.contains(key) || !j[key].is_number())
        throw ConfigError("config: missing numeric field '" + key + "' in " +
                          ctx);
    return j[key].get<double>();
}

inline double number_or(const json& j, const std::string& key, double dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_number())
        throw ConfigError("config: field '" + key + "' must be numeric");
    return j[key].get<double>();
}

inline std::vector<complex> roots_from_json(const json& arr,
                                            const std::string& key) {
    std::vector<complex> out;
    if (!arr.is_array())
        throw ConfigError("config: '" + key + "' must be an array of "
                          "[re_hz, im_hz] pairs");
    for (const auto& e : arr) {
        if (!e.is_array() || e.size() != 2)
            throw ConfigError("config: '" + key + "' entries must be "
                              "[re_hz, im_hz] pairs");
        out.emplace_back(hz_to_rad(e[0].get<double>()),
                         hz_to_rad(e[1].get<double>()));
    }
    return out;
}

inline json roots_to_json(const std::vector<complex>& roots) {
    json arr = json::array();
    for (const auto& r : roots)
        arr.push_back(
            {hz_preserving_rad(r.real()), hz_preserving_rad(r.imag())});
    return arr;
}

}  // namespace detail

[[nodiscard]] inline RunConfig parse_config(const nlohmann::json& j) {
    using detail::number_or;
    using detail::require_number;

    RunConfig cfg;
    cfg.name = j.value("name", std::string("unnamed"));
    if (!j.contains("system"))
        throw ConfigError("config: missing 'system' table");
    const auto& sys = j["system"];

    PhysicalParams& p = cfg.params;
    p.omega_m = hz_to_rad(require_number(sys, "omega_m_hz", "system"));
    p.gamma_m = hz_to_rad(require_number(sys, "gamma_m_hz", "system"));
    p.kappa0 = hz_to_rad(require_number(sys, "kappa0_hz", "system"));
    p.kappa_prime = hz_to_rad(require_number(sys, "kappa_prime_hz", "system"));
    p.kappa_dprime = hz_to_rad(number_or(sys, "kappa_dprime_hz", 0.0));
    p.kappa = sys.contains("kappa_hz")
                  ? hz_to_rad(sys["kappa_hz"].get<double>())
                  : p.kappa0 + p.kappa_prime + p.kappa_dprime;
    p.eta = number_or(sys, "eta", 1.0);
    if (sys.contains("mass_kg") && !sys["mass_kg"].is_null())
        p.mass = sys["mass_kg"].get<double>();
    if (sys.contains("n_th"))
        p.n_th = sys["n_th"].get<double>();
    else if (sys.contains("temperature_k"))
        p.n_th = thermal_occupancy(sys["temperature_k"].get<double>(),
                                   p.omega_m);
    else
        throw ConfigError("config: system needs 'n_th' or 'temperature_k'");

    if (!j.contains("drive"))
        throw ConfigError("config: missing 'drive' table");
    const auto& drv = j["drive"];
    p.pump_power = require_number(drv, "power_w", "drive");
    p.laser_wavelength = require_number(drv, "wavelength_m", "drive");
    if (drv.contains("n_s")) {
        cfg.has_n_s = true;
        cfg.n_s = drv["n_s"].get<double>();
        if (!(cfg.n_s >= 0.0))
            throw ConfigError("config: drive.n_s must be >= 0");
    }
    if (drv.contains("branch"))
        cfg.branch = static_cast<int>(drv["branch"].get<double>());
    p.g0 = hz_to_rad(require_number(drv, "g0_hz", "drive"));
    if (drv.contains("detuning_hz")) {
        // effective detuning at the working point; needs the pinned n_s
        if (!cfg.has_n_s)
            throw ConfigError("config: 'detuning_hz' (effective) requires "
                              "'n_s'; use 'delta0_hz' for the bare detuning");
        const double delta = hz_to_rad(drv["detuning_hz"].get<double>());
        p.delta0 = delta + 2.0 * p.g0 * p.g0 * cfg.n_s / p.omega_m;
    } else if (drv.contains("delta0_hz")) {
        p.delta0 = hz_to_rad(drv["delta0_hz"].get<double>());
    } else {
        throw ConfigError("config: drive needs 'detuning_hz' or 'delta0_hz'");
    }
    p.validate();

    if (!j.contains("feedback"))
        throw ConfigError("config: missing 'feedback' table");
    const auto& fb = j["feedback"];
    FeedbackFilter& f = cfg.filter;
    f.delay = number_or(fb, "delay_s", 0.0);
    if (fb.contains("calibrate")) {
        const auto& cal = fb["calibrate"];
        if (!cfg.has_n_s)
            throw ConfigError("config: feedback calibration requires a "
                              "pinned drive.n_s");
        EffectiveCavity target{
            hz_to_rad(require_number(cal, "kappa_eff_hz", "calibrate")),
            hz_to_rad(require_number(cal, "delta_eff_hz", "calibrate"))};
        const double gamma_f =
            hz_to_rad(require_number(cal, "gamma_f_hz", "calibrate"));
        f = calibrate_loop_filter(p, cfg.n_s, target, gamma_f, f.delay);
    } else {
        f.gain = number_or(fb, "gain", 0.0);
        if (fb.contains("zeros_hz"))
            f.zeros = detail::roots_from_json(fb["zeros_hz"], "zeros_hz");
        if (fb.contains("poles_hz"))
            f.poles = detail::roots_from_json(fb["poles_hz"], "poles_hz");
    }
    f.validate();

    if (j.contains("spectrum")) {
        const auto& sp = j["spectrum"];
        const std::string mode = sp.value("mode", std::string("effective"));
        if (mode == "exact")
            cfg.spectrum.mode = ResponseMode::exact;
        else if (mode == "effective")
            cfg.spectrum.mode = ResponseMode::effective;
        else
            throw ConfigError("config: spectrum.mode must be 'exact' or "
                              "'effective'");
        cfg.spectrum.n_points =
            static_cast<std::size_t>(number_or(sp, "n_points", 3000.0));
        cfg.spectrum.span = hz_to_rad(number_or(sp, "span_hz", 0.0));
        cfg.spectrum.prominence = number_or(sp, "prominence", 1.05);
    }

    auto parse_grid = [&](const nlohmann::json& sw,
                          const std::string& ctx) -> SweepOptions {
        SweepOptions opt;
        opt.axis = sw.value("axis", std::string("gain"));
        if (sw.contains("values")) {
            for (const auto& v : sw["values"]) {
                const double x = v.get<double>();
                opt.values.push_back(opt.axis == "detuning" ? hz_to_rad(x)
                                                            : x);
            }
            if (opt.values.size() < 2)
                throw ConfigError("config: " + ctx + " needs >= 2 values");
            return opt;
        }
        const std::size_t count =
            static_cast<std::size_t>(number_or(sw, "count", 50.0));
        if (count < 2) throw ConfigError("config: " + ctx + ".count >= 2");
        double lo, hi;
        bool detuning = opt.axis == "detuning";
        if (detuning && sw.contains("relative_min")) {
            lo = sw["relative_min"].get<double>() * cfg.params.omega_m;
            hi = sw["relative_max"].get<double>() * cfg.params.omega_m;
        } else if (detuning) {
            lo = hz_to_rad(require_number(sw, "min_hz", ctx));
            hi = hz_to_rad(require_number(sw, "max_hz", ctx));
        } else {
            lo = require_number(sw, "min", ctx);
            hi = require_number(sw, "max", ctx);
        }
        if (!(hi > lo)) throw ConfigError("config: " + ctx + " grid empty");
        for (std::size_t i = 0; i < count; ++i)
            opt.values.push_back(lo + (hi - lo) * double(i) / double(count - 1));
        return opt;
    };
    if (j.contains("sweep")) {
        cfg.sweep = parse_grid(j["sweep"], "sweep");
        if (cfg.sweep->axis != "detuning" && cfg.sweep->axis != "gain")
            throw ConfigError("config: sweep.axis must be 'detuning' or "
                              "'gain'");
    }
    if (j.contains("cooling_curve")) {
        auto cc = j["cooling_curve"];
        cc["axis"] = "gain";
        cfg.cooling_curve = parse_grid(cc, "cooling_curve");
    }

    if (j.contains("simulation")) {
        const auto& sm = j["simulation"];
        cfg.sim.dt = require_number(sm, "dt_s", "simulation");
        cfg.sim.duration = require_number(sm, "duration_s", "simulation");
        cfg.sim.seed = static_cast<std::uint64_t>(number_or(sm, "seed", 1.0));
        cfg.sim.record_decimation =
            static_cast<int>(number_or(sm, "record_decimation", 1.0));
    }
    return cfg;
}

[[nodiscard]] inline nlohmann::json parse_json_text(const std::string& text,
                                                    const std::string& what) {
    auto j = nlohmann::json::parse(text, nullptr, false, true);
    if (j.is_discarded())
        throw ConfigError("config: failed to parse JSON from " + what);
    return j;
}

[[nodiscard]] inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(parse_json_text(ss.str(), path));
}

// Fully resolved configuration: explicit filter, derived occupancy and
// detuning, all external units. This is what the manifest hashes.
[[nodiscard]] inline nlohmann::json resolved_config(const RunConfig& cfg) {
    using nlohmann::json;
    const PhysicalParams& p = cfg.params;
    json j;
    j["name"] = cfg.name;
    j["system"] = {{"omega_m_hz", hz_preserving_rad(p.omega_m)},
                   {"gamma_m_hz", hz_preserving_rad(p.gamma_m)},
                   {"kappa_hz", hz_preserving_rad(p.kappa)},
                   {"kappa0_hz", hz_preserving_rad(p.kappa0)},
                   {"kappa_prime_hz", hz_preserving_rad(p.kappa_prime)},
                   {"kappa_dprime_hz", hz_preserving_rad(p.kappa_dprime)},
                   {"eta", p.eta},
                   {"n_th", p.n_th}};
    if (p.mass) j["system"]["mass_kg"] = *p.mass;
    j["drive"] = {{"power_w", p.pump_power},
                  {"wavelength_m", p.laser_wavelength},
                  {"g0_hz", hz_preserving_rad(p.g0)},
                  {"delta0_hz", hz_preserving_rad(p.delta0)}};
    if (cfg.has_n_s) j["drive"]["n_s"] = cfg.n_s;
    if (cfg.branch >= 0) j["drive"]["branch"] = cfg.branch;
    j["feedback"] = {{"gain", cfg.filter.gain},
                     {"zeros_hz", detail::roots_to_json(cfg.filter.zeros)},
                     {"poles_hz", detail::roots_to_json(cfg.filter.poles)},
                     {"delay_s", cfg.filter.delay}};
    j["spectrum"] = {{"mode", to_string(cfg.spectrum.mode)},
                     {"n_points", cfg.spectrum.n_points},
                     {"span_hz", hz_preserving_rad(cfg.spectrum.span)},
                     {"prominence", cfg.spectrum.prominence}};
    if (cfg.sweep) {
        json values = json::array();
        for (double v : cfg.sweep->values)
            values.push_back(cfg.sweep->axis == "detuning"
                                 ? hz_preserving_rad(v)
                                 : v);
        j["sweep"] = {{"axis", cfg.sweep->axis}, {"values", values}};
    }
    if (cfg.cooling_curve) {
        json values = json::array();
        for (double v : cfg.cooling_curve->values) values.push_back(v);
        j["cooling_curve"] = {{"axis", "gain"}, {"values", values}};
    }
    if (cfg.sim.dt > 0.0)
        j["simulation"] = {{"dt_s", cfg.sim.dt},
                           {"duration_s", cfg.sim.duration},
                           {"seed", cfg.sim.seed},
                           {"record_decimation", cfg.sim.record_decimation}};
    return j;
}

}  // namespace inloop
