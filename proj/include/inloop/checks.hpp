#pragma once

#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "inloop/filter_design.hpp"
#include "inloop/occupancy.hpp"
#include "inloop/params.hpp"
#include "inloop/response.hpp"
#include "inloop/spectra.hpp"
#include "inloop/steady_state.hpp"

// Randomised invariant suite behind the `check` subcommand: conjugate
// symmetries, zero-gain reductions, the kappa_eff = kappa (1 - G_fb)
// identity, the self-energy damping identity, spectrum nonnegativity and
// the equivalent-system rescaling identity.

namespace inloop {

struct CheckResult {
    std::string name;
    bool pass = false;
    int trials = 0;
    double worst = 0.0;  // worst relative error or margin seen
    std::string note;
};

namespace detail {

struct Draw {
    PhysicalParams p;
    FeedbackFilter f;
    double n_s;
    double g_fb;
};

// Random but physically sane system in the anti-squashing cooling regime.
inline Draw random_system(std::mt19937_64& rng) {
    auto uniform = [&](double lo, double hi) {
        return lo + (hi - lo) * std::generate_canonical<double, 53>(rng);
    };
    auto log_uniform = [&](double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    };
    Draw d;
    PhysicalParams& p = d.p;
    p.omega_m = hz_to_rad(log_uniform(1e5, 1e6));
    p.gamma_m = hz_to_rad(log_uniform(0.3, 30.0));
    p.kappa = p.omega_m * log_uniform(0.02, 0.12);
    const double split = uniform(0.3, 0.7);
    p.kappa0 = split * p.kappa;
    const double internal = uniform(0.0, 0.1);
    p.kappa_dprime = internal * p.kappa;
    p.kappa_prime = p.kappa - p.kappa0 - p.kappa_dprime;
    p.g0 = hz_to_rad(log_uniform(0.3, 3.0));
    p.eta = uniform(0.5, 1.0);
    p.n_th = log_uniform(1e5, 1e8);
    p.pump_power = 1e-5;
    p.laser_wavelength = 1064e-9;
    d.n_s = log_uniform(1e5, 1e7);
    // red detuned near the mechanical frequency
    const double delta = p.omega_m * uniform(0.9, 1.05);
    p.delta0 = delta + 2.0 * p.g0 * p.g0 * d.n_s / p.omega_m;
    p.validate();

    d.g_fb = uniform(0.3, 0.95);
    const double kappa_eff = p.kappa * (1.0 - d.g_fb);
    const double delta_eff = delta + uniform(-0.3, 0.7) * (p.omega_m - delta);
    d.f = calibrate_loop_filter(p, d.n_s, EffectiveCavity{kappa_eff, delta_eff},
                                p.kappa * log_uniform(2.0, 6.0));
    return d;
}

template <typename Fn>
CheckResult run_check(const std::string& name, int trials, std::uint64_t seed,
                      double tolerance, Fn&& worst_of_draw) {
    CheckResult r;
    r.name = name;
    r.trials = trials;
    r.pass = true;
    std::mt19937_64 rng(seed);
    for (int t = 0; t < trials; ++t) {
        Draw d = random_system(rng);
        double err = 0.0;
        try {
            err = worst_of_draw(d, rng);
        } catch (const std::exception& e) {
            r.pass = false;
            r.note = e.what();
            return r;
        }
        r.worst = std::max(r.worst, err);
    }
    if (!(r.worst <= tolerance)) r.pass = false;
    char buf[32];
    std::snprintf(buf, sizeof buf, "tolerance %.1e", tolerance);
    r.note = buf;
    return r;
}

inline double rel_err(complex a, complex b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale;
}

}  // namespace detail

[[nodiscard]] inline std::vector<CheckResult> run_invariant_checks(
    std::uint64_t seed = 2026, int trials = 100) {
    using detail::Draw;
    using detail::rel_err;
    std::vector<CheckResult> out;

    out.push_back(detail::run_check(
        "conjugate symmetry chi_m / chi_fb", trials, seed ^ 0x1, 1e-12,
        [](const Draw& d, std::mt19937_64& rng) {
            std::uniform_real_distribution<double> u(-3.0, 3.0);
            double worst = 0.0;
            for (int k = 0; k < 8; ++k) {
                const double w = u(rng) * d.p.omega_m;
                worst = std::max(
                    worst,
                    rel_err(chi_m(-w, d.p.omega_m, d.p.gamma_m),
                            std::conj(chi_m(w, d.p.omega_m, d.p.gamma_m))));
                worst = std::max(
                    worst, rel_err(chi_fb(-w, d.p, d.f, d.n_s),
                                   std::conj(chi_fb(w, d.p, d.f, d.n_s))));
            }
            return worst;
        }));

    out.push_back(detail::run_check(
        "zero-gain reduction chi_c_eff == chi_c", trials, seed ^ 0x2, 1e-14,
        [](const Draw& d, std::mt19937_64& rng) {
            std::uniform_real_distribution<double> u(0.2, 2.0);
            FeedbackFilter off = d.f;
            off.gain = 0.0;
            const double delta = detuning_at(d.p, d.n_s);
            double worst = 0.0;
            for (int k = 0; k < 8; ++k) {
                const double w = u(rng) * d.p.omega_m;
                worst = std::max(
                    worst, rel_err(chi_c_eff_exact(w, d.p, off, d.n_s),
                                   chi_c(w, d.p.kappa, delta)));
            }
            return worst;
        }));

    out.push_back(detail::run_check(
        "kappa_eff = kappa (1 - G_fb)", trials, seed ^ 0x3, 1e-12,
        [](const Draw& d, std::mt19937_64&) {
            const EffectiveCavity eff = effective_cavity(d.p, d.f, d.n_s);
            const double g = normalized_gain(d.p, d.f, d.n_s);
            const double want = d.p.kappa * (1.0 - g);
            return std::abs(eff.kappa_eff - want) / d.p.kappa;
        }));

    out.push_back(detail::run_check(
        "kappa_eff linearity in the loop gain", trials, seed ^ 0x4, 1e-9,
        [](const Draw& d, std::mt19937_64& rng) {
            std::uniform_real_distribution<double> u(0.1, 0.9);
            const double s = u(rng);
            const EffectiveCavity base = effective_cavity(d.p, d.f, d.n_s);
            const EffectiveCavity scaled =
                effective_cavity(d.p, d.f.scaled(s), d.n_s);
            const double want = d.p.kappa + s * (base.kappa_eff - d.p.kappa);
            return std::abs(scaled.kappa_eff - want) / d.p.kappa;
        }));

    out.push_back(detail::run_check(
        "self-energy damping identity -Im Sigma(omega_m) = A- - A+", trials,
        seed ^ 0x5, 1e-12, [](const Draw& d, std::mt19937_64&) {
            const EffectiveCavity eff = effective_cavity(d.p, d.f, d.n_s);
            const double G = coupling_G(d.p, d.n_s);
            const CavityResponse chi = CavityResponse::lorentzian(eff);
            const CoolingRates r = cooling_rates(d.p, eff, G);
            const double lhs = -sigma_eff(d.p.omega_m, G, chi).imag();
            const double rhs = r.gamma_eff;
            return std::abs(lhs - rhs) /
                   std::max({std::abs(lhs), std::abs(rhs), 1e-300});
        }));

    out.push_back(detail::run_check(
        "S_qq nonnegativity (exact mode)", trials, seed ^ 0x6, 0.0,
        [](const Draw& d, std::mt19937_64&) {
            const SteadyStateBranch wp =
                pinned_working_point(d.p, d.f, d.n_s);
            const EffectiveCavity eff = effective_cavity(d.p, d.f, d.n_s);
            const double G = coupling_G(d.p, d.n_s);
            const auto grid = make_spectrum_grid(d.p, eff, G, 600);
            const SpectrumGrid g = s_qq_exact(grid, d.p, d.f, wp);
            double worst = 0.0;
            for (double v : g.s_total)
                worst = std::max(worst, v < 0.0 ? -v : 0.0);
            return worst;
        }));

    out.push_back(detail::run_check(
        "equivalent-system rescaling S_qq = S'_qq (k+Z)/k", trials, seed ^ 0x7,
        1e-10, [](const Draw& d, std::mt19937_64& rng) {
            const EffectiveCavity eff = effective_cavity(d.p, d.f, d.n_s);
            const double G = coupling_G(d.p, d.n_s);
            const double delta = detuning_at(d.p, d.n_s);
            const double z = z_delta(d.p, delta, eff);
            const double k = eff.kappa_eff;
            // primed system: thermal bath at the modified occupancy
            const double n_prime =
                (2.0 * d.p.n_th * k - z) / (2.0 * (k + z));
            PhysicalParams prim = d.p;
            prim.n_th = n_prime;
            std::uniform_real_distribution<double> u(0.8, 1.2);
            double worst = 0.0;
            for (int j = 0; j < 6; ++j) {
                const double w = u(rng) * d.p.omega_m;
                const std::vector<double> one{w};
                const SpectrumGrid lhs = s_qq_approx(one, eff, d.p, G, z);
                const SpectrumGrid rhs_prim =
                    s_qq_approx(one, eff, prim, G, 0.0);
                const double rhs = rhs_prim.s_total[0] * (k + z) / k;
                worst = std::max(worst,
                                 std::abs(lhs.s_total[0] - rhs) /
                                     std::max(lhs.s_total[0], 1e-300));
            }
            return worst;
        }));

    out.push_back(detail::run_check(
        "dressed-mode passivity below threshold", trials, seed ^ 0x8, 0.0,
        [](const Draw& d, std::mt19937_64&) {
            const EffectiveCavity eff = effective_cavity(d.p, d.f, d.n_s);
            const double G = coupling_G(d.p, d.n_s);
            const CavityResponse chi = CavityResponse::lorentzian(eff);
            for (int k = -40; k <= 40; ++k) {
                const double w = d.p.omega_m * (0.05 + 0.05 * (k + 40));
                const complex v = chi_m_o_eff(w, d.p, G, chi);
                if (!std::isfinite(std::abs(v))) return 1.0;
            }
            return 0.0;
        }));

    return out;
}

}  // namespace inloop
