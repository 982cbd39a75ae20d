#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "inloop/errors.hpp"
#include "inloop/params.hpp"
#include "inloop/response.hpp"

// Self-consistent classical working point of the driven cavity, including
// the feedback DC offset and radiation-pressure bistability.

namespace inloop {

struct SteadyStateBranch {
    double n_s = 0.0;      // intracavity photons, alpha_s^2
    double alpha_s = 0.0;  // sqrt(n_s)
    double q_s = 0.0;      // static dimensionless displacement
    double delta = 0.0;    // effective detuning Delta = Delta0 - sqrt2 g0 q_s
    double phi_bar = 0.0;  // averaged feedback response
    bool stable = true;
};

namespace detail {

// Residual of the scalar fixed point equation
//   f(n) = n (kappa^2 + Delta(n)^2) - 2 kappa0 (E + Phi_bar(n))^2,
// whose nonnegative roots are the steady-state photon numbers.
struct SteadyStateResidual {
    const PhysicalParams& p;
    double pump;     // E
    double dc_coef;  // Phi_bar(n) = dc_coef * n

    [[nodiscard]] double operator()(double n) const {
        const double delta = detuning_at(p, n);
        const double drive = pump + dc_coef * n;
        return n * (p.kappa * p.kappa + delta * delta) -
               2.0 * p.kappa0 * drive * drive;
    }

    [[nodiscard]] double slope(double n) const {
        const double h = std::max(n, 1.0) * 1e-7;
        return ((*this)(n + h) - (*this)(std::max(n - h, 0.0))) /
               (n + h - std::max(n - h, 0.0));
    }
};

// Bisect to the representable resolution; the contract only needs 1e-12
// relative but the extra iterations cost nothing here.
inline double refine_root(const SteadyStateResidual& f, double lo, double hi) {
    double flo = f(lo);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) return mid;
        const double fm = f(mid);
        if ((flo <= 0.0) == (fm <= 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

inline SteadyStateBranch make_branch(const PhysicalParams& p, double n_s,
                                     double phi_bar, bool stable) {
    SteadyStateBranch b;
    b.n_s = n_s;
    b.alpha_s = std::sqrt(std::max(n_s, 0.0));
    b.q_s = std::sqrt(2.0) * p.g0 * n_s / p.omega_m;
    b.delta = detuning_at(p, n_s);
    b.phi_bar = phi_bar;
    b.stable = stable;
    return b;
}

// All real nonnegative roots of the fixed-point equation, ordered by n_s,
// refined to relative tolerance 1e-12, with the stability of each branch
// classified by the slope of the residual (middle branch of a bistable
// triple is unstable).
[[nodiscard]] inline std::vector<SteadyStateBranch> solve_steady_state(
    const PhysicalParams& p, const FeedbackFilter& f) {
    p.validate();
    f.validate();
    const double pump = pump_amplitude(p);
    // Phi_bar = 2 eta kappa' n g~(0); band-pass loops have g~(0) = 0.
    const double dc_coef = 2.0 * p.eta * p.kappa_prime * f.dc_gain();
    detail::SteadyStateResidual residual{p, pump, dc_coef};

    std::vector<SteadyStateBranch> out;
    if (pump == 0.0 && dc_coef == 0.0) {
        out.push_back(make_branch(p, 0.0, 0.0, true));
        return out;
    }

    // Upper bracket: the undetuned photon number with a safety factor of 2,
    // expanded while the residual stays negative (it grows like n^3 for
    // g0 > 0). A positive DC loop gain can make the residual concave with
    // f -> -inf instead; the expansion is capped and the scan then hunts
    // for the interior root pair.
    double n_max =
        std::max(1.0, 2.0 * 2.0 * p.kappa0 * pump * pump / (p.kappa * p.kappa));
    while (residual(n_max) <= 0.0 && n_max < 1e25) n_max *= 2.0;

    auto scan_range = [&](auto next_point) {
        double prev_n = 0.0;
        double prev_f = residual(0.0);
        if (prev_f == 0.0)
            out.push_back(
                make_branch(p, 0.0, 0.0, residual.slope(0.0) > 0.0));
        for (double n = next_point(0.0); n > 0.0 && n <= n_max;
             n = next_point(n)) {
            const double fn = residual(n);
            if ((prev_f < 0.0 && fn >= 0.0) || (prev_f > 0.0 && fn <= 0.0)) {
                const double root =
                    detail::refine_root(residual, prev_n, n);
                out.push_back(make_branch(p, root, dc_coef * root,
                                          residual.slope(root) > 0.0));
            }
            prev_n = n;
            prev_f = fn;
        }
    };

    if (residual(n_max) > 0.0) {
        const double step = n_max / 20000.0;
        scan_range([step](double n) { return n + step; });
    } else {
        // runaway side: geometric scan catches the root pair below the cap
        const double n_lo = std::min(
            1e-3, 1e-9 * 2.0 * p.kappa0 * pump * pump / (p.kappa * p.kappa));
        const double ratio = std::pow(n_max / std::max(n_lo, 1e-30),
                                      1.0 / 40000.0);
        scan_range([n_lo, ratio](double n) {
            return n == 0.0 ? std::max(n_lo, 1e-30) : n * ratio;
        });
        if (out.empty())
            throw ConfigError(
                "solve_steady_state: no finite steady state (runaway DC "
                "feedback gain)");
    }

    if (out.empty())
        throw ConfigError("solve_steady_state: no steady-state root found");
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.n_s < b.n_s; });
    return out;
}

// Working point pinned at a given intracavity photon number (used when the
// coupling G is calibrated from measured values instead of the power budget).
[[nodiscard]] inline SteadyStateBranch pinned_working_point(
    const PhysicalParams& p, const FeedbackFilter& f, double n_s) {
    if (!(n_s >= 0.0))
        throw ConfigError("pinned_working_point: n_s must be >= 0");
    const double phi_bar = 2.0 * p.eta * p.kappa_prime * f.dc_gain() * n_s;
    return make_branch(p, n_s, phi_bar, true);
}

// Lowest stable branch, the usual working point below the bistability onset.
[[nodiscard]] inline const SteadyStateBranch& lowest_stable_branch(
    const std::vector<SteadyStateBranch>& branches) {
    for (const auto& b : branches)
        if (b.stable) return b;
    throw InstabilityError("lowest_stable_branch: no stable branch");
}

// Many-photon optomechanical coupling G = g0 sqrt(2 n_s).
[[nodiscard]] inline double coupling_G(const PhysicalParams& p, double n_s) {
    if (!(n_s >= 0.0)) throw ConfigError("coupling_G: n_s must be >= 0");
    return p.g0 * std::sqrt(2.0 * n_s);
}

// Effective cooperativity C_eff = 2 G^2 / (kappa_eff gamma_m).
[[nodiscard]] inline double cooperativity(double coupling_g, double kappa_eff,
                                          double gamma_m) {
    if (!(kappa_eff > 0.0))
        throw InstabilityError("cooperativity: kappa_eff must be positive");
    return 2.0 * coupling_g * coupling_g / (kappa_eff * gamma_m);
}

}  // namespace inloop
