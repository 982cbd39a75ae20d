#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "inloop/errors.hpp"
#include "inloop/params.hpp"
#include "inloop/response.hpp"

// Construction and calibration of loop filters. The reference loop is known
// only through its effect on (kappa_eff, delta_eff), so the model uses
// DC-blocking rational filters whose pole/zero placement sets the loop
// phase and whose (real, possibly negative) gain sets the magnitude. The
// calibrator prefers slope-nulled shapes (chi_fb essentially constant
// across the signal band, the regime in which the narrow-band description
// applies) and falls back to plain resonant band-passes, whose single pole
// pair covers loop phases over a band of width 2 arctan(Delta/gamma_f)
// (mod pi), cascading a second section when the phase falls outside.

namespace inloop {

// Band-pass with `sections` cascaded biquads: each contributes a zero at
// s = 0 (no DC response, hence no steady-state feedback offset) and poles
// at -gamma_f +/- i omega0.
[[nodiscard]] inline FeedbackFilter band_pass_filter(double omega0,
                                                     double gamma_f,
                                                     double gain = 1.0,
                                                     double delay = 0.0,
                                                     int sections = 1) {
    if (!(omega0 > 0.0) || !(gamma_f > 0.0))
        throw ConfigError("band_pass_filter: omega0 and gamma_f must be > 0");
    if (sections < 1 || sections > 4)
        throw ConfigError("band_pass_filter: sections must be 1..4");
    FeedbackFilter f;
    f.gain = gain;
    for (int s = 0; s < sections; ++s) {
        f.zeros.emplace_back(0.0, 0.0);
        f.poles.emplace_back(-gamma_f, omega0);
        f.poles.emplace_back(-gamma_f, -omega0);
    }
    f.delay = delay;
    f.validate();
    return f;
}

// Rescale the filter gain so that the normalised loop gain
// G_fb = -Im chi_fb(Delta) / kappa hits `target` exactly.
[[nodiscard]] inline FeedbackFilter with_normalized_gain(
    const FeedbackFilter& f, const PhysicalParams& p, double n_s,
    double target) {
    if (target == 0.0) {
        FeedbackFilter off = f;
        off.gain = 0.0;
        return off;
    }
    const double current = normalized_gain(p, f, n_s);
    if (current == 0.0)
        throw ConfigError("with_normalized_gain: filter has no loop response "
                          "at the working detuning");
    return f.scaled(target / current);
}

namespace detail {

inline double wrap_half_pi(double d) {
    while (d > 0.5 * pi) d -= pi;
    while (d <= -0.5 * pi) d += pi;
    return d;
}

// d/domega ln g~(omega): zeros and poles contribute -i/(-i w - r), the
// delay contributes +i tau.
inline complex log_derivative(const FeedbackFilter& f, double omega) {
    const complex s(0.0, -omega);
    complex out(0.0, f.delay);
    for (const auto& z : f.zeros) out += complex(0.0, -1.0) / (s - z);
    for (const auto& p : f.poles) out -= complex(0.0, -1.0) / (s - p);
    return out;
}

// Loop-shaped band filter: two pole pairs bracketing the signal band plus a
// complex zero pair (a lead section), tuned so that the loop phase at Delta
// matches psi (mod pi) while both the magnitude and phase slopes of g~
// vanish at the band anchor. Under this Fourier convention poles and the
// delay can only pull the phase slope positive; a complex zero pair is the
// element that can flatten it, so every structure template carries one.
inline FeedbackFilter flat_band_filter(double delta, double anchor,
                                       double gamma_low, double psi,
                                       double delay = 0.0) {
    const double lo[3] = {0.05 * anchor, 0.02 * anchor, 1.25 * anchor};
    const double hi[3] = {3.00 * anchor, 2.50 * anchor, 9.0 * anchor};

    // structure menu: lead sections (left-half-plane zero pair) and
    // allpass-like phase shifters (right-half-plane zero pair, still causal
    // and stable); a low real pole or a second DC zero trades pi/2 of
    // phase headroom
    struct Template {
        double zero_sign;  // -1 LHP, +1 RHP
        int dc_zeros;      // 1 or 2
        bool real_pole;
        double w1_frac;
    };
    std::vector<Template> templates;
    for (double w1_frac : {0.40, 0.20, 0.70})
        for (double zero_sign : {-1.0, 1.0})
            for (int variant : {0, 1, 2})  // plain, +real pole, +DC zero & pole
                templates.push_back({zero_sign, variant == 2 ? 2 : 1,
                                     variant != 0, w1_frac});
    for (const Template& tpl : templates) {
        const double w1 = tpl.w1_frac * anchor;
        auto build = [&](double wz, double gz, double w2) {
            FeedbackFilter f;
            f.gain = 1.0;
            f.delay = delay;
            f.zeros = {complex(0.0, 0.0),
                       complex(tpl.zero_sign * gz, wz),
                       complex(tpl.zero_sign * gz, -wz)};
            f.poles = {complex(-gamma_low, w1), complex(-gamma_low, -w1),
                       complex(-gamma_low, w2), complex(-gamma_low, -w2)};
            if (tpl.dc_zeros > 1) f.zeros.emplace_back(0.0, 0.0);
            if (tpl.real_pole) f.poles.emplace_back(-0.12 * anchor, 0.0);
            return f;
        };
        auto residual = [&](const double x[3], double out[3]) {
            const FeedbackFilter f = build(x[0], x[1], x[2]);
            out[0] = 2.0 * wrap_half_pi(std::arg(f.response(delta)) - psi);
            const complex slope = log_derivative(f, anchor) * anchor;
            out[1] = slope.real();
            out[2] = slope.imag();
        };
        auto score_of = [&](const double r[3]) {
            return r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        };

        // multistart: best grid seeds, then damped Gauss-Newton on each
        struct Seed {
            double x[3];
            double score;
        };
        std::vector<Seed> seeds;
        for (int iz = 0; iz < 24; ++iz) {
            const double wz = lo[0] * std::pow(hi[0] / lo[0], iz / 23.0);
            for (int ig = 0; ig < 7; ++ig) {
                const double gz = lo[1] * std::pow(hi[1] / lo[1], ig / 6.0);
                for (int i2 = 0; i2 < 12; ++i2) {
                    const double w2 =
                        lo[2] * std::pow(hi[2] / lo[2], i2 / 11.0);
                    double x[3] = {wz, gz, w2}, r[3];
                    residual(x, r);
                    seeds.push_back({{wz, gz, w2}, score_of(r)});
                }
            }
        }
        std::sort(seeds.begin(), seeds.end(),
                  [](const Seed& a, const Seed& b) {
                      return a.score < b.score;
                  });
        seeds.resize(std::min<std::size_t>(seeds.size(), 6));

        for (const Seed& seed : seeds) {
            double x[3] = {seed.x[0], seed.x[1], seed.x[2]};
            double r[3];
            residual(x, r);
            double current = score_of(r);
            for (int it = 0; it < 80 && current > 1e-22; ++it) {
                double jac[3][3];
                for (int j = 0; j < 3; ++j) {
                    double xp[3] = {x[0], x[1], x[2]};
                    const double h =
                        1e-7 * std::max(std::abs(x[j]), 1e-3 * anchor);
                    xp[j] += h;
                    double rp[3];
                    residual(xp, rp);
                    for (int i = 0; i < 3; ++i)
                        jac[i][j] = (rp[i] - r[i]) / h;
                }
                const double det =
                    jac[0][0] *
                        (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1]) -
                    jac[0][1] *
                        (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0]) +
                    jac[0][2] *
                        (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
                if (det == 0.0 || !std::isfinite(det)) break;
                auto solve_col = [&](int col) {
                    double m[3][3];
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j)
                            m[i][j] = (j == col) ? -r[i] : jac[i][j];
                    return (m[0][0] *
                                (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                            m[0][1] *
                                (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                            m[0][2] *
                                (m[1][0] * m[2][1] - m[1][1] * m[2][0])) /
                           det;
                };
                const double step[3] = {solve_col(0), solve_col(1),
                                        solve_col(2)};
                // backtracking line search with clamping
                bool improved = false;
                for (double damp = 1.0; damp >= 1.0 / 64.0; damp *= 0.5) {
                    double xt[3], rt[3];
                    for (int j = 0; j < 3; ++j) {
                        xt[j] = x[j] + damp * step[j];
                        xt[j] = std::min(std::max(xt[j], lo[j]), hi[j]);
                    }
                    residual(xt, rt);
                    const double st = score_of(rt);
                    if (st < current) {
                        for (int j = 0; j < 3; ++j) x[j] = xt[j];
                        for (int i = 0; i < 3; ++i) r[i] = rt[i];
                        current = st;
                        improved = true;
                        break;
                    }
                }
                if (!improved) break;
            }
            if (std::abs(r[0]) <= 2e-8 && std::hypot(r[1], r[2]) <= 0.1) {
                const FeedbackFilter f = build(x[0], x[1], x[2]);
                f.validate();
                return f;
            }
        }
    }
    throw ConvergenceError("flat_band_filter: flatness target not met");
}

// Zero of the wrapped phase mismatch arg g~(Delta) - psi (mod pi) in the
// band-pass centre frequency; NaN when no crossing exists.
inline double solve_centre_frequency(double delta, double gamma_f,
                                     int sections, double psi,
                                     double delay = 0.0) {
    auto mismatch = [&](double omega0) {
        const FeedbackFilter trial =
            band_pass_filter(omega0, gamma_f, 1.0, delay, sections);
        double d = std::arg(trial.response(delta)) - psi;
        while (d > 0.5 * pi) d -= pi;
        while (d <= -0.5 * pi) d += pi;
        return d;
    };
    const double lo0 = 1e-3 * std::abs(delta);
    const double hi0 = 8.0 * std::abs(delta);
    const int n_scan = 4000;
    double prev_w = lo0, prev_m = mismatch(lo0);
    for (int i = 1; i <= n_scan; ++i) {
        const double w = lo0 * std::pow(hi0 / lo0, double(i) / n_scan);
        const double m = mismatch(w);
        // genuine zero crossing, not a wrap discontinuity
        if (prev_m * m <= 0.0 && std::abs(m - prev_m) < 0.5 * pi) {
            double a = prev_w, b = w, fa = prev_m;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (a + b);
                const double fm = mismatch(mid);
                if ((fa <= 0.0) == (fm <= 0.0)) {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            return 0.5 * (a + b);
        }
        prev_w = w;
        prev_m = m;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

// Calibrate a band-pass loop so that chi_fb(Delta) lands exactly on the
// value implied by a target (kappa_eff, delta_eff):
//     chi_fb(Delta) = (Delta - delta_eff) + i (kappa_eff - kappa).
// The slope-nulled two-section filter is tried first, so the loop response
// stays essentially constant across the signal band (the regime in which
// the narrow-band (kappa_eff, delta_eff) description of the loop applies).
// Plain one- and two-section band-passes act as fallbacks.
[[nodiscard]] inline FeedbackFilter calibrate_loop_filter(
    const PhysicalParams& p, double n_s, const EffectiveCavity& target,
    double gamma_f, double delay = 0.0) {
    const double delta = detuning_at(p, n_s);
    if (!(delta != 0.0))
        throw ConfigError("calibrate_loop_filter: zero working detuning");
    const complex want(delta - target.delta_eff, target.kappa_eff - p.kappa);
    if (std::abs(want) == 0.0)
        return band_pass_filter(std::abs(delta), gamma_f, 0.0, delay);

    const double psi = std::arg(want);
    auto finish = [&](FeedbackFilter f) -> FeedbackFilter {
        const complex unit = chi_fb(delta, p, f, n_s);
        const complex ratio = want / unit;
        // residual phase error after the modulo-pi match should be tiny
        if (std::abs(ratio.imag()) > 1e-6 * std::abs(ratio))
            throw ConvergenceError(
                "calibrate_loop_filter: phase calibration residual too large");
        f.gain = ratio.real();
        f.validate();
        return f;
    };

    const double anchor =
        0.5 * (std::abs(delta) + std::abs(target.delta_eff));
    try {
        return finish(
            detail::flat_band_filter(delta, anchor, gamma_f, psi, delay));
    } catch (const ConvergenceError&) {
        // fall through to the plain band-pass scans
    }
    for (int sections : {1, 2}) {
        const double omega0 = detail::solve_centre_frequency(
            delta, gamma_f, sections, psi, delay);
        if (!std::isfinite(omega0)) continue;
        return finish(
            band_pass_filter(omega0, gamma_f, 1.0, delay, sections));
    }
    throw ConvergenceError(
        "calibrate_loop_filter: no band-pass centre matches the required "
        "loop phase; adjust gamma_f");
}

}  // namespace inloop
