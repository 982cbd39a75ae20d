#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "inloop/errors.hpp"
#include "inloop/params.hpp"
#include "inloop/response.hpp"
#include "inloop/steady_state.hpp"

// Symmetrised mechanical displacement noise spectra.
//
// Normalisation: stored arrays are two-sided spectral densities in angular
// frequency, units 1/(rad/s), so occupancies are plain integrals,
//     n_m + 1/2 = int S(omega) d omega.
// CSV export converts to one-sided densities per Hz (factor 4 pi); the
// displacement spectrum is s_xx = x0^2 * 2 pi * s_qq in m^2/Hz.

namespace inloop {

// Evaluation options shared by the spectrum pipeline and the sweeps.
struct SpectrumOptions {
    ResponseMode mode = ResponseMode::effective;
    std::size_t n_points = 3000;
    double span = 0.0;        // rad/s; 0 = automatic
    double prominence = 1.05;
};

struct SpectrumGrid {
    std::vector<double> omega;  // rad/s, strictly increasing
    // |chi_m^{o,eff}|^2-weighted contributions; s_total is their sum.
    std::vector<double> s_thermal;
    std::vector<double> s_rp;
    std::vector<double> s_fb;
    std::vector<double> s_total;
    std::vector<double> s_xx;  // m^2/Hz, filled by s_xx_from_s_qq
    ResponseMode mode = ResponseMode::effective;
};

// Feedback noise scale Z_Delta = [(Delta-delta_eff)^2 + (kappa_eff-kappa)^2]
//                                / (2 eta kappa').
[[nodiscard]] inline double z_delta(const PhysicalParams& p, double delta,
                                    const EffectiveCavity& eff) {
    const double dre = delta - eff.delta_eff;
    const double dim = eff.kappa_eff - p.kappa;
    return (dre * dre + dim * dim) / (2.0 * p.eta * p.kappa_prime);
}

namespace detail {

// Shared assembly once the three force-noise terms are known at one omega.
inline void push_point(SpectrumGrid& g, double omega, double weight,
                       double s_th, double s_rp, double s_fb) {
    g.omega.push_back(omega);
    g.s_thermal.push_back(weight * s_th / two_pi);
    g.s_rp.push_back(weight * s_rp / two_pi);
    g.s_fb.push_back(weight * s_fb / two_pi);
    g.s_total.push_back(g.s_thermal.back() + g.s_rp.back() + g.s_fb.back());
}

inline void require_increasing(const std::vector<double>& omega) {
    for (std::size_t i = 1; i < omega.size(); ++i)
        if (!(omega[i] > omega[i - 1]))
            throw ConfigError("spectrum grid must be strictly increasing");
}

}  // namespace detail

// Exact decomposition S_qq = |chi_m^{o,eff}|^2 [S_th + S_rp^kappa + S_rp^fb]
// evaluated with the exact loop susceptibility at both +/- omega.
[[nodiscard]] inline SpectrumGrid s_qq_exact(const std::vector<double>& omega,
                                             const PhysicalParams& p,
                                             const FeedbackFilter& f,
                                             const SteadyStateBranch& wp) {
    detail::require_increasing(omega);
    const double G = coupling_G(p, wp.n_s);
    const double theta = theta_delta(p.kappa, wp.delta);
    const complex eminus = std::polar(1.0, -theta);
    const complex eplus = std::polar(1.0, theta);
    const CavityResponse chi = CavityResponse::exact(p, f, wp.n_s);
    const double s_th = p.gamma_m * (2.0 * p.n_th + 1.0);

    SpectrumGrid g;
    g.mode = ResponseMode::exact;
    for (double w : omega) {
        const complex cp = chi(w);
        const complex cm = chi(-w);
        const complex sigma =
            complex(0.0, -1.0) * G * G * (cp - std::conj(cm));
        const complex inv_mo = 1.0 / chi_m(w, p.omega_m, p.gamma_m) + sigma;
        const double weight = 1.0 / std::norm(inv_mo);

        const double s_rp_kappa =
            G * G * p.kappa * (std::norm(cp) + std::norm(cm));

        const complex fb = chi_fb(w, p, f, wp.n_s);
        const complex bracket = cp * eminus + std::conj(cm) * eplus;
        const double t_noise = 0.5 * G * G * std::norm(fb) /
                               (p.eta * p.kappa_prime) * std::norm(bracket);
        // the two cross terms are complex conjugates of each other
        const complex cross = std::conj(fb) * (cp + std::conj(cm)) *
                              (cm * eminus + std::conj(cp) * eplus);
        const double s_rp_fb = t_noise - G * G * cross.real();

        detail::push_point(g, w, weight, s_th, s_rp_kappa, s_rp_fb);
    }
    return g;
}

// Narrow-band decomposition S_qq = |chi_m^{o,eff}|^2 [S_th + S_rp^eff + S_fb]
// with S_rp^eff = G^2 kappa_eff [|chi(w)|^2 + |chi(-w)|^2] and
// S_fb = G^2 Z_Delta [|chi(w)|^2 + |chi(-w)|^2].
[[nodiscard]] inline SpectrumGrid s_qq_approx(const std::vector<double>& omega,
                                              const EffectiveCavity& eff,
                                              const PhysicalParams& p,
                                              double coupling_g,
                                              double z_delta_value) {
    detail::require_increasing(omega);
    if (eff.beyond_threshold())
        throw InstabilityError("s_qq_approx: kappa_eff <= 0");
    const CavityResponse chi = CavityResponse::lorentzian(eff);
    const double s_th = p.gamma_m * (2.0 * p.n_th + 1.0);
    const double g2 = coupling_g * coupling_g;

    SpectrumGrid g;
    g.mode = ResponseMode::effective;
    for (double w : omega) {
        const complex cp = chi(w);
        const complex cm = chi(-w);
        const complex sigma = complex(0.0, -1.0) * g2 * (cp - std::conj(cm));
        const complex inv_mo = 1.0 / chi_m(w, p.omega_m, p.gamma_m) + sigma;
        const double weight = 1.0 / std::norm(inv_mo);
        const double lorentz_pair = std::norm(cp) + std::norm(cm);
        detail::push_point(g, w, weight, s_th, g2 * eff.kappa_eff * lorentz_pair,
                           g2 * z_delta_value * lorentz_pair);
    }
    return g;
}

// Absolute displacement conversion s_xx = x0^2 * 2 pi * s_qq (m^2/Hz).
inline void s_xx_from_s_qq(SpectrumGrid& g, const PhysicalParams& p) {
    const double x0 = x_zpf(p);
    g.s_xx.resize(g.s_total.size());
    for (std::size_t i = 0; i < g.s_total.size(); ++i)
        g.s_xx[i] = x0 * x0 * two_pi * g.s_total[i];
}

// Expected hybrid-mode frequencies from the avoided-crossing quadratic
// 2 x (x - dm) = G^2 with x = omega - omega_m and dm = delta_eff - omega_m.
struct PeakEstimate {
    double omega_minus = 0.0;
    double omega_plus = 0.0;
};

[[nodiscard]] inline PeakEstimate estimate_peaks(const PhysicalParams& p,
                                                 const EffectiveCavity& eff,
                                                 double coupling_g) {
    const double dm = eff.delta_eff - p.omega_m;
    const double disc =
        std::sqrt(dm * dm + 2.0 * coupling_g * coupling_g);
    return PeakEstimate{p.omega_m + 0.5 * (dm - disc),
                        p.omega_m + 0.5 * (dm + disc)};
}

// Frequency grid for spectra: a linear base across the region of interest
// plus log-dense clusters around the expected peaks and the cavity line.
// The cluster spacing reaches down below the narrowest feature width (the
// optically broadened mechanical line can be far narrower than kappa_eff),
// so near-threshold and weak-coupling peaks are always resolved.
[[nodiscard]] inline std::vector<double> make_spectrum_grid(
    const PhysicalParams& p, const EffectiveCavity& eff, double coupling_g,
    std::size_t n_base = 2000, double span = 0.0) {
    const PeakEstimate pk = estimate_peaks(p, eff, coupling_g);
    const double kappa_scale =
        std::max(std::abs(eff.kappa_eff), 1e-7 * p.omega_m);
    // optical damping of the mechanical-like line
    const double g2 = coupling_g * coupling_g;
    const double dp = eff.delta_eff + p.omega_m;
    const double dm = eff.delta_eff - p.omega_m;
    const double gamma_opt =
        std::abs(g2 * kappa_scale / (kappa_scale * kappa_scale + dm * dm) -
                 g2 * kappa_scale / (kappa_scale * kappa_scale + dp * dp));
    const double narrow = std::max(
        p.gamma_m + std::min(gamma_opt, kappa_scale), 1e-9 * p.omega_m);
    const double wide =
        std::max({kappa_scale, std::abs(coupling_g), 10.0 * narrow});
    if (span <= 0.0)
        span = std::max({6.0 * std::abs(coupling_g), 10.0 * wide,
                         2.5 * std::abs(dm), 0.02 * p.omega_m});
    const double lo = std::max(p.omega_m - span, 1e-3 * p.omega_m);
    const double hi = p.omega_m + span;

    std::set<double> pts;
    for (std::size_t i = 0; i < n_base; ++i)
        pts.insert(lo + (hi - lo) * double(i) / double(n_base - 1));
    const double centers[] = {pk.omega_minus, pk.omega_plus, eff.delta_eff,
                              p.omega_m};
    const double ratio = 20.0 * wide / (narrow / 20.0);
    for (double c : centers) {
        if (c <= 0.0) continue;
        // log-spaced offsets per side, from narrow/20 out to 20 x wide
        for (int k = 0; k < 96; ++k) {
            const double off =
                narrow / 20.0 * std::pow(ratio, double(k) / 95.0);
            if (c + off <= hi) pts.insert(c + off);
            if (c - off >= lo) pts.insert(c - off);
        }
        if (c >= lo && c <= hi) pts.insert(c);
    }
    return {pts.begin(), pts.end()};
}

struct NormalModes {
    double omega_plus = std::numeric_limits<double>::quiet_NaN();
    double omega_minus = std::numeric_limits<double>::quiet_NaN();
    double splitting = 0.0;
    bool single_peaked = true;
};

// Local maxima of s_total with parabolic refinement on the log-spectrum.
// Returns a two-peak result only when both candidate peaks exceed the saddle
// between them by the prominence factor.
[[nodiscard]] inline NormalModes find_normal_modes(const SpectrumGrid& g,
                                                   double prominence = 1.05) {
    const auto& s = g.s_total;
    const auto& w = g.omega;
    if (s.size() < 5)
        throw ConfigError("find_normal_modes: grid too small");

    struct Peak {
        std::size_t idx;
        double value;
    };
    std::vector<Peak> peaks;
    for (std::size_t i = 1; i + 1 < s.size(); ++i)
        if (s[i] > s[i - 1] && s[i] >= s[i + 1]) peaks.push_back({i, s[i]});
    if (peaks.empty())
        throw ConfigError("find_normal_modes: no interior maximum found");

    std::sort(peaks.begin(), peaks.end(),
              [](const Peak& a, const Peak& b) { return a.value > b.value; });

    auto refine = [&](std::size_t i) {
        if (i == 0 || i + 1 >= s.size()) return w[i];
        const double xl = w[i - 1], xc = w[i], xr = w[i + 1];
        const double ll = std::log(s[i - 1]), lc = std::log(s[i]),
                     lr = std::log(s[i + 1]);
        // quadratic through three points, vertex position
        const double denom =
            (xl - xc) * (xl - xr) * (xc - xr);
        if (denom == 0.0) return xc;
        const double a = (xr * (lc - ll) + xc * (ll - lr) + xl * (lr - lc)) /
                         denom;
        const double b = (xr * xr * (ll - lc) + xc * xc * (lr - ll) +
                          xl * xl * (lc - lr)) /
                         denom;
        if (!(a < 0.0)) return xc;
        return -b / (2.0 * a);
    };

    auto check_resolved = [&](std::size_t i) {
        const double half = s[i] / 2.0;
        std::size_t lo = i, hi = i;
        while (lo > 0 && s[lo - 1] >= half && s[lo - 1] <= s[lo]) --lo;
        while (hi + 1 < s.size() && s[hi + 1] >= half && s[hi + 1] <= s[hi])
            ++hi;
        if (hi - lo + 1 < 8)
            throw ConfigError(
                "find_normal_modes: under-resolved grid (< 8 samples across "
                "a peak); refine the frequency grid");
    };

    NormalModes out;
    if (peaks.size() >= 2) {
        const std::size_t i1 = std::min(peaks[0].idx, peaks[1].idx);
        const std::size_t i2 = std::max(peaks[0].idx, peaks[1].idx);
        double saddle = std::numeric_limits<double>::infinity();
        for (std::size_t i = i1; i <= i2; ++i) saddle = std::min(saddle, s[i]);
        const double lower = std::min(s[i1], s[i2]);
        if (lower >= prominence * saddle) {
            check_resolved(i1);
            check_resolved(i2);
            out.single_peaked = false;
            out.omega_minus = refine(i1);
            out.omega_plus = refine(i2);
            out.splitting = out.omega_plus - out.omega_minus;
            return out;
        }
    }
    check_resolved(peaks[0].idx);
    out.single_peaked = true;
    out.omega_plus = refine(peaks[0].idx);
    out.omega_minus = out.omega_plus;
    out.splitting = 0.0;
    return out;
}

}  // namespace inloop
