#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "inloop/errors.hpp"
#include "inloop/filter_design.hpp"
#include "inloop/params.hpp"
#include "inloop/response.hpp"
#include "inloop/spectra.hpp"
#include "inloop/steady_state.hpp"

// Steady-state mechanical occupancy: closed form (sideband-cooling rates
// A_+/- with the feedback noise folded into an effective bath) and direct
// numerical integration of the displacement spectrum.

namespace inloop {

enum class OccupancyMethod { closed_form, integral };

// Validity flags for the closed form; thresholds use a factor-10 reading of
// the "much smaller than" conditions and are reported, never enforced.
struct RegimeFlags {
    bool sideband_resolved = false;   // kappa_eff < delta_eff / 10
    bool near_resonant = false;       // |delta_eff - omega_m| < omega_m / 10
    bool coupling_small = false;      // G < omega_m / 10
    bool damping_hierarchy = false;   // gamma_m < min(Gamma_eff, kappa_eff)/10
    bool sideband_asymmetric = false; // A_- > 10 A_+

    [[nodiscard]] bool all() const {
        return sideband_resolved && near_resonant && coupling_small &&
               damping_hierarchy && sideband_asymmetric;
    }
};

struct OccupancyResult {
    double n_m = 0.0;
    double gamma_eff = 0.0;  // A_- minus A_+
    double a_plus = 0.0;
    double a_minus = 0.0;
    double n_m_eff = 0.0;     // feedback-noise occupancy
    double n_m_th_eff = 0.0;  // n_th + n_m_eff
    OccupancyMethod method = OccupancyMethod::closed_form;
    RegimeFlags flags;
};

// Optical scattering rates A_+- = G^2 kappa_eff / (kappa_eff^2 +
// (delta_eff +- omega_m)^2) and Gamma_eff = A_- - A_+.
struct CoolingRates {
    double a_plus = 0.0;
    double a_minus = 0.0;
    double gamma_eff = 0.0;
};

[[nodiscard]] inline CoolingRates cooling_rates(const PhysicalParams& p,
                                                const EffectiveCavity& eff,
                                                double coupling_g) {
    const double g2 = coupling_g * coupling_g;
    const double k = eff.kappa_eff;
    const double dp = eff.delta_eff + p.omega_m;
    const double dm = eff.delta_eff - p.omega_m;
    CoolingRates r;
    r.a_plus = g2 * k / (k * k + dp * dp);
    r.a_minus = g2 * k / (k * k + dm * dm);
    r.gamma_eff = r.a_minus - r.a_plus;
    return r;
}

[[nodiscard]] inline RegimeFlags regime_flags(const PhysicalParams& p,
                                              const EffectiveCavity& eff,
                                              double coupling_g,
                                              const CoolingRates& r) {
    RegimeFlags f;
    f.sideband_resolved = eff.kappa_eff < eff.delta_eff / 10.0;
    f.near_resonant = std::abs(eff.delta_eff - p.omega_m) < p.omega_m / 10.0;
    f.coupling_small = coupling_g < p.omega_m / 10.0;
    f.damping_hierarchy =
        p.gamma_m < std::min(r.gamma_eff, eff.kappa_eff) / 10.0;
    f.sideband_asymmetric = r.a_minus > 10.0 * r.a_plus;
    return f;
}

// Closed-form occupancy
//   n_m = n_m^{th,eff} (gamma_m / Gamma_eff) (1 + Gamma_eff / 2 kappa_eff),
//   n_m^{th,eff} = n_th + Z_Delta Gamma_eff / (gamma_m (2 kappa_eff +
//   Gamma_eff)).
[[nodiscard]] inline OccupancyResult phonon_number_closed(
    const PhysicalParams& p, const EffectiveCavity& eff, double coupling_g,
    double z_delta_value) {
    if (eff.beyond_threshold())
        throw InstabilityError("phonon_number_closed: kappa_eff <= 0");
    const CoolingRates r = cooling_rates(p, eff, coupling_g);
    if (!(r.gamma_eff > 0.0))
        throw InstabilityError(
            "phonon_number_closed: Gamma_eff <= 0 (no net optical cooling)");

    OccupancyResult out;
    out.method = OccupancyMethod::closed_form;
    out.a_plus = r.a_plus;
    out.a_minus = r.a_minus;
    out.gamma_eff = r.gamma_eff;
    out.n_m_eff = z_delta_value * r.gamma_eff /
                  (p.gamma_m * (2.0 * eff.kappa_eff + r.gamma_eff));
    out.n_m_th_eff = p.n_th + out.n_m_eff;
    out.n_m = out.n_m_th_eff * (p.gamma_m / r.gamma_eff) *
              (1.0 + r.gamma_eff / (2.0 * eff.kappa_eff));
    out.flags = regime_flags(p, eff, coupling_g, r);
    return out;
}

namespace detail {

// n_m + 1/2 = 2 * int_0^Omega s(omega) d omega for the (even) spectrum,
// with the domain split at the hybrid-mode peaks so adaptive quadrature
// never misses an ultranarrow feature.
inline double integrate_even_spectrum(
    const std::function<double(double)>& s, const PhysicalParams& p,
    const EffectiveCavity& eff, double coupling_g, double s_tail_level) {
    using boost::math::quadrature::gauss_kronrod;

    const PeakEstimate pk = estimate_peaks(p, eff, coupling_g);
    const double width = std::max(
        {eff.kappa_eff, p.gamma_m, 1e-9 * p.omega_m});

    // Cutoff from the |chi_m|^2 ~ omega_m^2/omega^4 tail of the thermal term:
    // tail(Omega) = 2 * s_tail_level * omega_m^2 / (3 Omega^3).
    double cutoff = std::max(10.0 * p.omega_m,
                             2.0 * std::abs(eff.delta_eff) + 10.0 * width);
    double total = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
        std::vector<double> knots{0.0, cutoff};
        auto add_peak = [&](double c) {
            for (double m : {10.0, 1.0}) {
                if (c - m * width > 0.0 && c - m * width < cutoff)
                    knots.push_back(c - m * width);
                if (c + m * width < cutoff) knots.push_back(c + m * width);
            }
            if (c > 0.0 && c < cutoff) knots.push_back(c);
        };
        add_peak(pk.omega_minus);
        add_peak(pk.omega_plus);
        add_peak(eff.delta_eff);
        add_peak(p.omega_m);
        std::sort(knots.begin(), knots.end());
        knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

        total = 0.0;
        double worst_rel = 0.0;
        for (std::size_t i = 1; i < knots.size(); ++i) {
            double err = 0.0;
            const double part = gauss_kronrod<double, 61>::integrate(
                s, knots[i - 1], knots[i], 12, 1e-10, &err);
            total += part;
            if (part != 0.0) worst_rel = std::max(worst_rel, err / std::abs(part));
        }
        total *= 2.0;

        const double tail =
            2.0 * s_tail_level * p.omega_m * p.omega_m /
            (3.0 * cutoff * cutoff * cutoff);
        if (tail < 1e-6 * total) {
            if (worst_rel > 1e-4)
                throw ConvergenceError(
                    "phonon_number_integral: quadrature reached relative "
                    "error " + std::to_string(worst_rel));
            return total;
        }
        cutoff *= 2.0;
    }
    throw ConvergenceError(
        "phonon_number_integral: tail bound did not fall below 1e-6 of the "
        "integral");
}

inline OccupancyResult integral_result(const PhysicalParams& p,
                                       const EffectiveCavity& eff,
                                       double coupling_g, double z_delta_value,
                                       double variance) {
    const CoolingRates r = cooling_rates(p, eff, coupling_g);
    OccupancyResult out;
    out.method = OccupancyMethod::integral;
    out.a_plus = r.a_plus;
    out.a_minus = r.a_minus;
    out.gamma_eff = r.gamma_eff;
    out.n_m_eff = z_delta_value * r.gamma_eff /
                  (p.gamma_m * (2.0 * eff.kappa_eff + r.gamma_eff));
    out.n_m_th_eff = p.n_th + out.n_m_eff;
    out.n_m = variance - 0.5;
    out.flags = regime_flags(p, eff, coupling_g, r);
    return out;
}

}  // namespace detail

// Occupancy by quadrature of the narrow-band spectrum.
[[nodiscard]] inline OccupancyResult phonon_number_integral(
    const PhysicalParams& p, const EffectiveCavity& eff, double coupling_g,
    double z_delta_value) {
    if (eff.beyond_threshold())
        throw InstabilityError("phonon_number_integral: kappa_eff <= 0");
    const double g2 = coupling_g * coupling_g;
    const double s_th = p.gamma_m * (2.0 * p.n_th + 1.0);
    const CavityResponse chi = CavityResponse::lorentzian(eff);
    auto integrand = [&](double w) {
        const complex cp = chi(w);
        const complex cm = chi(-w);
        const complex sigma = complex(0.0, -1.0) * g2 * (cp - std::conj(cm));
        const complex inv_mo = 1.0 / chi_m(w, p.omega_m, p.gamma_m) + sigma;
        const double pair = std::norm(cp) + std::norm(cm);
        return (s_th + g2 * (eff.kappa_eff + z_delta_value) * pair) /
               (std::norm(inv_mo) * two_pi);
    };
    const double var = detail::integrate_even_spectrum(
        integrand, p, eff, coupling_g, s_th / two_pi);
    return detail::integral_result(p, eff, coupling_g, z_delta_value, var);
}

// Occupancy by quadrature of the exact loop spectrum.
[[nodiscard]] inline OccupancyResult phonon_number_integral(
    const PhysicalParams& p, const FeedbackFilter& f,
    const SteadyStateBranch& wp) {
    const EffectiveCavity eff = effective_cavity(p, f, wp.n_s);
    const double G = coupling_G(p, wp.n_s);
    const double s_th = p.gamma_m * (2.0 * p.n_th + 1.0);
    auto integrand = [&](double w) {
        const std::vector<double> one{w};
        // reuse the exact assembly for a single point
        SpectrumGrid g = s_qq_exact(one, p, f, wp);
        return g.s_total.front();
    };
    const double var = detail::integrate_even_spectrum(
        integrand, p, eff, G, s_th / two_pi);
    return detail::integral_result(p, eff, G, z_delta(p, wp.delta, eff), var);
}

struct CoolingPoint {
    double g_fb = 0.0;
    double kappa_eff = 0.0;
    double gamma_eff = 0.0;
    double n_m_closed = 0.0;
    double n_m_integral = 0.0;
    double ratio_db = 0.0;  // closed-form ratio to the no-feedback point
    double ratio_integral_db = 0.0;
};

// Cooling ratio n_m(G_fb)/n_m(0) over a normalised-gain grid. Numerator and
// normaliser always use the same method so method bias cancels.
[[nodiscard]] inline std::vector<CoolingPoint> cooling_ratio_curve(
    const PhysicalParams& p, const FeedbackFilter& f, double n_s,
    const std::vector<double>& gain_grid, unsigned threads = 0) {
    const double G = coupling_G(p, n_s);
    const double delta = detuning_at(p, n_s);

    auto at_gain = [&](double g_fb) {
        const FeedbackFilter fg = with_normalized_gain(f, p, n_s, g_fb);
        const EffectiveCavity eff = effective_cavity(p, fg, n_s);
        const double z = z_delta(p, delta, eff);
        CoolingPoint pt;
        pt.g_fb = g_fb;
        pt.kappa_eff = eff.kappa_eff;
        pt.n_m_closed = phonon_number_closed(p, eff, G, z).n_m;
        const OccupancyResult integ = phonon_number_integral(p, eff, G, z);
        pt.n_m_integral = integ.n_m;
        pt.gamma_eff = integ.gamma_eff;
        return pt;
    };

    const CoolingPoint reference = at_gain(0.0);

    std::vector<CoolingPoint> out(gain_grid.size());
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(
        threads, static_cast<unsigned>(std::max<std::size_t>(gain_grid.size(), 1)));
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= gain_grid.size()) return;
            out[i] = at_gain(gain_grid[i]);
            out[i].ratio_db =
                10.0 * std::log10(out[i].n_m_closed / reference.n_m_closed);
            out[i].ratio_integral_db =
                10.0 * std::log10(out[i].n_m_integral / reference.n_m_integral);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return out;
}

}  // namespace inloop
