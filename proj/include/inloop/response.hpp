#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "inloop/errors.hpp"
#include "inloop/params.hpp"

// Complex response functions of the in-loop optomechanical system.
//
// Sign conventions follow the Langevin derivation: the bare cavity
// susceptibility is chi_c(omega) = 1 / (kappa + i (Delta - omega)) and the
// Fourier transform is f~(omega) = int dt e^{i omega t} f(t). All functions
// are pure and thread-safe.

namespace inloop {

enum class ResponseMode { exact, effective };

[[nodiscard]] inline const char* to_string(ResponseMode m) {
    return m == ResponseMode::exact ? "exact" : "effective";
}

// One evaluation point of any response function.
struct ResponseEval {
    double omega = 0.0;
    complex value{0.0, 0.0};
};

// Cavity-field reference phase theta_Delta = arctan(-Delta / kappa).
[[nodiscard]] inline double theta_delta(double kappa, double delta) {
    return std::atan2(-delta, kappa);
}

// Steady-state effective detuning at intracavity photon number n_s,
// Delta = Delta0 - 2 g0^2 n_s / omega_m.
[[nodiscard]] inline double detuning_at(const PhysicalParams& p, double n_s) {
    return p.delta0 - 2.0 * p.g0 * p.g0 * n_s / p.omega_m;
}

// Bare cavity susceptibility chi_c(omega) = 1 / (kappa + i (delta - omega)).
[[nodiscard]] inline complex chi_c(double omega, double kappa, double delta) {
    const complex den(kappa, delta - omega);
    if (den == complex(0.0, 0.0))
        throw SingularityError("chi_c: evaluation at the exact cavity pole "
                               "(kappa = 0 and omega = delta)");
    return 1.0 / den;
}

// Bare mechanical susceptibility
// chi_m(omega) = omega_m / (omega_m^2 - omega^2 - i omega gamma_m).
[[nodiscard]] inline complex chi_m(double omega, double omega_m,
                                   double gamma_m) {
    const complex den(omega_m * omega_m - omega * omega, -omega * gamma_m);
    if (den == complex(0.0, 0.0))
        throw SingularityError(
            "chi_m: evaluation at the exact mechanical pole");
    return omega_m / den;
}

// Rescaled loop transfer function
// chi_fb(omega) = eta sqrt(2 kappa0) 2 kappa' sqrt(n_s) g~(omega).
[[nodiscard]] inline complex chi_fb(double omega, const PhysicalParams& p,
                                    const FeedbackFilter& f, double n_s) {
    if (!(n_s >= 0.0))
        throw ConfigError("chi_fb: n_s must be >= 0");
    const double prefactor = p.eta * std::sqrt(2.0 * p.kappa0) *
                             2.0 * p.kappa_prime * std::sqrt(n_s);
    return prefactor * f.response(omega);
}

// Denominator of the in-loop cavity susceptibility,
// 1 - chi_fb(omega) [chi_c(omega) e^{-i theta} + chi_c*(-omega) e^{+i theta}].
[[nodiscard]] inline complex loop_denominator(double omega,
                                              const PhysicalParams& p,
                                              const FeedbackFilter& f,
                                              double n_s) {
    const double delta = detuning_at(p, n_s);
    const double theta = theta_delta(p.kappa, delta);
    const complex phase = std::polar(1.0, -theta);
    const complex bracket = chi_c(omega, p.kappa, delta) * phase +
                            std::conj(chi_c(-omega, p.kappa, delta)) / phase;
    return 1.0 - chi_fb(omega, p, f, n_s) * bracket;
}

// Exact in-loop cavity susceptibility. A vanishing denominator marks the
// loop instability boundary; |den| below `tol` (relative to 1) is an error.
[[nodiscard]] inline complex chi_c_eff_exact(double omega,
                                             const PhysicalParams& p,
                                             const FeedbackFilter& f,
                                             double n_s, double tol = 1e-12) {
    const complex den = loop_denominator(omega, p, f, n_s);
    if (std::abs(den) < tol)
        throw InstabilityError(
            "chi_c_eff_exact: loop denominator vanished at omega/2pi = " +
            std::to_string(rad_to_hz(omega)) + " Hz (instability boundary)");
    return chi_c(omega, p.kappa, detuning_at(p, n_s)) / den;
}

// Narrow-band effective cavity: kappa_eff = kappa + Im chi_fb(Delta),
// delta_eff = Delta - Re chi_fb(Delta). kappa_eff <= 0 is returned, not
// thrown, so threshold scans can bracket the instability.
[[nodiscard]] inline EffectiveCavity effective_cavity(const PhysicalParams& p,
                                                      const FeedbackFilter& f,
                                                      double n_s) {
    const double delta = detuning_at(p, n_s);
    const complex at_delta = chi_fb(delta, p, f, n_s);
    return EffectiveCavity{p.kappa + at_delta.imag(),
                           delta - at_delta.real()};
}

// Lorentzian form 1 / (kappa_eff + i (delta_eff - omega)); only valid below
// the loop instability threshold.
[[nodiscard]] inline complex chi_c_eff_lorentzian(double omega,
                                                  const EffectiveCavity& eff) {
    if (eff.beyond_threshold())
        throw InstabilityError(
            "chi_c_eff_lorentzian: kappa_eff <= 0 (loop past its instability "
            "threshold)");
    return 1.0 / complex(eff.kappa_eff, eff.delta_eff - omega);
}

// In-loop cavity response usable by every downstream consumer in either the
// exact (full loop) or effective (Lorentzian) description.
class CavityResponse {
public:
    static CavityResponse exact(const PhysicalParams& p,
                                const FeedbackFilter& f, double n_s,
                                double tol = 1e-12) {
        CavityResponse r;
        r.mode_ = ResponseMode::exact;
        r.params_ = p;
        r.filter_ = f;
        r.n_s_ = n_s;
        r.tol_ = tol;
        r.eff_ = effective_cavity(p, f, n_s);
        return r;
    }

    static CavityResponse lorentzian(const EffectiveCavity& eff) {
        CavityResponse r;
        r.mode_ = ResponseMode::effective;
        r.eff_ = eff;
        return r;
    }

    [[nodiscard]] complex operator()(double omega) const {
        if (mode_ == ResponseMode::exact)
            return chi_c_eff_exact(omega, params_, filter_, n_s_, tol_);
        return chi_c_eff_lorentzian(omega, eff_);
    }

    [[nodiscard]] ResponseMode mode() const { return mode_; }

    // Narrow-band parameters associated with this response (for the exact
    // mode these come from chi_fb evaluated at the working detuning).
    [[nodiscard]] const EffectiveCavity& effective() const { return eff_; }

private:
    CavityResponse() = default;

    ResponseMode mode_ = ResponseMode::effective;
    PhysicalParams params_{};
    FeedbackFilter filter_{};
    double n_s_ = 0.0;
    double tol_ = 1e-12;
    EffectiveCavity eff_{};
};

// Effective self-energy dressing the mechanical mode,
// Sigma_eff(omega) = -i G^2 { chi(omega) - [chi(-omega)]* }.
[[nodiscard]] inline complex sigma_eff(double omega, double coupling_g,
                                       const CavityResponse& chi) {
    if (!(coupling_g >= 0.0))
        throw ConfigError("sigma_eff: coupling G must be >= 0");
    if (coupling_g == 0.0) return {0.0, 0.0};
    const complex diff = chi(omega) - std::conj(chi(-omega));
    return complex(0.0, -1.0) * coupling_g * coupling_g * diff;
}

// Dressed mechanical susceptibility, 1 / (chi_m^{-1} + Sigma_eff).
[[nodiscard]] inline complex chi_m_o_eff(double omega, const PhysicalParams& p,
                                         double coupling_g,
                                         const CavityResponse& chi,
                                         double tol = 1e-12) {
    const complex inv = 1.0 / chi_m(omega, p.omega_m, p.gamma_m) +
                        sigma_eff(omega, coupling_g, chi);
    if (std::abs(inv) < tol * p.omega_m)
        throw SingularityError(
            "chi_m_o_eff: dressed susceptibility pole at omega/2pi = " +
            std::to_string(rad_to_hz(omega)) + " Hz");
    return 1.0 / inv;
}

// Normalised feedback gain, G_fb = -Im chi_fb(Delta) / kappa. Equals 1 at
// the loop stability threshold (kappa_eff = 0) by construction.
[[nodiscard]] inline double normalized_gain(const PhysicalParams& p,
                                            const FeedbackFilter& f,
                                            double n_s) {
    const double delta = detuning_at(p, n_s);
    return -chi_fb(delta, p, f, n_s).imag() / p.kappa;
}

// Grid evaluation helper for any response callable.
template <typename Fn>
[[nodiscard]] std::vector<ResponseEval> evaluate_on_grid(
    const std::vector<double>& omega, Fn&& fn) {
    std::vector<ResponseEval> out;
    out.reserve(omega.size());
    for (double w : omega) out.push_back({w, fn(w)});
    return out;
}

}  // namespace inloop
