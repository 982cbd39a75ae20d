#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "inloop/errors.hpp"
#include "inloop/params.hpp"
#include "inloop/response.hpp"

// Seed-field transmission through the in-loop cavity: the OMIT dip and its
// Fano-profile parametrisation. Outputs are seed-normalised transmission
// coefficients; absolute photocurrent modelling is out of scope.

namespace inloop {

struct FanoParams {
    double epsilon = 0.0;
    double q = 0.0;
    double rho = 0.0;
};

struct FanoPoint {
    double omega = 0.0;
    double epsilon = 0.0;
    double q = 0.0;
    double rho = 0.0;
    complex t{0.0, 0.0};
    double s_t = 0.0;
};

namespace detail {

// chi_m^{o,eff}/chi_m with the co-rotating self-energy -i G^2 chi(omega):
//   (w_m^2 - w^2 - i w gamma) / (w_m^2 - w^2 - i w gamma - i w_m G^2 chi(w)).
inline complex mech_dressing_ratio(double omega, const PhysicalParams& p,
                                   double coupling_g,
                                   const CavityResponse& chi) {
    const complex bare(p.omega_m * p.omega_m - omega * omega,
                       -omega * p.gamma_m);
    const complex dressed =
        bare - complex(0.0, 1.0) * p.omega_m * coupling_g * coupling_g *
                   chi(omega);
    if (dressed == complex(0.0, 0.0))
        throw SingularityError(
            "transmission: dressed mechanical denominator vanished at "
            "omega/2pi = " + std::to_string(rad_to_hz(omega)) + " Hz");
    return bare / dressed;
}

}  // namespace detail

// Transmission coefficient
// t(omega) = 2 kappa' sqrt(2 kappa0) e^{-i theta} chi(omega)
//            * chi_m^{o,eff}(omega) / chi_m(omega).
[[nodiscard]] inline complex transmission(double omega,
                                          const PhysicalParams& p,
                                          double delta, double coupling_g,
                                          const CavityResponse& chi) {
    const double theta = theta_delta(p.kappa, delta);
    const complex prefactor = 2.0 * p.kappa_prime *
                              std::sqrt(2.0 * p.kappa0) *
                              std::polar(1.0, -theta);
    return prefactor * chi(omega) *
           detail::mech_dressing_ratio(omega, p, coupling_g, chi);
}

// Fano parameters (epsilon, q, rho) of |t|^2 around the interference point.
[[nodiscard]] inline FanoParams fano_params(double omega,
                                            const PhysicalParams& p,
                                            double coupling_g,
                                            const CavityResponse& chi) {
    const complex ce = chi(omega);
    const double g2 = coupling_g * coupling_g;
    const double den = p.gamma_m * omega + p.omega_m * g2 * ce.real();
    if (den == 0.0 || !std::isfinite(den))
        throw SingularityError(
            "fano_params: singular denominator gamma_m omega + omega_m G^2 "
            "Re chi at omega/2pi = " + std::to_string(rad_to_hz(omega)) +
            " Hz");
    FanoParams out;
    out.epsilon = (omega * omega - p.omega_m * p.omega_m -
                   p.omega_m * g2 * ce.imag()) /
                  den;
    out.q = p.omega_m * g2 * ce.imag() / den;
    const complex dressed(
        p.omega_m * p.omega_m - omega * omega + p.omega_m * g2 * ce.imag(),
        -omega * p.gamma_m - p.omega_m * g2 * ce.real());
    out.rho = p.gamma_m * p.gamma_m * omega * omega / std::norm(dressed);
    return out;
}

struct TransmissionSpectrum {
    std::vector<FanoPoint> points;
    std::vector<double> phase;  // arg t, unwrapped from the low-frequency end
};

[[nodiscard]] inline TransmissionSpectrum transmission_spectrum(
    const std::vector<double>& omega, const PhysicalParams& p, double delta,
    double coupling_g, const CavityResponse& chi) {
    TransmissionSpectrum out;
    out.points.reserve(omega.size());
    out.phase.reserve(omega.size());
    double offset = 0.0;
    double prev = 0.0;
    for (std::size_t i = 0; i < omega.size(); ++i) {
        FanoPoint fp;
        fp.omega = omega[i];
        fp.t = transmission(omega[i], p, delta, coupling_g, chi);
        fp.s_t = std::norm(fp.t);
        const FanoParams fano = fano_params(omega[i], p, coupling_g, chi);
        fp.epsilon = fano.epsilon;
        fp.q = fano.q;
        fp.rho = fano.rho;
        out.points.push_back(fp);

        const double raw = std::arg(fp.t);
        if (i > 0) {
            double d = raw - prev;
            while (d > pi) {
                d -= two_pi;
                offset -= two_pi;
            }
            while (d < -pi) {
                d += two_pi;
                offset += two_pi;
            }
        }
        prev = raw;
        out.phase.push_back(raw + offset);
    }
    return out;
}

// Fano reconstruction of the transmission spectrum,
// S_t = 8 kappa0 kappa'^2 |chi|^2 [ (eps+q)^2/(eps^2+1) + rho ],
// equal to |t|^2 by construction; kept as an independent route for tests.
[[nodiscard]] inline double fano_reconstruction(double omega,
                                                const PhysicalParams& p,
                                                double coupling_g,
                                                const CavityResponse& chi) {
    const FanoParams f = fano_params(omega, p, coupling_g, chi);
    const double lorentz = std::norm(chi(omega));
    const double shape =
        (f.epsilon + f.q) * (f.epsilon + f.q) / (f.epsilon * f.epsilon + 1.0) +
        f.rho;
    return 8.0 * p.kappa0 * p.kappa_prime * p.kappa_prime * lorentz * shape;
}

}  // namespace inloop
