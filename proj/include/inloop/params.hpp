#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "inloop/errors.hpp"
#include "inloop/units.hpp"

namespace inloop {

using complex = std::complex<double>;

// Fixed physical constants of the optomechanical system. All rates and
// frequencies are angular (rad/s); see units.hpp for the boundary rules.
struct PhysicalParams {
    double omega_m = 0.0;       // mechanical resonance
    double gamma_m = 0.0;       // mechanical amplitude decay
    double kappa = 0.0;         // total cavity amplitude decay
    double kappa0 = 0.0;        // input-mirror decay
    double kappa_prime = 0.0;   // output-mirror decay
    double kappa_dprime = 0.0;  // internal losses
    double delta0 = 0.0;        // bare detuning omega_c - omega_L (any sign)
    double g0 = 0.0;            // single-photon coupling
    double eta = 1.0;           // detection efficiency, in (0, 1]
    double n_th = 0.0;          // thermal bath occupancy
    double pump_power = 0.0;    // W
    double laser_wavelength = 0.0;  // m

    // Effective mass is only needed for absolute displacement scales
    // (x_zpf); spectra in dimensionless q work without it.
    std::optional<double> mass;

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw ConfigError(std::string("PhysicalParams: ") + name +
                                  " must be strictly positive and finite");
        };
        positive(omega_m, "omega_m");
        positive(gamma_m, "gamma_m");
        positive(kappa, "kappa");
        positive(kappa0, "kappa0");
        positive(kappa_prime, "kappa_prime");
        positive(g0, "g0");
        positive(laser_wavelength, "laser_wavelength");
        if (!(kappa_dprime >= 0.0) || !std::isfinite(kappa_dprime))
            throw ConfigError("PhysicalParams: kappa_dprime must be >= 0");
        if (!std::isfinite(delta0))
            throw ConfigError("PhysicalParams: delta0 must be finite");
        if (!(eta > 0.0 && eta <= 1.0))
            throw ConfigError("PhysicalParams: eta must lie in (0, 1]");
        if (!(n_th >= 0.0) || !std::isfinite(n_th))
            throw ConfigError("PhysicalParams: n_th must be >= 0");
        if (!(pump_power >= 0.0) || !std::isfinite(pump_power))
            throw ConfigError("PhysicalParams: pump_power must be >= 0");
        const double sum = kappa0 + kappa_prime + kappa_dprime;
        if (std::abs(sum - kappa) > 1e-12 * kappa)
            throw ConfigError(
                "PhysicalParams: kappa must equal kappa0 + kappa_prime + "
                "kappa_dprime (relative mismatch above 1e-12)");
        if (mass && (!(*mass > 0.0) || !std::isfinite(*mass)))
            throw ConfigError("PhysicalParams: mass must be strictly positive");
    }
};

// Zero-point motion factor x0 = sqrt(hbar / 2 m omega_m), in metres.
[[nodiscard]] inline double x_zpf(const PhysicalParams& p) {
    if (!p.mass)
        throw ConfigError("x_zpf: effective mass not set; supply mass to work in "
                          "absolute displacement units");
    return std::sqrt(hbar / (2.0 * *p.mass * p.omega_m));
}

// Pump field amplitude E = sqrt(P / hbar omega_L) = sqrt(P lambda / h c),
// in sqrt(photons/s).
[[nodiscard]] inline double pump_amplitude(const PhysicalParams& p) {
    if (!(p.pump_power >= 0.0))
        throw ConfigError("pump_amplitude: negative pump power");
    return std::sqrt(p.pump_power * p.laser_wavelength /
                     (planck_h * speed_of_light));
}

// High-temperature bath occupancy n_th = k_B T / hbar omega_m.
[[nodiscard]] inline double thermal_occupancy(double temperature_k,
                                              double omega_m) {
    if (!(temperature_k >= 0.0))
        throw ConfigError("thermal_occupancy: negative temperature");
    if (!(omega_m > 0.0))
        throw ConfigError("thermal_occupancy: omega_m must be positive");
    return boltzmann_k * temperature_k / (hbar * omega_m);
}

// Causal feedback-loop transfer function: a rational filter given by zeros,
// poles and a real overall gain, plus a pure delay. With the Fourier
// convention f~(omega) = int dt e^{i omega t} f(t) (so d/dt <-> -i omega) the
// frequency response is
//
//   g~(omega) = gain * e^{i omega tau} * prod_k(-i omega - z_k)
//                                      / prod_k(-i omega - p_k).
//
// A real impulse response requires zeros and poles closed under complex
// conjugation; causality and stability of the standalone filter require
// Re(p_k) < 0. Strict properness (fewer zeros than poles) is required so the
// loop has no instantaneous feed-through.
struct FeedbackFilter {
    double gain = 0.0;
    std::vector<complex> zeros;
    std::vector<complex> poles;
    double delay = 0.0;  // seconds

    [[nodiscard]] bool is_off() const { return gain == 0.0; }

    void validate() const {
        if (!std::isfinite(gain))
            throw ConfigError("FeedbackFilter: gain must be finite");
        if (!(delay >= 0.0) || !std::isfinite(delay))
            throw ConfigError("FeedbackFilter: delay must be >= 0");
        for (const auto& p : poles)
            if (!(p.real() < 0.0))
                throw ConfigError("FeedbackFilter: every pole needs a negative "
                                  "real part (causal, stable filter)");
        if (!conjugate_closed(zeros) || !conjugate_closed(poles))
            throw ConfigError("FeedbackFilter: zeros and poles must be closed "
                              "under complex conjugation (real impulse response)");
        if (gain != 0.0 && zeros.size() >= poles.size())
            throw ConfigError("FeedbackFilter: strictly proper filter required "
                              "(fewer zeros than poles)");
    }

    // Frequency response g~(omega).
    [[nodiscard]] complex response(double omega) const {
        if (gain == 0.0) return {0.0, 0.0};
        const complex s(0.0, -omega);  // -i omega
        complex num(1.0, 0.0), den(1.0, 0.0);
        for (const auto& z : zeros) num *= (s - z);
        for (const auto& p : poles) den *= (s - p);
        const complex rot = std::polar(1.0, omega * delay);
        return gain * rot * num / den;
    }

    // g~(0) = integral of the impulse response; real by conjugate symmetry.
    [[nodiscard]] double dc_gain() const { return response(0.0).real(); }

    [[nodiscard]] FeedbackFilter scaled(double factor) const {
        FeedbackFilter f = *this;
        f.gain *= factor;
        return f;
    }

private:
    static bool conjugate_closed(const std::vector<complex>& roots) {
        std::vector<bool> used(roots.size(), false);
        for (std::size_t i = 0; i < roots.size(); ++i) {
            if (used[i] || roots[i].imag() == 0.0) continue;
            const complex want = std::conj(roots[i]);
            const double scale = std::max(1.0, std::abs(roots[i]));
            bool found = false;
            for (std::size_t j = 0; j < roots.size(); ++j) {
                if (j == i || used[j]) continue;
                if (std::abs(roots[j] - want) <= 1e-9 * scale) {
                    used[i] = used[j] = true;
                    found = true;
                    break;
                }
            }
            if (!found) return false;
        }
        return true;
    }
};

// Narrow-band description of the in-loop cavity. kappa_eff <= 0 signals the
// loop has crossed its instability threshold; it is kept as data (sweeps need
// to locate the threshold) and only turns into an error when a Lorentzian
// response is actually evaluated.
struct EffectiveCavity {
    double kappa_eff = 0.0;
    double delta_eff = 0.0;

    [[nodiscard]] bool beyond_threshold() const { return kappa_eff <= 0.0; }
};

}  // namespace inloop
