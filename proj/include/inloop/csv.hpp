#pragma once

#include <charconv>
#include <fstream>
#include <string>
#include <vector>

#include "inloop/errors.hpp"
#include "inloop/occupancy.hpp"
#include "inloop/omit.hpp"
#include "inloop/psd.hpp"
#include "inloop/spectra.hpp"
#include "inloop/units.hpp"

// CSV writers. All numbers use the shortest round-trip decimal so outputs
// are bit-stable oracles. Spectral columns are exported one-sided per Hz
// (internal arrays are two-sided per rad/s; the factor is 4 pi).

namespace inloop {

// Shortest decimal that parses back to exactly the same double.
[[nodiscard]] inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline constexpr double one_sided_hz_factor = 2.0 * two_pi;

namespace detail {

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("csv: cannot write '" + path + "'");
    return out;
}

}  // namespace detail

// Columns: omega_hz, s_th, s_rp, s_fb, s_total[, s_xx_m2_per_hz].
// '#' comment lines carry the mode and working-point metadata.
inline void write_spectrum_csv(const SpectrumGrid& g, const std::string& path,
                               const std::vector<std::string>& comments = {}) {
    auto out = detail::open_out(path);
    out << "# spectral densities: one-sided, per Hz\n";
    out << "# mode: " << to_string(g.mode) << "\n";
    for (const auto& c : comments) out << "# " << c << "\n";
    const bool with_xx = !g.s_xx.empty();
    out << "omega_hz,s_th,s_rp,s_fb,s_total";
    if (with_xx) out << ",s_xx_m2_per_hz";
    out << "\n";
    for (std::size_t i = 0; i < g.omega.size(); ++i) {
        out << format_double(rad_to_hz(g.omega[i])) << ','
            << format_double(one_sided_hz_factor * g.s_thermal[i]) << ','
            << format_double(one_sided_hz_factor * g.s_rp[i]) << ','
            << format_double(one_sided_hz_factor * g.s_fb[i]) << ','
            << format_double(one_sided_hz_factor * g.s_total[i]);
        if (with_xx) out << ',' << format_double(2.0 * g.s_xx[i]);
        out << "\n";
    }
}

// Columns: g_fb, kappa_eff_hz, gamma_eff_hz, n_m_closed, n_m_integral,
// ratio_db (closed-form ratio; an integral-ratio column follows for
// reference).
inline void write_cooling_csv(const std::vector<CoolingPoint>& pts,
                              const std::string& path,
                              const std::vector<std::string>& comments = {}) {
    auto out = detail::open_out(path);
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "g_fb,kappa_eff_hz,gamma_eff_hz,n_m_closed,n_m_integral,ratio_db,"
           "ratio_integral_db\n";
    for (const auto& p : pts) {
        out << format_double(p.g_fb) << ','
            << format_double(rad_to_hz(p.kappa_eff)) << ','
            << format_double(rad_to_hz(p.gamma_eff)) << ','
            << format_double(p.n_m_closed) << ','
            << format_double(p.n_m_integral) << ','
            << format_double(p.ratio_db) << ','
            << format_double(p.ratio_integral_db) << "\n";
    }
}

// Columns: omega_hz, t_re, t_im, s_t, epsilon, q, rho[, phase_rad].
inline void write_omit_csv(const TransmissionSpectrum& ts,
                           const std::string& path,
                           const std::vector<std::string>& comments = {}) {
    auto out = detail::open_out(path);
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "omega_hz,t_re,t_im,s_t,epsilon,q,rho,phase_rad\n";
    for (std::size_t i = 0; i < ts.points.size(); ++i) {
        const FanoPoint& p = ts.points[i];
        out << format_double(rad_to_hz(p.omega)) << ','
            << format_double(p.t.real()) << ',' << format_double(p.t.imag())
            << ',' << format_double(p.s_t) << ',' << format_double(p.epsilon)
            << ',' << format_double(p.q) << ',' << format_double(p.rho) << ','
            << format_double(ts.phase[i]) << "\n";
    }
}

// PSD estimate in the same schema as analytic spectra (single total column).
inline void write_psd_csv(const PsdEstimate& psd, const std::string& path,
                          const std::vector<std::string>& comments = {}) {
    auto out = detail::open_out(path);
    out << "# spectral densities: one-sided, per Hz\n";
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "omega_hz,s_total,s_stderr,n_segments\n";
    for (std::size_t i = 0; i < psd.omega.size(); ++i) {
        out << format_double(rad_to_hz(psd.omega[i])) << ','
            << format_double(one_sided_hz_factor * psd.s[i]) << ','
            << format_double(one_sided_hz_factor * psd.stderr_[i]) << ','
            << psd.n_segments << "\n";
    }
}

}  // namespace inloop
