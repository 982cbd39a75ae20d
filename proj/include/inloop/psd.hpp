#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <fftw3.h>

#include "inloop/errors.hpp"
#include "inloop/units.hpp"

// Averaged-periodogram (Welch) spectral estimation. The output follows the
// library-wide convention: two-sided density in angular frequency, units
// 1/(rad/s), reported on the nonnegative-frequency bins of the real FFT.

namespace inloop {

enum class PsdWindow { hann, rectangular };

struct PsdEstimate {
    std::vector<double> omega;    // rad/s, bins k = 0 .. nfft/2
    std::vector<double> s;        // two-sided density per (rad/s)
    std::vector<double> stderr_;  // standard error of each bin mean
    int n_segments = 0;
    double resolution = 0.0;      // bin spacing, rad/s
};

// Per-segment periodograms; estimate_psd averages these. Kept public so
// tests can aggregate bins before computing error bars.
struct WelchSegments {
    std::vector<double> omega;
    std::vector<std::vector<double>> power;  // [segment][bin]
};

[[nodiscard]] inline WelchSegments welch_segments(
    const std::vector<double>& x, double dt, std::size_t nfft,
    double overlap = 0.5, PsdWindow window = PsdWindow::hann) {
    if (!(dt > 0.0)) throw ConfigError("welch_segments: dt must be > 0");
    if (nfft < 16) throw ConfigError("welch_segments: nfft must be >= 16");
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw ConfigError("welch_segments: overlap must lie in [0, 1)");
    const std::size_t hop =
        std::max<std::size_t>(1, static_cast<std::size_t>(
                                     std::llround(nfft * (1.0 - overlap))));
    if (x.size() < nfft)
        throw ConfigError("welch_segments: fewer samples than one segment");
    const std::size_t n_seg = 1 + (x.size() - nfft) / hop;

    std::vector<double> win(nfft, 1.0);
    if (window == PsdWindow::hann)
        for (std::size_t i = 0; i < nfft; ++i)
            win[i] = 0.5 * (1.0 - std::cos(two_pi * double(i) / double(nfft)));
    double wsum2 = 0.0;
    for (double w : win) wsum2 += w * w;

    WelchSegments out;
    const std::size_t nbins = nfft / 2 + 1;
    out.omega.resize(nbins);
    for (std::size_t k = 0; k < nbins; ++k)
        out.omega[k] = two_pi * double(k) / (double(nfft) * dt);
    out.power.assign(n_seg, std::vector<double>(nbins, 0.0));

    std::vector<double> buf(nfft);
    std::vector<fftw_complex> spec(nbins);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), buf.data(),
                                          spec.data(), FFTW_ESTIMATE);
    // two-sided per-Hz normalisation dt/sum(w^2), then / 2pi for rad/s
    const double norm = dt / (wsum2 * two_pi);
    for (std::size_t s = 0; s < n_seg; ++s) {
        const double* seg = x.data() + s * hop;
        for (std::size_t i = 0; i < nfft; ++i) buf[i] = seg[i] * win[i];
        fftw_execute_dft_r2c(plan, buf.data(), spec.data());
        for (std::size_t k = 0; k < nbins; ++k)
            out.power[s][k] =
                norm * (spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1]);
    }
    fftw_destroy_plan(plan);
    return out;
}

// Windowed averaged periodogram with per-bin standard errors. Requires at
// least 8 segments so the error bars mean something.
[[nodiscard]] inline PsdEstimate estimate_psd(const std::vector<double>& x,
                                              double dt, std::size_t nfft,
                                              double overlap = 0.5,
                                              PsdWindow window =
                                                  PsdWindow::hann) {
    WelchSegments seg = welch_segments(x, dt, nfft, overlap, window);
    const std::size_t n_seg = seg.power.size();
    if (n_seg < 8)
        throw ConfigError("estimate_psd: need >= 8 segments (have " +
                          std::to_string(n_seg) + "); supply more data or a "
                          "shorter segment length");
    const std::size_t nbins = seg.omega.size();
    PsdEstimate out;
    out.omega = std::move(seg.omega);
    out.s.assign(nbins, 0.0);
    out.stderr_.assign(nbins, 0.0);
    out.n_segments = static_cast<int>(n_seg);
    out.resolution = out.omega[1] - out.omega[0];
    for (std::size_t k = 0; k < nbins; ++k) {
        double mean = 0.0;
        for (std::size_t s = 0; s < n_seg; ++s) mean += seg.power[s][k];
        mean /= double(n_seg);
        double var = 0.0;
        for (std::size_t s = 0; s < n_seg; ++s) {
            const double d = seg.power[s][k] - mean;
            var += d * d;
        }
        var /= double(n_seg - 1);
        out.s[k] = mean;
        out.stderr_[k] = std::sqrt(var / double(n_seg));
    }
    return out;
}

}  // namespace inloop
