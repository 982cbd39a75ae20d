#pragma once

#include <cmath>
#include <limits>

// Unit conventions used throughout the library:
//   * every stored frequency, decay rate and detuning is angular (rad/s);
//   * external interfaces (config files, CSV, CLI flags) use ordinary
//     frequency in Hz and convert by 2*pi at the boundary;
//   * powers are W, temperatures K, delays s, masses kg.

namespace inloop {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// CODATA 2018 exact values.
inline constexpr double hbar = 1.054571817e-34;        // J s
inline constexpr double planck_h = 6.62607015e-34;     // J s
inline constexpr double speed_of_light = 299792458.0;  // m / s
inline constexpr double boltzmann_k = 1.380649e-23;    // J / K

[[nodiscard]] constexpr double hz_to_rad(double f_hz) { return f_hz * two_pi; }
[[nodiscard]] constexpr double rad_to_hz(double w_rad) { return w_rad / two_pi; }

// Hz value whose conversion back to rad/s reproduces `w_rad` bit-exactly
// when such a double exists (it does whenever w_rad was built as x * 2pi).
// Keeps exported configs replayable byte-for-byte.
[[nodiscard]] inline double hz_preserving_rad(double w_rad) {
    double hz = rad_to_hz(w_rad);
    if (hz_to_rad(hz) == w_rad) return hz;
    double up = hz, down = hz;
    for (int i = 0; i < 4; ++i) {
        up = std::nextafter(up, std::numeric_limits<double>::infinity());
        if (hz_to_rad(up) == w_rad) return up;
        down = std::nextafter(down, -std::numeric_limits<double>::infinity());
        if (hz_to_rad(down) == w_rad) return down;
    }
    return hz;
}

}  // namespace inloop
