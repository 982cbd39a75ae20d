#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "inloop/errors.hpp"
#include "inloop/params.hpp"
#include "inloop/response.hpp"
#include "inloop/steady_state.hpp"

// Time-domain integration of the linearised classical stochastic dynamics
// with the feedback loop realised exactly as the analytic model sees it:
// the same rational filter as a state-space block plus a delay buffer.
//
// Noise model: the classical analogue of the symmetrised vacuum inputs.
// Each optical channel is complex white noise v = (w1 + i w2)/2 with w_i of
// unit two-sided PSD, so the amplitude quadrature (v + v*) has PSD 1; the
// thermal force has PSD gamma_m (2 n_th + 1).
//
// Integration: with zero loop delay the full closed loop (mechanics, cavity
// quadratures, filter states) is one constant-coefficient linear SDE and is
// advanced with the exact discretisation: x -> e^{A dt} x + w,
// w ~ N(0, Q_dt) with Q_dt from the Van Loan block exponential. There is no
// step-size bias in this path. With a nonzero delay the loop input is held
// over each step (ring buffer of photocurrent samples) and the noise uses a
// midpoint-coloured increment, accurate to O(dt^2) per step.

namespace inloop {

struct NoiseScales {
    double thermal = 1.0;
    double input_vac = 1.0;      // a_in
    double output_vac = 1.0;     // a'_in (transmission port, detected)
    double internal_vac = 1.0;   // a''_in
    double detection_vac = 1.0;  // c (detector inefficiency)
};

struct SimConfig {
    double dt = 0.0;        // s
    double duration = 0.0;  // s
    std::uint64_t seed = 1;
    int record_decimation = 1;
    NoiseScales noise_scales;
    // optional deterministic initial displacement/fluctuation
    double q0 = 0.0;
    double p0 = 0.0;
    double re_a0 = 0.0;
    double im_a0 = 0.0;

    void validate(const PhysicalParams& p, const FeedbackFilter& f,
                  double delta) const {
        if (!(dt > 0.0) || !(duration >= dt))
            throw ConfigError("SimConfig: need dt > 0 and duration >= dt");
        if (record_decimation < 1)
            throw ConfigError("SimConfig: record_decimation must be >= 1");
        double fastest = std::max({p.kappa, p.omega_m, std::abs(delta)});
        for (const auto& pole : f.poles)
            fastest = std::max(fastest, std::abs(pole));
        if (dt * fastest > 0.1)
            throw ConfigError(
                "SimConfig: dt too large; dt * max rate = " +
                std::to_string(dt * fastest) + " exceeds 0.1");
        if (f.delay > 0.0) {
            const double steps = std::round(f.delay / dt);
            if (steps < 1.0 || std::abs(steps * dt - f.delay) > 0.01 * f.delay)
                throw ConfigError(
                    "SimConfig: dt must divide the loop delay within 1%");
        }
    }
};

struct SimResult {
    double dt_sample = 0.0;  // dt * record_decimation
    std::vector<double> q, p, re_a, im_a, photocurrent;
    bool diverged = false;
    double blowup_time = std::numeric_limits<double>::quiet_NaN();
};

// Simulator state snapshot (exposed mainly for tests).
struct SimState {
    Eigen::VectorXd x;                  // [q, p, Re a, Im a, filter states]
    std::vector<double> delay_buffer;   // past in-loop photocurrent samples
    std::size_t buffer_pos = 0;
};

namespace detail {

// Deterministic normal sampler (polar Box-Muller over mt19937_64) so that
// identical seeds give bit-identical series on any platform.
class GaussianRng {
public:
    explicit GaussianRng(std::uint64_t seed) : eng_(seed) {}

    double operator()() {
        if (have_) {
            have_ = false;
            return cached_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        cached_ = v * f;
        have_ = true;
        return u * f;
    }

private:
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }
    std::mt19937_64 eng_;
    bool have_ = false;
    double cached_ = 0.0;
};

// Monic polynomial with the given roots; ascending real coefficients.
// Imaginary parts must cancel (roots closed under conjugation).
inline std::vector<double> real_poly_from_roots(
    const std::vector<complex>& roots) {
    std::vector<complex> c{1.0};
    for (const auto& r : roots) {
        std::vector<complex> nxt(c.size() + 1, complex(0.0, 0.0));
        for (std::size_t i = 0; i < c.size(); ++i) {
            nxt[i + 1] += c[i];
            nxt[i] -= r * c[i];
        }
        c = std::move(nxt);
    }
    std::vector<double> out(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
    return out;
}

// Controllable canonical realisation of gain * prod(s-z)/prod(s-p) (strictly
// proper), built in frequency-normalised form: the companion matrix of the
// raw polynomial has entries spanning |p|^n and wrecks the eigenvalue and
// matrix-exponential conditioning, so the poles are scaled to order one and
// the state-space is rescaled back afterwards. State dimension equals the
// pole count.
struct FilterStateSpace {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd C;
};

inline FilterStateSpace realize_filter(const FeedbackFilter& f) {
    const int n = static_cast<int>(f.poles.size());
    FilterStateSpace ss;
    ss.A = Eigen::MatrixXd::Zero(n, n);
    ss.B = Eigen::VectorXd::Zero(n);
    ss.C = Eigen::RowVectorXd::Zero(n);
    if (n == 0) return ss;
    double scale = 0.0;
    for (const auto& p : f.poles) scale = std::max(scale, std::abs(p));
    std::vector<complex> poles_n, zeros_n;
    for (const auto& p : f.poles) poles_n.push_back(p / scale);
    for (const auto& z : f.zeros) zeros_n.push_back(z / scale);
    const std::vector<double> den = real_poly_from_roots(poles_n);
    std::vector<double> num = real_poly_from_roots(zeros_n);
    // H(s) = gain * scale^(nz - n) * N(s/scale) / D(s/scale)
    const double c_scale =
        f.gain * std::pow(scale, double(f.zeros.size()) - double(n));
    for (int i = 0; i + 1 < n; ++i) ss.A(i, i + 1) = scale;
    for (int j = 0; j < n; ++j) ss.A(n - 1, j) = -den[j] * scale;
    ss.B(n - 1) = 1.0;
    for (std::size_t j = 0; j < num.size() && j < static_cast<std::size_t>(n);
         ++j)
        ss.C(static_cast<int>(j)) = num[j] * c_scale * scale;
    return ss;
}

// Discrete covariance of the exact OU step via the Van Loan block
// exponential: Q_dt = e^{A dt} * E12 with exp([[-A, Qc],[0, A^T]] dt) =
// [[E11, E12],[0, E22]].
inline Eigen::MatrixXd van_loan_qd(const Eigen::MatrixXd& A,
                                   const Eigen::MatrixXd& Qc, double dt) {
    const int n = static_cast<int>(A.rows());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    M.topLeftCorner(n, n) = -A;
    M.topRightCorner(n, n) = Qc;
    M.bottomRightCorner(n, n) = A.transpose();
    const Eigen::MatrixXd E = (M * dt).exp();
    Eigen::MatrixXd Qd = (A * dt).exp() * E.topRightCorner(n, n);
    return 0.5 * (Qd + Qd.transpose());
}

// Symmetric square root with eigenvalue clamping (Q_dt can be numerically
// semidefinite when few channels drive many states).
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& Q) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
    Eigen::VectorXd lam = es.eigenvalues();
    for (int i = 0; i < lam.size(); ++i) lam[i] = std::sqrt(std::max(lam[i], 0.0));
    return es.eigenvectors() * lam.asDiagonal();
}

struct LoopMatrices {
    Eigen::MatrixXd a_closed;   // plant + filter, loop closed (no delay)
    Eigen::MatrixXd a_open;     // same but with the filter input cut
    Eigen::VectorXd b_input;    // filter input port (held photocurrent)
    Eigen::MatrixXd sigma;      // noise input matrix, unit-PSD channels
    double k_y = 0.0;           // photocurrent gain on Re a
    double y_noise_out = 0.0;   // photocurrent coefficient of w3 (a' quad)
    double y_noise_det = 0.0;   // photocurrent coefficient of w7 (c quad)
    int n_states = 0;
    int n_filter = 0;
};

// Channels: [w_th, a_in x2, a' x2, a'' x2, c x2] = 9 unit-PSD white noises.
inline LoopMatrices build_matrices(const PhysicalParams& p,
                                   const FeedbackFilter& f,
                                   const SteadyStateBranch& wp,
                                   const NoiseScales& ns) {
    const double G = coupling_G(p, wp.n_s);
    const double theta = theta_delta(p.kappa, wp.delta);
    const double ct = std::cos(theta), st = std::sin(theta);
    const FilterStateSpace fss = realize_filter(f);
    const int nf = static_cast<int>(fss.A.rows());
    const int n = 4 + nf;

    LoopMatrices m;
    m.n_states = n;
    m.n_filter = nf;
    m.k_y = 4.0 * p.eta * p.kappa_prime * wp.alpha_s;
    m.y_noise_out =
        -p.eta * std::sqrt(2.0 * p.kappa_prime) * wp.alpha_s * ns.output_vac;
    m.y_noise_det = std::sqrt(p.eta * (1.0 - p.eta)) *
                    std::sqrt(2.0 * p.kappa_prime) * wp.alpha_s *
                    ns.detection_vac;

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    A(0, 1) = p.omega_m;
    A(1, 0) = -p.omega_m;
    A(1, 1) = -p.gamma_m;
    A(1, 2) = 2.0 * G;
    A(2, 2) = -p.kappa;
    A(2, 3) = wp.delta;
    A(3, 0) = G;
    A(3, 2) = -wp.delta;
    A(3, 3) = -p.kappa;
    const double in_coupling = std::sqrt(2.0 * p.kappa0);
    for (int j = 0; j < nf; ++j) {
        A(2, 4 + j) = in_coupling * ct * fss.C(j);
        A(3, 4 + j) = -in_coupling * st * fss.C(j);
        for (int i = 0; i < nf; ++i) A(4 + i, 4 + j) = fss.A(i, j);
    }
    m.a_open = A;
    m.a_closed = A;
    for (int i = 0; i < nf; ++i) m.a_closed(4 + i, 2) += fss.B(i) * m.k_y;

    m.b_input = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < nf; ++i) m.b_input(4 + i) = fss.B(i);

    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, 9);
    S(1, 0) = std::sqrt(p.gamma_m * (2.0 * p.n_th + 1.0)) * ns.thermal;
    const double half_in = 0.5 * in_coupling * ns.input_vac;
    S(2, 1) = half_in * ct;
    S(2, 2) = half_in * st;
    S(3, 1) = -half_in * st;
    S(3, 2) = half_in * ct;
    const double half_out = 0.5 * std::sqrt(2.0 * p.kappa_prime) * ns.output_vac;
    S(2, 3) = half_out;
    S(3, 4) = half_out;
    const double half_int =
        0.5 * std::sqrt(2.0 * p.kappa_dprime) * ns.internal_vac;
    S(2, 5) = half_int;
    S(3, 6) = half_int;
    // detected photocurrent noise feeds the filter input
    for (int i = 0; i < nf; ++i) {
        S(4 + i, 3) = fss.B(i) * m.y_noise_out;
        S(4 + i, 7) = fss.B(i) * m.y_noise_det;
    }
    m.sigma = S;
    return m;
}

}  // namespace detail

// Full linear drift eigenvalues (mechanics + cavity quadratures + filter
// states + a Pade approximant of the delay). Stable iff all real parts are
// negative; leading_rate is the largest real part (a growth rate when
// positive).
struct StabilityReport {
    bool stable = false;
    double leading_rate = 0.0;  // rad/s
};

[[nodiscard]] inline StabilityReport dynamical_stability(
    const PhysicalParams& p, const FeedbackFilter& f,
    const SteadyStateBranch& wp, int pade_order = 3) {
    const detail::LoopMatrices m =
        detail::build_matrices(p, f, wp, NoiseScales{});
    Eigen::MatrixXd A;
    if (f.delay <= 0.0 || f.is_off()) {
        A = m.a_closed;
    } else {
        // Pade(m,m) of e^{-s tau} in the photocurrent path.
        const int order = std::max(1, pade_order);
        std::vector<double> den(order + 1);
        for (int k = 0; k <= order; ++k) {
            double c = 1.0;
            for (int j = 0; j < k; ++j)
                c *= static_cast<double>((order - j)) /
                     ((2.0 * order - j) * (j + 1.0));
            den[k] = c * std::pow(f.delay, k);
        }
        // den coefficients of (s tau): make monic in s
        std::vector<double> a(order), bnum(order);
        const double lead = den[order];
        for (int k = 0; k < order; ++k) a[k] = den[k] / lead;
        const double d_ft = (order % 2 == 0) ? 1.0 : -1.0;
        // residual numerator (num - d_ft * den) has only even or odd terms
        for (int k = 0; k < order; ++k) {
            const double num_k = ((k % 2 == 0) ? 1.0 : -1.0) * den[k];
            bnum[k] = (num_k - d_ft * den[k]) / lead;
        }
        const int nf = m.n_filter;
        const int n = m.n_states + order;
        A = Eigen::MatrixXd::Zero(n, n);
        A.topLeftCorner(m.n_states, m.n_states) = m.a_open;
        // delay block rows
        for (int i = 0; i + 1 < order; ++i) A(m.n_states + i, m.n_states + i + 1) = 1.0;
        for (int k = 0; k < order; ++k)
            A(m.n_states + order - 1, m.n_states + k) = -a[k];
        A(m.n_states + order - 1, 2) = m.k_y;  // input y = k_y * Re a
        // filter input u = C_d zeta + d_ft * y
        for (int i = 0; i < nf; ++i) {
            for (int k = 0; k < order; ++k)
                A(4 + i, m.n_states + k) += m.b_input(4 + i) * bnum[k];
            A(4 + i, 2) += m.b_input(4 + i) * d_ft * m.k_y;
        }
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(A);
    StabilityReport rep;
    rep.leading_rate = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < es.eigenvalues().size(); ++i)
        rep.leading_rate = std::max(rep.leading_rate, es.eigenvalues()[i].real());
    rep.stable = rep.leading_rate < 0.0;
    return rep;
}

// Fixed-step stochastic integration; see the file header for the scheme.
[[nodiscard]] inline SimResult run_simulation(const PhysicalParams& p,
                                              const FeedbackFilter& f,
                                              const SteadyStateBranch& wp,
                                              const SimConfig& cfg) {
    p.validate();
    f.validate();
    cfg.validate(p, f, wp.delta);

    const detail::LoopMatrices m =
        detail::build_matrices(p, f, wp, cfg.noise_scales);
    const int n = m.n_states;
    const double dt = cfg.dt;
    const std::size_t n_steps =
        static_cast<std::size_t>(std::llround(cfg.duration / dt));
    const int decim = cfg.record_decimation;
    const std::size_t n_rec = n_steps / decim;

    const bool delayed = f.delay > 0.0 && !f.is_off();
    const std::size_t d_steps =
        delayed ? static_cast<std::size_t>(std::llround(f.delay / dt)) : 0;

    Eigen::MatrixXd F, L, Bd;
    if (!delayed) {
        F = (m.a_closed * dt).exp();
        L = detail::psd_sqrt(
            detail::van_loan_qd(m.a_closed, m.sigma * m.sigma.transpose(), dt));
    } else {
        F = (m.a_open * dt).exp();
        // exact held-input map via the augmented exponential
        Eigen::MatrixXd Aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
        Aug.topLeftCorner(n, n) = m.a_open;
        Aug.topRightCorner(n, 1) = m.b_input;
        Bd = (Aug * dt).exp().topRightCorner(n, 1);
        // midpoint-coloured channel increments
        L = (m.a_open * (0.5 * dt)).exp() * m.sigma * std::sqrt(dt);
    }

    detail::GaussianRng rng(cfg.seed);
    // the detector record draws from its own stream so the loop trajectory
    // is independent of the record decimation
    detail::GaussianRng monitor_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    const int n_noise = delayed ? 9 : n;

    SimState state;
    state.x = Eigen::VectorXd::Zero(n);
    state.x(0) = cfg.q0;
    state.x(1) = cfg.p0;
    state.x(2) = cfg.re_a0;
    state.x(3) = cfg.im_a0;
    state.delay_buffer.assign(std::max<std::size_t>(d_steps, 1), 0.0);

    // photocurrent monitoring noise per recorded sample (band-limited to the
    // record rate); in the delayed path the recorded value is the actual
    // loop sample instead.
    const double y_noise_psd =
        m.y_noise_out * m.y_noise_out + m.y_noise_det * m.y_noise_det;
    const double y_noise_sd = std::sqrt(y_noise_psd / (dt * decim));

    // divergence thresholds: 1e6 x expected steady-state scales
    const double q_ref = std::sqrt(p.n_th + 1.0);
    const double kappa_floor =
        std::max(effective_cavity(p, f, wp.n_s).kappa_eff, 0.02 * p.kappa);
    const double a_ref = std::max(
        1.0, q_ref * std::max(1.0, coupling_G(p, wp.n_s) / kappa_floor));
    const double q_limit = 1e6 * q_ref;
    const double a_limit2 = 1e12 * a_ref * a_ref;

    SimResult out;
    out.dt_sample = dt * decim;
    out.q.reserve(n_rec);
    out.p.reserve(n_rec);
    out.re_a.reserve(n_rec);
    out.im_a.reserve(n_rec);
    out.photocurrent.reserve(n_rec);

    Eigen::VectorXd g(n_noise);
    Eigen::VectorXd xnew(n);
    for (std::size_t step = 0; step < n_steps; ++step) {
        if (delayed) {
            for (int i = 0; i < n_noise; ++i) g(i) = rng();
            // photocurrent sample entering the loop now (noise as the
            // ZOH-average of this step's increments)
            const double y_now = m.k_y * state.x(2) +
                                 (m.y_noise_out * g(3) + m.y_noise_det * g(7)) /
                                     std::sqrt(dt);
            const double y_fed = state.delay_buffer[state.buffer_pos];
            state.delay_buffer[state.buffer_pos] = y_now;
            state.buffer_pos = (state.buffer_pos + 1) % d_steps;
            xnew = F * state.x + Bd * y_fed + L * g;
        } else {
            for (int i = 0; i < n_noise; ++i) g(i) = rng();
            xnew = F * state.x + L * g;
        }
        state.x.swap(xnew);

        if ((step & 1023u) == 0u) {
            const double aa =
                state.x(2) * state.x(2) + state.x(3) * state.x(3);
            if (std::abs(state.x(0)) > q_limit || aa > a_limit2 ||
                !std::isfinite(aa)) {
                out.diverged = true;
                out.blowup_time = static_cast<double>(step) * dt;
                break;
            }
        }
        if ((step + 1) % decim == 0) {
            out.q.push_back(state.x(0));
            out.p.push_back(state.x(1));
            out.re_a.push_back(state.x(2));
            out.im_a.push_back(state.x(3));
            if (delayed) {
                const std::size_t last =
                    (state.buffer_pos + d_steps - 1) % d_steps;
                out.photocurrent.push_back(state.delay_buffer[last]);
            } else {
                out.photocurrent.push_back(m.k_y * state.x(2) +
                                           y_noise_sd * monitor_rng());
            }
        }
    }
    return out;
}

}  // namespace inloop
