#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "inloop/filter_design.hpp"
#include "inloop/occupancy.hpp"
#include "inloop/psd.hpp"
#include "inloop/simulate.hpp"

using namespace inloop;
using Catch::Approx;

namespace {

constexpr double fig3_n_s = 2270817.2839506166;

PhysicalParams fig3_params(double detuning_hz = 330e3) {
    PhysicalParams p;
    p.omega_m = hz_to_rad(343.13e3);
    p.gamma_m = hz_to_rad(1.18);
    p.kappa = hz_to_rad(22e3);
    p.kappa0 = hz_to_rad(11e3);
    p.kappa_prime = hz_to_rad(11e3);
    p.kappa_dprime = 0.0;
    p.g0 = hz_to_rad(1.8);
    p.eta = 0.9;
    p.n_th = 1.8217543615621984e7;
    p.pump_power = 10e-6;
    p.laser_wavelength = 1064e-9;
    p.delta0 = hz_to_rad(detuning_hz) +
               2.0 * p.g0 * p.g0 * fig3_n_s / p.omega_m;
    return p;
}

FeedbackFilter fig3_filter(const PhysicalParams& p) {
    return calibrate_loop_filter(
        p, fig3_n_s,
        EffectiveCavity{hz_to_rad(1210.0), hz_to_rad(342.65e3)},
        hz_to_rad(80e3));
}

SimConfig quiet_config(double duration, std::uint64_t seed = 1) {
    SimConfig cfg;
    cfg.dt = 2.5e-8;
    cfg.duration = duration;
    cfg.seed = seed;
    cfg.record_decimation = 1;
    return cfg;
}

}  // namespace

TEST_CASE("noise-free ringdown at the mechanical frequency", "[simulate]") {
    PhysicalParams p = fig3_params();
    p.gamma_m = hz_to_rad(200.0);  // fast decay keeps the run short
    FeedbackFilter off;
    SteadyStateBranch wp = pinned_working_point(p, off, 0.0);

    SimConfig cfg = quiet_config(4e-3);
    cfg.noise_scales = NoiseScales{0.0, 0.0, 0.0, 0.0, 0.0};
    cfg.q0 = 1.0;
    const SimResult res = run_simulation(p, off, wp, cfg);
    REQUIRE_FALSE(res.diverged);

    // fit: envelope e^{-gamma t / 2}, zero crossings at omega_m
    // amplitude from quadrature pair (q, p)
    std::size_t i1 = res.q.size() / 10, i2 = res.q.size() - 1;
    const double a1 = std::hypot(res.q[i1], res.p[i1]);
    const double a2 = std::hypot(res.q[i2], res.p[i2]);
    const double t1 = double(i1 + 1) * res.dt_sample;
    const double t2 = double(i2 + 1) * res.dt_sample;
    const double rate = -2.0 * std::log(a2 / a1) / (t2 - t1);
    CHECK(rate == Approx(p.gamma_m).epsilon(1e-3));

    // oscillation frequency from zero crossings of q
    int crossings = 0;
    for (std::size_t i = 1; i < res.q.size(); ++i)
        if ((res.q[i - 1] < 0.0) != (res.q[i] < 0.0)) ++crossings;
    const double freq = 0.5 * double(crossings) /
                        (double(res.q.size()) * res.dt_sample);
    CHECK(freq == Approx(rad_to_hz(p.omega_m)).epsilon(1e-3));
}

TEST_CASE("equipartition of the thermal oscillator", "[simulate]") {
    PhysicalParams p = fig3_params();
    p.gamma_m = hz_to_rad(2000.0);  // >= 100 relaxation times in the run
    p.n_th = 50.0;
    FeedbackFilter off;
    SteadyStateBranch wp = pinned_working_point(p, off, 0.0);

    SimConfig cfg = quiet_config(0.05, 77);
    const SimResult res = run_simulation(p, off, wp, cfg);
    REQUIRE_FALSE(res.diverged);
    const std::size_t skip = res.q.size() / 10;
    double vq = 0.0, vp = 0.0;
    for (std::size_t i = skip; i < res.q.size(); ++i) {
        vq += res.q[i] * res.q[i];
        vp += res.p[i] * res.p[i];
    }
    vq /= double(res.q.size() - skip);
    vp /= double(res.q.size() - skip);
    // Var(q) = Var(p) = n_th + 1/2; ~100 independent samples -> ~15% s.e.
    CHECK(vq == Approx(p.n_th + 0.5).epsilon(0.35));
    CHECK(vp == Approx(p.n_th + 0.5).epsilon(0.35));
}

TEST_CASE("anti-squashed cavity linewidth matches kappa_eff", "[simulate]") {
    // loop on, G = 0: the in-loop amplitude quadrature rings at the
    // effective linewidth. A pure anti-squashing loop (delta_eff = Delta)
    // keeps the narrow-band linewidth quantitative.
    PhysicalParams p = fig3_params();
    p.g0 = 1e-6;  // decouple mechanics but keep the loop alive
    const double delta = detuning_at(p, fig3_n_s);
    const FeedbackFilter f = calibrate_loop_filter(
        p, fig3_n_s, EffectiveCavity{0.1 * p.kappa, delta}, hz_to_rad(80e3));
    const SteadyStateBranch wp = pinned_working_point(p, f, fig3_n_s);
    const EffectiveCavity eff = effective_cavity(p, f, fig3_n_s);
    REQUIRE(eff.kappa_eff == Approx(0.1 * p.kappa).epsilon(1e-6));

    SimConfig cfg = quiet_config(0.4, 99);
    cfg.record_decimation = 6;
    const SimResult res = run_simulation(p, f, wp, cfg);
    REQUIRE_FALSE(res.diverged);

    const PsdEstimate psd = estimate_psd(res.re_a, res.dt_sample, 1 << 14);
    // fit a Lorentzian half width: locate the peak, then the half-power
    // points on either side
    std::size_t kp = 0;
    for (std::size_t k = 1; k < psd.omega.size(); ++k)
        if (psd.s[k] > psd.s[kp]) kp = k;
    const double top = psd.s[kp];
    std::size_t kl = kp, kr = kp;
    while (kl > 0 && psd.s[kl] > top / 2.0) --kl;
    while (kr + 1 < psd.omega.size() && psd.s[kr] > top / 2.0) ++kr;
    const double width = 0.5 * (psd.omega[kr] - psd.omega[kl]);
    CHECK(width == Approx(eff.kappa_eff).epsilon(0.25));
    // and the line sits at the effective detuning
    CHECK(psd.omega[kp] == Approx(eff.delta_eff).epsilon(0.01));
}

TEST_CASE("determinism and divergence detection", "[simulate]") {
    PhysicalParams p = fig3_params();
    FeedbackFilter f = fig3_filter(p);
    const SteadyStateBranch wp = pinned_working_point(p, f, fig3_n_s);

    SECTION("identical seeds give bit-identical series") {
        SimConfig cfg = quiet_config(2e-3, 4242);
        const SimResult a = run_simulation(p, f, wp, cfg);
        const SimResult b = run_simulation(p, f, wp, cfg);
        REQUIRE(a.q.size() == b.q.size());
        for (std::size_t i = 0; i < a.q.size(); ++i) {
            CHECK(a.q[i] == b.q[i]);
            CHECK(a.photocurrent[i] == b.photocurrent[i]);
        }
    }

    SECTION("different seeds differ") {
        SimConfig cfg = quiet_config(1e-3, 1);
        SimConfig cfg2 = quiet_config(1e-3, 2);
        const SimResult a = run_simulation(p, f, wp, cfg);
        const SimResult b = run_simulation(p, f, wp, cfg2);
        CHECK(a.q.back() != b.q.back());
    }

    SECTION("past-threshold loop diverges and is reported") {
        const FeedbackFilter hot = with_normalized_gain(f, p, fig3_n_s, 1.1);
        SimConfig cfg = quiet_config(0.2, 7);
        const SimResult res = run_simulation(p, hot, wp, cfg);
        CHECK(res.diverged);
        CHECK(std::isfinite(res.blowup_time));
    }

    SECTION("dt limit enforced") {
        SimConfig cfg = quiet_config(1e-3);
        cfg.dt = 1e-6;  // omega_m dt > 0.1
        CHECK_THROWS_AS(run_simulation(p, f, wp, cfg), ConfigError);
    }
}

TEST_CASE("dynamical stability classification", "[simulate]") {
    PhysicalParams p = fig3_params();
    FeedbackFilter f = fig3_filter(p);

    SECTION("no loop, red detuning, weak coupling: stable") {
        FeedbackFilter off;
        const SteadyStateBranch wp = pinned_working_point(p, off, fig3_n_s);
        const StabilityReport rep = dynamical_stability(p, off, wp);
        CHECK(rep.stable);
    }

    SECTION("loop past threshold: unstable with rate ~ |kappa_eff|") {
        // G = 0 so the optics alone set the leading rate; deep resolved
        // sideband keeps the narrow-band rate prediction quantitative
        PhysicalParams pg = p;
        pg.g0 = 1e-9;
        pg.omega_m = hz_to_rad(2.2e6);
        pg.delta0 = pg.omega_m;
        const double delta = detuning_at(pg, fig3_n_s);
        const FeedbackFilter base = calibrate_loop_filter(
            pg, fig3_n_s, EffectiveCavity{0.5 * pg.kappa, delta},
            0.25 * delta);
        const FeedbackFilter hot =
            with_normalized_gain(base, pg, fig3_n_s, 1.15);
        const EffectiveCavity eff = effective_cavity(pg, hot, fig3_n_s);
        REQUIRE(eff.kappa_eff < 0.0);
        const SteadyStateBranch wp = pinned_working_point(pg, hot, fig3_n_s);
        const StabilityReport rep = dynamical_stability(pg, hot, wp);
        CHECK_FALSE(rep.stable);
        CHECK(rep.leading_rate == Approx(-eff.kappa_eff).epsilon(0.30));
    }

    SECTION("below threshold: stable, consistent with no divergence") {
        const FeedbackFilter warm = with_normalized_gain(f, p, fig3_n_s, 0.9);
        const SteadyStateBranch wp = pinned_working_point(p, warm, fig3_n_s);
        CHECK(dynamical_stability(p, warm, wp).stable);
    }

    SECTION("blue detuning heats past the mechanical linewidth") {
        // Gamma_eff < -gamma_m triggers the optomechanical instability
        PhysicalParams blue = fig3_params();
        blue.delta0 = -hz_to_rad(343.13e3);
        FeedbackFilter off;
        // scan the coupling threshold: A+ - A- = gamma_m
        const EffectiveCavity eff{blue.kappa, detuning_at(blue, 0.0)};
        auto net_heating = [&](double n_s) {
            const CoolingRates r =
                cooling_rates(blue, eff, coupling_G(blue, n_s));
            return -r.gamma_eff - blue.gamma_m;  // > 0 means unstable
        };
        double lo = 1e3, hi = 1e9;
        REQUIRE(net_heating(lo) < 0.0);
        REQUIRE(net_heating(hi) > 0.0);
        for (int i = 0; i < 60; ++i) {
            const double mid = std::sqrt(lo * hi);
            (net_heating(mid) < 0.0 ? lo : hi) = mid;
        }
        const double n_crit = std::sqrt(lo * hi);
        const StabilityReport below = dynamical_stability(
            blue, off, pinned_working_point(blue, off, 0.3 * n_crit));
        const StabilityReport above = dynamical_stability(
            blue, off, pinned_working_point(blue, off, 3.0 * n_crit));
        CHECK(below.stable);
        CHECK_FALSE(above.stable);
    }
}

TEST_CASE("delayed loop: buffer quantisation and convergence", "[simulate]") {
    PhysicalParams p = fig3_params();
    FeedbackFilter f = fig3_filter(p);
    f.delay = 1.0e-6;  // 40 steps of 2.5e-8
    const SteadyStateBranch wp = pinned_working_point(p, f, fig3_n_s);

    SECTION("dt must divide the delay") {
        SimConfig cfg = quiet_config(1e-3);
        cfg.dt = 3.22e-8;  // rounds to 31 steps, 1.8% off the delay
        CHECK_THROWS_AS(run_simulation(p, f, wp, cfg), ConfigError);
    }

    SECTION("delayed run is finite and deterministic") {
        SimConfig cfg = quiet_config(5e-3, 5);
        const SimResult a = run_simulation(p, f, wp, cfg);
        const SimResult b = run_simulation(p, f, wp, cfg);
        REQUIRE_FALSE(a.diverged);
        CHECK(a.q == b.q);
    }
}
