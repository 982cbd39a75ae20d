#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "inloop/filter_design.hpp"
#include "inloop/presets.hpp"
#include "sim_oracle_common.hpp"

using namespace inloop;
using Catch::Approx;

TEST_CASE("simulated thermal oscillator PSD matches the analytic curve",
          "[simulate][slow]") {
    // fast, hot oscillator so a short run gives many linewidths of data
    PhysicalParams p;
    p.omega_m = hz_to_rad(343.13e3);
    p.gamma_m = hz_to_rad(400.0);
    p.kappa = hz_to_rad(22e3);
    p.kappa0 = hz_to_rad(11e3);
    p.kappa_prime = hz_to_rad(11e3);
    p.kappa_dprime = 0.0;
    p.g0 = 1e-9;
    p.eta = 0.9;
    p.n_th = 1e5;
    p.pump_power = 0.0;
    p.laser_wavelength = 1064e-9;
    p.delta0 = hz_to_rad(330e3);
    FeedbackFilter off;
    const SteadyStateBranch wp = pinned_working_point(p, off, 0.0);

    SimConfig cfg;
    cfg.dt = 2.5e-8;
    cfg.duration = 0.6;
    cfg.seed = 31415;
    cfg.record_decimation = 40;
    const SimResult res = run_simulation(p, off, wp, cfg);
    REQUIRE_FALSE(res.diverged);

    const std::size_t skip = static_cast<std::size_t>(0.01 / res.dt_sample);
    std::vector<double> q(res.q.begin() + skip, res.q.end());
    const PsdEstimate psd = estimate_psd(q, res.dt_sample, 1 << 13);

    // compare against |chi_m|^2 gamma (2 n_th + 1) / 2pi around the line
    int checked = 0, violations = 0;
    for (std::size_t k = 0; k < psd.omega.size(); ++k) {
        const double w = psd.omega[k];
        if (std::abs(w - p.omega_m) > 20.0 * p.gamma_m) continue;
        const double th = std::norm(chi_m(w, p.omega_m, p.gamma_m)) *
                          p.gamma_m * (2.0 * p.n_th + 1.0) / two_pi;
        ++checked;
        if (std::abs(psd.s[k] - th) > 3.0 * psd.stderr_[k]) ++violations;
    }
    REQUIRE(checked > 50);
    // allow the statistical share of 3-sigma excursions
    CHECK(violations <= std::max(2, checked / 100));
}

TEST_CASE("simulator matches the exact spectrum at a feedback working point",
          "[simulate][slow]") {
    const RunConfig cfg = load_preset("fig3");
    const FeedbackFilter f =
        with_normalized_gain(cfg.filter, cfg.params, cfg.n_s, 0.5);
    const SteadyStateBranch wp = pinned_working_point(cfg.params, f, cfg.n_s);

    testing::OracleSettings st;
    st.duration = 0.9;
    st.coarse_bins = 12;
    st.seed = 555;
    const auto cmp = testing::compare_sim_to_theory(cfg.params, f, wp, st);
    REQUIRE_FALSE(cmp.diverged);
    REQUIRE(cmp.n_segments >= 8);
    for (const auto& bin : cmp.bins) {
        INFO("omega/2pi = " << rad_to_hz(bin.omega) << " Hz, z = " << bin.z);
        CHECK(std::abs(bin.z) <= 3.0);
    }
}

TEST_CASE("step-size convergence of the delayed-loop integrator",
          "[simulate][slow]") {
    // the zero-delay path is exact; the held-input delayed path must
    // converge as dt shrinks
    const RunConfig run = load_preset("fig3");
    PhysicalParams p = run.params;
    FeedbackFilter f = with_normalized_gain(run.filter, p, run.n_s, 0.8);
    f.delay = 1.0e-6;
    const SteadyStateBranch wp = pinned_working_point(p, f, run.n_s);

    auto peak_stats = [&](double dt, int decim) {
        SimConfig cfg;
        cfg.dt = dt;
        cfg.duration = 0.5;
        cfg.seed = 2718;
        cfg.record_decimation = decim;
        const SimResult res = run_simulation(p, f, wp, cfg);
        REQUIRE_FALSE(res.diverged);
        const std::size_t skip =
            static_cast<std::size_t>(0.02 / res.dt_sample);
        std::vector<double> q(res.q.begin() + skip, res.q.end());
        const PsdEstimate psd = estimate_psd(q, res.dt_sample, 1 << 14);
        // dominant peak location and half-power width
        std::size_t kp = 1;
        for (std::size_t k = 1; k + 1 < psd.omega.size(); ++k)
            if (psd.s[k] > psd.s[kp]) kp = k;
        std::size_t kl = kp, kr = kp;
        while (kl > 0 && psd.s[kl] > 0.5 * psd.s[kp]) --kl;
        while (kr + 1 < psd.omega.size() && psd.s[kr] > 0.5 * psd.s[kp]) ++kr;
        return std::pair<double, double>(psd.omega[kp],
                                         psd.omega[kr] - psd.omega[kl]);
    };

    const auto coarse = peak_stats(2.5e-8, 40);
    const auto fine = peak_stats(1.25e-8, 80);
    CHECK(std::abs(fine.first - coarse.first) / fine.first < 1e-3);
    CHECK(std::abs(fine.second - coarse.second) / fine.second < 0.25);
}

TEST_CASE("stability report consistent with observed divergence",
          "[simulate][slow]") {
    const RunConfig run = load_preset("fig3");
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 6; ++trial) {
        const double gain = 0.3 + 1.0 * u(rng);  // straddles the threshold
        const FeedbackFilter f =
            with_normalized_gain(run.filter, run.params, run.n_s, gain);
        const SteadyStateBranch wp =
            pinned_working_point(run.params, f, run.n_s);
        const StabilityReport rep =
            dynamical_stability(run.params, f, wp);
        SimConfig cfg;
        cfg.dt = 2.5e-8;
        cfg.duration = 0.25;
        cfg.seed = 1000 + trial;
        cfg.record_decimation = 50;
        const SimResult res = run_simulation(run.params, f, wp, cfg);
        INFO("gain " << gain << " leading rate " << rep.leading_rate);
        if (res.diverged) {
            // no false "stable" with an observed blow-up
            CHECK_FALSE(rep.stable);
        }
        if (rep.stable) CHECK_FALSE(res.diverged);
    }
}
