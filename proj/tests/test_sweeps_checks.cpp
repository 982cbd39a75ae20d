#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "inloop/checks.hpp"
#include "inloop/presets.hpp"
#include "inloop/sweeps.hpp"

using namespace inloop;
using Catch::Approx;

TEST_CASE("detuning sweep finds the avoided crossing", "[sweeps]") {
    const RunConfig cfg = load_preset("fig2");
    REQUIRE(cfg.sweep.has_value());
    const SteadyStateBranch wp = cfg.working_point();
    SpectrumOptions opt = cfg.spectrum;
    opt.n_points = 1200;
    // coarse grid around the crossing (the loop pulls delta_eff upward, so
    // delta_eff = omega_m happens below omega_m on the detuning axis)
    std::vector<double> grid;
    for (int i = 0; i <= 24; ++i)
        grid.push_back(cfg.params.omega_m * (0.945 + 0.06 * i / 24.0));
    const SweepResult res = sweep_detuning(cfg.params, cfg.filter, wp.n_s,
                                           wp.delta, grid, opt, 2);
    CHECK(res.summary.failures == 0);
    REQUIRE(std::isfinite(res.summary.min_gap));
    const double G = coupling_G(cfg.params, wp.n_s);
    // gap minimised near resonance, close to sqrt(2) G and never zero
    CHECK(res.summary.min_gap > 0.0);
    CHECK(res.summary.min_gap == Approx(std::sqrt(2.0) * G).epsilon(0.08));

    SECTION("zero-coupling sweep collapses to the bare line") {
        PhysicalParams weak = cfg.params;
        weak.g0 = 1e-9;  // G ~ 0: no hybridisation anywhere
        const SweepResult flat = sweep_detuning(weak, cfg.filter, wp.n_s,
                                                wp.delta, grid, opt, 2);
        for (const auto& pt : flat.points) {
            if (!pt.ok) continue;
            CHECK(pt.modes.single_peaked);
            CHECK(pt.modes.omega_plus ==
                  Approx(cfg.params.omega_m).epsilon(1e-4));
        }
    }
}

TEST_CASE("gain sweep locates the weak-to-strong transition", "[sweeps]") {
    const RunConfig cfg = load_preset("fig4");
    REQUIRE(cfg.sweep.has_value());
    const SteadyStateBranch wp = cfg.working_point();
    SpectrumOptions opt = cfg.spectrum;
    opt.n_points = 1200;
    std::vector<double> gains;
    for (int i = 0; i <= 25; ++i) gains.push_back(0.97 * i / 25.0);
    const SweepResult res =
        sweep_gain(cfg.params, cfg.filter, wp.n_s, gains, opt, 2);
    CHECK(res.summary.failures == 0);
    REQUIRE(std::isfinite(res.summary.transition_gain));
    CHECK(res.summary.transition_gain > 0.5);
    CHECK(res.summary.transition_gain < 0.97);
    REQUIRE(std::isfinite(res.summary.implied_g));
    // the detuning-corrected estimate carries a few-percent peak-shift
    // systematic near the transition
    const double G = coupling_G(cfg.params, wp.n_s);
    CHECK(res.summary.implied_g == Approx(G).epsilon(0.08));
    // low-gain rows single peaked, max-gain row double peaked
    CHECK(res.points.front().modes.single_peaked);
    CHECK_FALSE(res.points.back().modes.single_peaked);

    // the zero-gain row is the standard sideband-cooled spectrum
    const SweepPoint& first = res.points.front();
    REQUIRE(first.axis_value == 0.0);
    FeedbackFilter off;
    const SteadyStateBranch wp0 =
        pinned_working_point(cfg.params, off, wp.n_s);
    const SpectrumGrid direct = s_qq_approx(
        first.spectrum.omega, EffectiveCavity{cfg.params.kappa, wp0.delta},
        cfg.params, coupling_G(cfg.params, wp.n_s), 0.0);
    for (std::size_t i = 0; i < direct.omega.size(); ++i)
        CHECK(first.spectrum.s_total[i] ==
              Approx(direct.s_total[i]).epsilon(1e-12));
}

TEST_CASE("per-point failures are recorded, the sweep continues", "[sweeps]") {
    const RunConfig cfg = load_preset("fig4");
    const SteadyStateBranch wp = cfg.working_point();
    SpectrumOptions opt = cfg.spectrum;
    opt.n_points = 600;
    // gains beyond threshold make individual points fail
    std::vector<double> gains{0.0, 0.5, 1.2, 0.8};
    const SweepResult res =
        sweep_gain(cfg.params, cfg.filter, wp.n_s, gains, opt, 1);
    CHECK(res.summary.failures == 1);
    CHECK_FALSE(res.points[2].ok);
    CHECK(res.points[2].error.find("kappa_eff") != std::string::npos);
    CHECK(res.points[3].ok);
}

TEST_CASE("sweep outputs are byte-identical across runs", "[sweeps]") {
    namespace fs = std::filesystem;
    const RunConfig cfg = load_preset("fig4");
    const SteadyStateBranch wp = cfg.working_point();
    SpectrumOptions opt = cfg.spectrum;
    opt.n_points = 400;
    std::vector<double> gains{0.0, 0.4, 0.8};
    const auto run_once = [&](const std::string& name) {
        const SweepResult res =
            sweep_gain(cfg.params, cfg.filter, wp.n_s, gains, opt, 2);
        const fs::path path = fs::temp_directory_path() / name;
        write_sweep_csv(res, path.string());
        std::ifstream in(path);
        std::string all((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
        fs::remove(path);
        return all;
    };
    CHECK(run_once("inloop_sweep_a.csv") == run_once("inloop_sweep_b.csv"));
}

TEST_CASE("invariant suite passes on 100 randomized draws", "[checks]") {
    const auto results = run_invariant_checks(2026, 100);
    REQUIRE(results.size() >= 6);
    for (const auto& r : results) {
        INFO(r.name << " worst " << r.worst << " " << r.note);
        CHECK(r.pass);
    }
}
