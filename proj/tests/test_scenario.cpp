#include "doctest.h"
#include "flexcable/scenario.hpp"
#include "support/test_helpers.hpp"

using namespace flexcable;
using flexcable::testing::small_bank;
using flexcable::testing::small_config;

TEST_CASE("profiles carry the published weight sets") {
  const ScenarioConfig sim = sim_profile();
  CHECK(sim.ocp.q_diag.size() == 24);
  CHECK(sim.ocp.q_diag[0] == 100.0);
  CHECK(sim.ocp.q_diag[9] == 20.0);
  CHECK(sim.ocp.r_diag.x() == 0.001);
  CHECK(sim.ocp.steps() == 20);
  CHECK(sim.q_window[9] == 200.0);
  CHECK(sim.cable.young_modulus == 1e5);

  const ScenarioConfig ex = experiment_profile();
  CHECK(ex.cable.cross_section == doctest::Approx(3.1416e-6));
  CHECK(ex.cable.drag_coeff == doctest::Approx(0.0013648));
  CHECK(ex.ocp.steps() == 3);
  CHECK(ex.ocp.q_diag[9] == 500.0);
  CHECK(ex.ocp.r_diag.x() == 0.05);
  CHECK(ex.q_window[9] == 10000.0);
  CHECK(ex.window.plane_axis == 1);
  CHECK(ex.window.upper[1] == doctest::Approx(1.8 - 0.11));
  CHECK_THROWS_AS(profile_by_name("unknown"), ConfigError);
}

TEST_CASE("collect produces a well-formed tensor and a high-energy bank") {
  ScenarioConfig cfg = small_config();
  cfg.sweep.duration = 6.0;
  const CollectResult res = run_collect(cfg, cfg.collect_grid);
  CHECK(res.tensor.grid_intervals() == cfg.collect_grid);
  const int expected_slices =
      static_cast<int>(std::llround(cfg.sweep.duration / cfg.sample_period)) + 1;
  CHECK(static_cast<int>(res.tensor.slices.size()) == expected_slices);

  const ModeBank bank = reduce_tensor(res.tensor, 3);
  const VecX ratios = energy_ratios(bank.singular_values);
  CHECK(ratios.head(3).sum() > 0.99);
  const MatX gram = bank.modes.transpose() * bank.modes;
  CHECK((gram - MatX::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("steady reduced target matches the projected steady shape") {
  const ScenarioConfig cfg = small_config();
  const ModeBank& bank = small_bank();
  const RomState eq = steady_rom_state(bank, cfg.cable, cfg.quad.gravity, Vec3(1, -1, 0), 3);
  CHECK((eq.head - Vec3(1, -1, 0)).norm() == 0.0);
  CHECK(eq.head_vel.norm() == 0.0);
  CHECK(eq.coeff_rates.cwiseAbs().maxCoeff() == 0.0);
  CHECK(eq.coeffs.cwiseAbs().maxCoeff() > 0.1);  // sag carries real coefficients
}

TEST_CASE("short regulation runs work for both controllers") {
  ScenarioConfig cfg = small_config();
  cfg.duration = 4.0;
  cfg.target = Vec3(0.3, -0.2, 0.1);
  const ModeBank& bank = small_bank();

  const ClosedLoopResult pid = run_regulation(cfg, bank, "pid", cfg.gains);
  CHECK(pid.es_series.size() == 200);
  CHECK(pid.fe > 0.0);
  CHECK(std::isfinite(pid.fe));
  CHECK(pid.telemetry.empty());

  const ClosedLoopResult nmpc = run_regulation(cfg, bank, "nmpc", cfg.gains);
  CHECK(nmpc.es_series.size() == 200);
  CHECK(std::isfinite(nmpc.fe));
  CHECK(nmpc.telemetry.size() == 200);
  // Both controllers must have shrunk the error well below its start.
  CHECK(nmpc.es_series.back() < 0.2 * nmpc.es_series.front());
  CHECK(pid.es_series.back() < 0.2 * pid.es_series.front());

  SUBCASE("identical configs replay identically") {
    const ClosedLoopResult again = run_regulation(cfg, bank, "nmpc", cfg.gains);
    CHECK(again.fe == nmpc.fe);
    REQUIRE(again.run.frames() == nmpc.run.frames());
    CHECK((again.run.positions.back() - nmpc.run.positions.back()).cwiseAbs().maxCoeff() ==
          0.0);
  }
}

TEST_CASE("scenario dispatch validates the kind") {
  ScenarioConfig cfg = small_config();
  cfg.kind = "no-such-kind";
  cfg.out_dir = std::filesystem::temp_directory_path() / "flexcable_unknown_kind";
  CHECK_THROWS_AS(run_scenario(cfg), ConfigError);
}
