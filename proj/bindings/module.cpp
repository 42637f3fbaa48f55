#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "flexcable/analysis.hpp"
#include "flexcable/io.hpp"
#include "flexcable/nmpc.hpp"
#include "flexcable/planner.hpp"
#include "flexcable/scenario.hpp"

namespace py = pybind11;
using namespace flexcable;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quadrotor flexible-cable simulation, reduction and control core";

  py::register_exception<SimError>(m, "SimError");

  py::class_<CableParams>(m, "CableParams")
      .def(py::init<>())
      .def_readwrite("length", &CableParams::length)
      .def_readwrite("cross_section", &CableParams::cross_section)
      .def_readwrite("density", &CableParams::density)
      .def_readwrite("young_modulus", &CableParams::young_modulus)
      .def_readwrite("drag_coeff", &CableParams::drag_coeff)
      .def_readwrite("air_density", &CableParams::air_density)
      .def("axial_stiffness", &CableParams::axial_stiffness)
      .def("total_mass", &CableParams::total_mass);

  py::class_<QuadParams>(m, "QuadParams")
      .def(py::init<>())
      .def_readwrite("mass", &QuadParams::mass)
      .def_readwrite("inertia", &QuadParams::inertia)
      .def_readwrite("gravity", &QuadParams::gravity);

  m.def("table_cable_params", &table_cable_params);
  m.def("table_quad_params", &table_quad_params);
  m.def("experiment_cable_params", &experiment_cable_params);

  py::class_<Attitude>(m, "Attitude")
      .def(py::init<>())
      .def_readwrite("angles", &Attitude::angles)
      .def_readwrite("rates", &Attitude::rates);

  m.def("rotation_from_attitude", &rotation_from_attitude);
  m.def("body_rates_from_euler_rates", &body_rates_from_euler_rates);
  m.def("strain", &strain);
  m.def("internal_force", &internal_force);
  m.def("drag_load", &drag_load);
  m.def("gravity_load", &gravity_load);
  m.def("steady_profile", &steady_profile, py::arg("cable"), py::arg("g"), py::arg("s"));
  m.def("allocate_rotors", [](double thrust, const Vec3& torque, const QuadParams& p) {
    const auto speeds = allocate_rotors(thrust, torque, p);
    return std::vector<double>(speeds.begin(), speeds.end());
  });
  m.def("rotor_wrench", [](const std::vector<double>& speeds, const QuadParams& p) {
    if (speeds.size() != 4) throw DimensionMismatch("need exactly 4 rotor speeds");
    std::array<double, 4> s{speeds[0], speeds[1], speeds[2], speeds[3]};
    const RotorWrench w = rotor_wrench(s, p);
    return py::make_tuple(w.thrust_body, w.torque_body);
  });

  py::class_<FdmConfig>(m, "FdmConfig")
      .def(py::init<>())
      .def_readwrite("segment_count", &FdmConfig::segment_count)
      .def_readwrite("time_step", &FdmConfig::time_step);

  py::class_<FdmState>(m, "FdmState")
      .def(py::init<>())
      .def_readwrite("positions", &FdmState::positions)
      .def_readwrite("velocities", &FdmState::velocities)
      .def_readwrite("att", &FdmState::att);

  m.def("make_vertical_state", &make_vertical_state);
  m.def("make_horizontal_state", &make_horizontal_state);
  m.def("ghost_tail_node", &ghost_tail_node);

  py::class_<FdmInputs>(m, "FdmInputs")
      .def(py::init<>())
      .def_property(
          "rotor_speeds",
          [](const FdmInputs& u) {
            return std::vector<double>(u.rotor_speeds.begin(), u.rotor_speeds.end());
          },
          [](FdmInputs& u, const std::vector<double>& v) {
            if (v.size() != 4) throw DimensionMismatch("need exactly 4 rotor speeds");
            std::copy(v.begin(), v.end(), u.rotor_speeds.begin());
          })
      .def_readwrite("ext_force", &FdmInputs::ext_force);

  py::class_<FdmSim>(m, "FdmSim")
      .def(py::init<CableParams, QuadParams, FdmConfig>())
      .def("rk4_step", &FdmSim::rk4_step)
      .def("spacing", &FdmSim::spacing);

  py::class_<RunRecord>(m, "RunRecord")
      .def_readonly("times", &RunRecord::times)
      .def_readonly("positions", &RunRecord::positions)
      .def_readonly("velocities", &RunRecord::velocities);

  py::class_<SnapshotTensor>(m, "SnapshotTensor")
      .def_readonly("slices", &SnapshotTensor::slices)
      .def_readonly("h_d", &SnapshotTensor::h_d)
      .def_readonly("t_s", &SnapshotTensor::t_s);

  m.def("collect_snapshots", &collect_snapshots);
  m.def("unfold_mode2", &unfold_mode2);

  py::class_<ModeBank>(m, "ModeBank")
      .def_readonly("modes", &ModeBank::modes)
      .def_readonly("singular_values", &ModeBank::singular_values)
      .def_readonly("h_d", &ModeBank::h_d)
      .def_readonly("truncation", &ModeBank::truncation)
      .def_readonly("mode_integrals", &ModeBank::mode_integrals);

  m.def("compute_modes", &compute_modes);
  m.def("restrict_bank", &restrict_bank);
  m.def("energy_ratios", &energy_ratios);

  py::class_<RomState>(m, "RomState")
      .def(py::init(&RomState::zero), py::arg("order"))
      .def_readwrite("coeffs", &RomState::coeffs)
      .def_readwrite("head", &RomState::head)
      .def_readwrite("coeff_rates", &RomState::coeff_rates)
      .def_readwrite("head_vel", &RomState::head_vel)
      .def("to_vector", &RomState::to_vector)
      .def_static("from_vector", &RomState::from_vector);

  m.def("project", &project);
  m.def("reconstruct", [](const RomState& s, const ModeBank& bank) {
    Mat3X pos, vel;
    reconstruct(s, bank, pos, vel);
    return py::make_tuple(pos, vel);
  });

  py::class_<RomDynamics>(m, "RomDynamics")
      .def(py::init<const ModeBank&, const CableParams&, double, int>())
      .def("rhs", &RomDynamics::rhs)
      .def("rhs_jacobian", &RomDynamics::rhs_jacobian)
      .def("step", &RomDynamics::step)
      .def("dim", &RomDynamics::dim)
      .def("input_matrix", &RomDynamics::input_matrix);

  m.def("rom_equilibrium", &rom_equilibrium);

  py::class_<OcpConfig>(m, "OcpConfig")
      .def(py::init<>())
      .def_readwrite("horizon", &OcpConfig::horizon)
      .def_readwrite("step", &OcpConfig::step)
      .def_readwrite("q_diag", &OcpConfig::q_diag)
      .def_readwrite("r_diag", &OcpConfig::r_diag)
      .def_readwrite("u_lower", &OcpConfig::u_lower)
      .def_readwrite("u_upper", &OcpConfig::u_upper)
      .def_readwrite("tolerance", &OcpConfig::tolerance)
      .def_readwrite("max_iterations", &OcpConfig::max_iterations)
      .def_readwrite("momentum", &OcpConfig::momentum);

  py::class_<OcpSolution>(m, "OcpSolution")
      .def_readonly("inputs", &OcpSolution::inputs)
      .def_readonly("objective", &OcpSolution::objective)
      .def_readonly("iterations", &OcpSolution::iterations)
      .def_readonly("converged", &OcpSolution::converged)
      .def_readonly("solve_seconds", &OcpSolution::solve_seconds);

  py::class_<RomPrediction>(m, "RomPrediction")
      .def(py::init<RomDynamics, double>())
      .def("step", &RomPrediction::step);

  m.def(
      "solve_ocp",
      [](const RomPrediction& pred, const VecX& x0, const std::vector<VecX>& refs,
         const OcpConfig& cfg) { return solve_ocp(pred, x0, refs, cfg); },
      py::arg("prediction"), py::arg("x0"), py::arg("reference"), py::arg("config"));

  py::class_<PsoConfig>(m, "PsoConfig")
      .def(py::init<>())
      .def_readwrite("swarm", &PsoConfig::swarm)
      .def_readwrite("iterations", &PsoConfig::iterations)
      .def_readwrite("seed", &PsoConfig::seed);

  py::class_<PsoResult>(m, "PsoResult")
      .def_readonly("best", &PsoResult::best)
      .def_readonly("best_fitness", &PsoResult::best_fitness)
      .def_readonly("trace", &PsoResult::trace);

  m.def("pso_minimize",
        [](const std::function<double(const VecX&)>& f, const VecX& lo, const VecX& hi,
           const PsoConfig& cfg) { return pso_minimize(f, lo, hi, cfg); });

  m.def("circle_reference", [](double t) {
    const PositionReference r = circle_reference(t);
    return py::make_tuple(r.position, r.velocity, r.acceleration);
  });

  py::class_<WindowConstraint>(m, "WindowConstraint")
      .def(py::init<>())
      .def_readwrite("plane_axis", &WindowConstraint::plane_axis)
      .def_readwrite("plane_offset", &WindowConstraint::plane_offset)
      .def_readwrite("box_axes", &WindowConstraint::box_axes)
      .def_readwrite("lower", &WindowConstraint::lower)
      .def_readwrite("upper", &WindowConstraint::upper);

  py::class_<WindowReport>(m, "WindowReport")
      .def_readonly("feasible", &WindowReport::feasible)
      .def_readonly("worst_margin", &WindowReport::worst_margin)
      .def_readonly("crossings", &WindowReport::crossings);

  m.def("check_window", &check_window);

  m.def("metric_em", &metric_em);
  m.def("metric_es", &metric_es);
  m.def("metric_et", &metric_et);
  m.def("downsample_grid", &downsample_grid);

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def(py::init<>())
      .def_readwrite("kind", &ScenarioConfig::kind)
      .def_readwrite("controller", &ScenarioConfig::controller)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def_readwrite("cable", &ScenarioConfig::cable)
      .def_readwrite("quad", &ScenarioConfig::quad)
      .def_readwrite("fdm", &ScenarioConfig::fdm)
      .def_readwrite("rom_order", &ScenarioConfig::rom_order)
      .def_readwrite("duration", &ScenarioConfig::duration)
      .def_readwrite("target", &ScenarioConfig::target)
      .def("total_mass", &ScenarioConfig::total_mass);

  m.def("sim_profile", &sim_profile);
  m.def("experiment_profile", &experiment_profile);
  m.def("build_bank", &build_bank);
  m.def("steady_rom_state", &steady_rom_state);
  m.def("run_steady_hold", &run_steady_hold, py::arg("config"), py::arg("duration"),
        py::arg("kick_velocity"), py::arg("record_every"));
}
