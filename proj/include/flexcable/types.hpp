#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace flexcable {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Mat3X = Eigen::Matrix3Xd;

// Base class for all recoverable simulation/toolkit errors.
class SimError : public std::runtime_error {
 public:
  explicit SimError(const std::string& msg) : std::runtime_error(msg) {}
};

class GimbalLock : public SimError {
 public:
  explicit GimbalLock(double pitch)
      : SimError("pitch angle " + std::to_string(pitch) +
                 " rad is within the kinematic singularity guard band") {}
};

class DegenerateSegment : public SimError {
 public:
  explicit DegenerateSegment(int index)
      : SimError("cable segment at node " + std::to_string(index) +
                 " has near-zero length"),
        index(index) {}
  int index;
};

class NumericalBlowup : public SimError {
 public:
  explicit NumericalBlowup(double t)
      : SimError("state diverged at t = " + std::to_string(t) + " s"), time(t) {}
  double time;
};

class InfeasibleAllocation : public SimError {
 public:
  InfeasibleAllocation() : SimError("rotor allocation requires negative squared speed") {}
};

class UnreachableAttitude : public SimError {
 public:
  UnreachableAttitude() : SimError("commanded acceleration is not realizable by tilting") {}
};

class GridMismatch : public SimError {
 public:
  explicit GridMismatch(const std::string& msg) : SimError(msg) {}
};

class AllZeroSpectrum : public SimError {
 public:
  AllZeroSpectrum() : SimError("all singular values are zero; snapshot data carries no signal") {}
};

class DimensionMismatch : public SimError {
 public:
  explicit DimensionMismatch(const std::string& msg) : SimError(msg) {}
};

class ConfigError : public SimError {
 public:
  explicit ConfigError(const std::string& key, const std::string& why)
      : SimError("config key '" + key + "': " + why), key(key) {}
  std::string key;
};

class InvalidRecording : public SimError {
 public:
  explicit InvalidRecording(const std::string& msg) : SimError(msg) {}
};

class NoConvergence : public SimError {
 public:
  explicit NoConvergence(const std::string& msg) : SimError(msg) {}
};

class StaleArtifact : public SimError {
 public:
  explicit StaleArtifact(const std::string& msg) : SimError(msg) {}
};

}  // namespace flexcable
