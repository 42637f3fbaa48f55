#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "flexcable/analysis.hpp"
#include "flexcable/fdm_sim.hpp"
#include "flexcable/pod_rom.hpp"

namespace flexcable {

// 17-significant-digit decimal form; round-trips doubles exactly.
std::string format_double(double v);

std::uint64_t fnv1a64(const std::string& bytes);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hash_hex(std::uint64_t h);

// Trajectory CSV: t,entity,idx,x,y,z,vx,vy,vz with entity in {node, attitude};
// attitude rows carry angles and rates in the same columns.
void write_run_record(const std::filesystem::path& path, const RunRecord& run);
RunRecord read_run_record(const std::filesystem::path& path);

// Snapshot tensor: data CSV (one row per time slice) plus a JSON meta file
// holding the shape, spacings and the data hash.
void write_snapshot_tensor(const std::filesystem::path& csv_path,
                           const SnapshotTensor& tensor);
SnapshotTensor read_snapshot_tensor(const std::filesystem::path& csv_path);

// Mode bank: CSV matrix of the modes (one mode per column) plus a JSON header
// with singular values, spacing, truncation and source provenance. Loading
// verifies the stored self-hash and the orthonormality bound.
void write_mode_bank(const std::filesystem::path& csv_path, const ModeBank& bank,
                     const std::string& source_hash);
ModeBank read_mode_bank(const std::filesystem::path& csv_path);

// Marker recording CSV: t,marker,x,y,z.
void write_recording(const std::filesystem::path& path, const PointCloudRecording& rec);
PointCloudRecording read_recording(const std::filesystem::path& path);

struct TelemetryRow {
  double t = 0.0;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  double solve_ms = 0.0;
  Vec3 input = Vec3::Zero();
};
// Per-tick solver telemetry: t,iters,converged,obj,solve_ms,ux,uy,uz.
void write_telemetry(const std::filesystem::path& path,
                     const std::vector<TelemetryRow>& rows);

// Replay manifest: config echo, seed, toolkit version and input hashes.
void write_manifest(const std::filesystem::path& dir, const nlohmann::json& config_echo,
                    std::uint64_t seed,
                    const std::vector<std::pair<std::string, std::string>>& input_hashes);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

extern const char* const kToolkitVersion;

}  // namespace flexcable
