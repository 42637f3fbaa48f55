#include "flexcable/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace flexcable {

using nlohmann::json;

const char* const kToolkitVersion = "flexcable-0.1.0";

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot open for hashing");
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a64(ss.str());
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError(path.string(), "cannot open for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open for reading");
  return in;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

}  // namespace

void write_run_record(const std::filesystem::path& path, const RunRecord& run) {
  auto out = open_out(path);
  out << "t,entity,idx,x,y,z,vx,vy,vz\n";
  for (std::size_t f = 0; f < run.frames(); ++f) {
    const std::string t = format_double(run.times[f]);
    for (int j = 0; j < run.positions[f].cols(); ++j) {
      out << t << ",node," << j;
      for (int a = 0; a < 3; ++a) out << ',' << format_double(run.positions[f](a, j));
      for (int a = 0; a < 3; ++a) out << ',' << format_double(run.velocities[f](a, j));
      out << '\n';
    }
    if (f < run.attitudes.size()) {
      const Attitude& att = run.attitudes[f];
      out << t << ",attitude,0";
      for (int a = 0; a < 3; ++a) out << ',' << format_double(att.angles[a]);
      for (int a = 0; a < 3; ++a) out << ',' << format_double(att.rates[a]);
      out << '\n';
    }
  }
}

RunRecord read_run_record(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);  // header
  RunRecord run;
  std::vector<Vec3> pos, vel;
  double cur_t = 0.0;
  bool have_frame = false;
  auto flush = [&]() {
    if (!have_frame) return;
    Mat3X p(3, pos.size()), v(3, vel.size());
    for (std::size_t j = 0; j < pos.size(); ++j) {
      p.col(j) = pos[j];
      v.col(j) = vel[j];
    }
    run.times.push_back(cur_t);
    run.positions.push_back(p);
    run.velocities.push_back(v);
    pos.clear();
    vel.clear();
    have_frame = false;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 9) throw ConfigError(path.string(), "malformed trajectory row");
    const double t = std::stod(cells[0]);
    if (have_frame && t != cur_t) flush();
    cur_t = t;
    if (cells[1] == "node") {
      pos.emplace_back(std::stod(cells[3]), std::stod(cells[4]), std::stod(cells[5]));
      vel.emplace_back(std::stod(cells[6]), std::stod(cells[7]), std::stod(cells[8]));
      have_frame = true;
    } else if (cells[1] == "attitude") {
      Attitude att;
      att.angles = Vec3(std::stod(cells[3]), std::stod(cells[4]), std::stod(cells[5]));
      att.rates = Vec3(std::stod(cells[6]), std::stod(cells[7]), std::stod(cells[8]));
      run.attitudes.push_back(att);
    }
  }
  flush();
  return run;
}

void write_snapshot_tensor(const std::filesystem::path& csv_path,
                           const SnapshotTensor& tensor) {
  {
    auto out = open_out(csv_path);
    for (std::size_t k = 0; k < tensor.slices.size(); ++k) {
      const Mat3X& slice = tensor.slices[k];
      out << format_double(k * tensor.t_s);
      for (int j = 0; j < slice.cols(); ++j)
        for (int a = 0; a < 3; ++a) out << ',' << format_double(slice(a, j));
      out << '\n';
    }
  }
  json meta;
  meta["grid_intervals"] = tensor.grid_intervals();
  meta["time_intervals"] = tensor.time_intervals();
  meta["h_d"] = tensor.h_d;
  meta["t_s"] = tensor.t_s;
  meta["data_hash"] = hash_hex(hash_file(csv_path));
  write_json(csv_path.string() + ".json", meta);
}

SnapshotTensor read_snapshot_tensor(const std::filesystem::path& csv_path) {
  const json meta = read_json(csv_path.string() + ".json");
  const std::string recorded = meta.at("data_hash").get<std::string>();
  if (hash_hex(hash_file(csv_path)) != recorded)
    throw StaleArtifact("snapshot tensor data does not match its recorded hash");

  SnapshotTensor tensor;
  tensor.h_d = meta.at("h_d").get<double>();
  tensor.t_s = meta.at("t_s").get<double>();
  const int points = meta.at("grid_intervals").get<int>() + 1;

  auto in = open_in(csv_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (static_cast<int>(cells.size()) != 1 + 3 * points)
      throw ConfigError(csv_path.string(), "malformed tensor row");
    Mat3X slice(3, points);
    for (int j = 0; j < points; ++j)
      for (int a = 0; a < 3; ++a) slice(a, j) = std::stod(cells[1 + 3 * j + a]);
    tensor.slices.push_back(std::move(slice));
  }
  return tensor;
}

void write_mode_bank(const std::filesystem::path& csv_path, const ModeBank& bank,
                     const std::string& source_hash) {
  {
    auto out = open_out(csv_path);
    for (int r = 0; r < bank.modes.rows(); ++r) {
      for (int c = 0; c < bank.modes.cols(); ++c) {
        if (c) out << ',';
        out << format_double(bank.modes(r, c));
      }
      out << '\n';
    }
  }
  json meta;
  meta["h_d"] = bank.h_d;
  meta["truncation"] = bank.truncation;
  json sigma = json::array();
  for (int i = 0; i < bank.singular_values.size(); ++i) sigma.push_back(bank.singular_values[i]);
  meta["singular_values"] = sigma;
  meta["source_hash"] = source_hash;
  meta["data_hash"] = hash_hex(hash_file(csv_path));
  write_json(csv_path.string() + ".json", meta);
}

ModeBank read_mode_bank(const std::filesystem::path& csv_path) {
  const json meta = read_json(csv_path.string() + ".json");
  if (hash_hex(hash_file(csv_path)) != meta.at("data_hash").get<std::string>())
    throw StaleArtifact("mode bank data does not match its recorded hash");

  ModeBank bank;
  bank.h_d = meta.at("h_d").get<double>();
  bank.truncation = meta.at("truncation").get<int>();
  const auto sigma = meta.at("singular_values");
  bank.singular_values = VecX(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i) bank.singular_values[i] = sigma[i];

  std::vector<std::vector<double>> rows;
  auto in = open_in(csv_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(std::stod(c));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(csv_path.string(), "empty mode bank");
  bank.modes.resize(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) bank.modes(r, c) = rows[r][c];

  const MatX gram = bank.modes.transpose() * bank.modes;
  const double ortho =
      (gram - MatX::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  if (ortho > 1e-9) throw StaleArtifact("stored modes are not orthonormal");

  const int m = static_cast<int>(bank.modes.rows()) - 1;
  bank.mode_integrals = VecX::Zero(bank.modes.cols());
  for (int i = 0; i < bank.modes.cols(); ++i) {
    double sum = 0.0;
    for (int j = 1; j <= m; ++j) sum += bank.modes(j, i);
    bank.mode_integrals[i] = sum * std::sqrt(bank.h_d);
  }
  return bank;
}

void write_recording(const std::filesystem::path& path, const PointCloudRecording& rec) {
  auto out = open_out(path);
  out << "t,marker,x,y,z\n";
  for (std::size_t f = 0; f < rec.frames(); ++f)
    for (int k = 0; k < rec.markers[f].cols(); ++k) {
      out << format_double(rec.times[f]) << ',' << k;
      for (int a = 0; a < 3; ++a) out << ',' << format_double(rec.markers[f](a, k));
      out << '\n';
    }
}

PointCloudRecording read_recording(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  PointCloudRecording rec;
  std::vector<Vec3> frame;
  double cur_t = 0.0;
  bool have = false;
  auto flush = [&]() {
    if (!have) return;
    Mat3X m(3, frame.size());
    for (std::size_t k = 0; k < frame.size(); ++k) m.col(k) = frame[k];
    rec.times.push_back(cur_t);
    rec.markers.push_back(m);
    frame.clear();
    have = false;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 5) throw ConfigError(path.string(), "malformed recording row");
    const double t = std::stod(cells[0]);
    if (have && t != cur_t) flush();
    cur_t = t;
    frame.emplace_back(std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4]));
    have = true;
  }
  flush();
  return rec;
}

void write_telemetry(const std::filesystem::path& path,
                     const std::vector<TelemetryRow>& rows) {
  auto out = open_out(path);
  out << "t,iters,converged,obj,solve_ms,ux,uy,uz\n";
  for (const auto& r : rows) {
    out << format_double(r.t) << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ','
        << format_double(r.objective) << ',' << format_double(r.solve_ms);
    for (int a = 0; a < 3; ++a) out << ',' << format_double(r.input[a]);
    out << '\n';
  }
}

void write_manifest(const std::filesystem::path& dir, const json& config_echo,
                    std::uint64_t seed,
                    const std::vector<std::pair<std::string, std::string>>& input_hashes) {
  json m;
  m["version"] = kToolkitVersion;
  m["seed"] = seed;
  m["config"] = config_echo;
  json inputs = json::object();
  for (const auto& [name, hash] : input_hashes) inputs[name] = hash;
  m["input_hashes"] = inputs;
  write_json(dir / "manifest.json", m);
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  auto in = open_in(path);
  json j;
  in >> j;
  return j;
}

}  // namespace flexcable
