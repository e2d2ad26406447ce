#pragma once

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "kmv/simulator.hpp"

namespace kmv {

// Fixed 17-significant-digit formatting so CSV artifacts are byte-stable.
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void field(double v);
  void field(long long v);
  void field(const std::string& v);
  void empty_field();
  void end_row();
  void close();

 private:
  void separator();
  std::ofstream out_;
  std::size_t columns_ = 0;
  std::size_t current_ = 0;
};

// Directory layout: meta.json (config echo, seed, schema version),
// snapshots.csv (t, particle_id, x_0.., y_0..) and, when recorded,
// moments.csv (t, k, l, m_kl, a_k). `with_meta = false` skips meta.json for
// callers that write their own.
void write_trajectory(const TrajectoryRecord& traj, const std::filesystem::path& dir,
                      bool with_meta = true);

void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(const void* data, std::size_t size);

}  // namespace kmv
