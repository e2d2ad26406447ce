#include "kmv/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>

namespace kmv {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path), columns_(header.size()) {
  if (!out_) throw Error("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out_ << ',';
    out_ << header[i];
  }
  out_ << '\n';
}

void CsvWriter::separator() {
  if (current_) out_ << ',';
  ++current_;
}

void CsvWriter::field(double v) {
  separator();
  out_ << format_double(v);
}

void CsvWriter::field(long long v) {
  separator();
  out_ << v;
}

void CsvWriter::field(const std::string& v) {
  separator();
  out_ << v;
}

void CsvWriter::empty_field() { separator(); }

void CsvWriter::end_row() {
  if (current_ != columns_) throw Error("csv row does not match the header width");
  out_ << '\n';
  current_ = 0;
}

void CsvWriter::close() { out_.close(); }

void write_trajectory(const TrajectoryRecord& traj, const std::filesystem::path& dir,
                      bool with_meta) {
  std::filesystem::create_directories(dir);
  if (with_meta) {
    nlohmann::json meta = {
        {"schema", "kinetic-mv/trajectory/1"},
        {"seed", traj.seed},
        {"dt", traj.dt},
        {"config", traj.config_echo},
    };
    write_json(meta, dir / "meta.json");
  }

  if (traj.snapshots.empty()) return;
  const int dim = traj.snapshots.front().state.dim;
  std::vector<std::string> header = {"t", "particle_id"};
  for (int c = 0; c < dim; ++c) header.push_back("x_" + std::to_string(c));
  for (int c = 0; c < dim; ++c) header.push_back("y_" + std::to_string(c));
  CsvWriter snapshots(dir / "snapshots.csv", header);
  for (const auto& snap : traj.snapshots) {
    const auto& e = snap.state;
    for (std::size_t i = 0; i < e.n; ++i) {
      snapshots.field(snap.t);
      snapshots.field(static_cast<long long>(i));
      for (double v : e.x(i)) snapshots.field(v);
      for (double v : e.y(i)) snapshots.field(v);
      snapshots.end_row();
    }
  }
  snapshots.close();

  const bool with_moments = traj.snapshots.front().moments.has_value();
  if (!with_moments) return;
  CsvWriter moments(dir / "moments.csv", {"t", "k", "l", "m_kl", "a_k"});
  for (const auto& snap : traj.snapshots) {
    const auto& table = *snap.moments;
    for (int s = 0; s <= kernels::kMomentMaxOrder; ++s) {
      for (int k = 0; k <= s; ++k) {
        const int l = s - k;
        moments.field(snap.t);
        moments.field(static_cast<long long>(k));
        moments.field(static_cast<long long>(l));
        moments.field(table.m_kl(k, l));
        if (l == 0 && k >= 1) {
          moments.field(table.a_k(k));
        } else {
          moments.empty_field();
        }
        moments.end_row();
      }
    }
  }
  moments.close();
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return j;
}

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), used to pin reference artifacts on disk.

namespace {

struct Sha256 {
  std::uint32_t h[8] = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
                        0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
  unsigned char buf[64];
  std::size_t buf_len = 0;
  std::uint64_t total = 0;

  static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

  void block(const unsigned char* p) {
    static const std::uint32_t k[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
        0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
        0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
        0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
        0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
        0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
        0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
        0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
        0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
        0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
             (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4], f = h[5], g = h[6], hh = h[7];
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 = hh + s1 + ch + k[i] + w[i];
      const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = s0 + maj;
      hh = g;
      g = f;
      f = e;
      e = d + t1;
      d = c;
      c = b;
      b = a;
      a = t1 + t2;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
    h[5] += f;
    h[6] += g;
    h[7] += hh;
  }

  void update(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    total += size;
    while (size) {
      const std::size_t take = std::min(size, sizeof(buf) - buf_len);
      std::memcpy(buf + buf_len, p, take);
      buf_len += take;
      p += take;
      size -= take;
      if (buf_len == sizeof(buf)) {
        block(buf);
        buf_len = 0;
      }
    }
  }

  std::string finish() {
    const std::uint64_t bits = total * 8;
    const unsigned char one = 0x80;
    update(&one, 1);
    const unsigned char zero = 0x00;
    while (buf_len != 56) update(&zero, 1);
    unsigned char len[8];
    for (int i = 0; i < 8; ++i) len[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
    update(len, 8);
    char hex[65];
    for (int i = 0; i < 8; ++i) std::snprintf(hex + 8 * i, 9, "%08x", h[i]);
    return std::string(hex, 64);
  }
};

}  // namespace

std::string sha256_bytes(const void* data, std::size_t size) {
  Sha256 s;
  s.update(data, size);
  return s.finish();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Sha256 s;
  char chunk[1 << 16];
  while (in) {
    in.read(chunk, sizeof(chunk));
    s.update(chunk, static_cast<std::size_t>(in.gcount()));
  }
  return s.finish();
}

}  // namespace kmv
