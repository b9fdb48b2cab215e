#include "hipal/checkpoint.hpp"

#include "hipal/error.hpp"

#include <cstdint>
#include <fstream>

namespace hipal {
namespace {

constexpr char kMagic[8] = {'H', 'I', 'P', 'A', 'L', 'C', 'K', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("checkpoint: truncated file");
  return v;
}

std::string read_string(std::istream& is) {
  const auto n = read_pod<std::uint64_t>(is);
  if (n > (1ull << 32)) throw Error("checkpoint: corrupt string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw Error("checkpoint: truncated file");
  return s;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint64_t>(os, config.size());
  os.write(config.data(), static_cast<std::streamsize>(config.size()));
  write_pod<std::uint64_t>(os, blobs.size());
  for (const auto& [name, m] : blobs) {
    write_pod<std::uint64_t>(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::int64_t>(os, m.rows());
    write_pod<std::int64_t>(os, m.cols());
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!os) throw Error("checkpoint: write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kMagic)) throw Error("checkpoint: bad magic in " + path.string());
  Checkpoint ck;
  ck.config = read_string(is);
  const auto count = read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = read_string(is);
    const auto rows = read_pod<std::int64_t>(is);
    const auto cols = read_pod<std::int64_t>(is);
    if (rows < 0 || cols < 0) throw Error("checkpoint: negative shape for " + name);
    Matrix m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw Error("checkpoint: truncated blob " + name);
    ck.blobs.emplace(std::move(name), std::move(m));
  }
  return ck;
}

void Checkpoint::put(std::span<const NamedParameter> params) {
  for (const auto& np : params) blobs[np.name] = np.param->value;
}

void Checkpoint::get(std::span<const NamedParameter> params) const {
  for (const auto& np : params) {
    auto it = blobs.find(np.name);
    if (it == blobs.end()) throw Error("checkpoint: missing parameter " + np.name);
    if (it->second.rows() != np.param->rows() || it->second.cols() != np.param->cols())
      throw Error("checkpoint: shape mismatch for " + np.name);
    np.param->value = it->second;
  }
}

}  // namespace hipal
