#pragma once

#include "hipal/ad.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>

namespace hipal {

/// Binary container of named matrices plus a textual config echo.
///
/// Layout (little endian): magic "HIPALCK1", u64 config length, config
/// bytes, u64 blob count, then per blob: u64 name length, name, i64 rows,
/// i64 cols, rows*cols doubles in column-major order.
struct Checkpoint {
  std::string config;
  std::map<std::string, Matrix> blobs;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  void put(std::span<const NamedParameter> params);
  /// Loads every parameter by name; throws on a missing blob or shape mismatch.
  void get(std::span<const NamedParameter> params) const;
};

}  // namespace hipal
