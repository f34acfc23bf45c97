#pragma once

#include "cdasr/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

namespace cdasr {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Feature container: "CDAF", u32 rows, u32 cols, row-major f32, little-endian.
void write_features(const fs::path& path, const FeatureMatrix& features);
FeatureMatrix read_features(const fs::path& path);
std::string encode_features(const FeatureMatrix& features);
FeatureMatrix decode_features(std::string_view bytes);

/// Named float tensors plus a JSON config header.
///
/// Layout (little-endian):
///   "CDCK" | u32 version | u32 config_len | config JSON bytes
///   u32 tensor_count | per tensor: u32 name_len | name | u32 rows | u32 cols | rows*cols f32 (row-major)
struct Checkpoint {
  json config;
  std::map<std::string, MatrixXf> tensors;

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);
  void save(const fs::path& path) const;
  static Checkpoint load(const fs::path& path);
};

std::string read_file(const fs::path& path);
/// Writes via a temporary sibling and rename, so readers never see partial files.
void write_file_atomic(const fs::path& path, std::string_view bytes);

json read_json(const fs::path& path);

std::vector<std::string> read_lines(const fs::path& path);

}  // namespace cdasr
