#include "cdasr/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cdasr {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

namespace {

void put_u32(std::string& out, uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

void put_f32(std::string& out, float v) { out.append(reinterpret_cast<const char*>(&v), 4); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  uint32_t u32() {
    uint32_t v;
    std::memcpy(&v, take(4).data(), 4);
    return v;
  }
  float f32() {
    float v;
    std::memcpy(&v, take(4).data(), 4);
    return v;
  }
  std::string_view take(size_t n) {
    if (pos_ + n > bytes_.size()) throw Error("truncated binary container");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::string encode_features(const FeatureMatrix& features) {
  std::string out = "CDAF";
  put_u32(out, static_cast<uint32_t>(features.rows()));
  put_u32(out, static_cast<uint32_t>(features.cols()));
  out.append(reinterpret_cast<const char*>(features.data()), features.size() * sizeof(float));
  return out;
}

FeatureMatrix decode_features(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != "CDAF") throw Error("bad feature container magic");
  uint32_t rows = r.u32();
  uint32_t cols = r.u32();
  FeatureMatrix m(rows, cols);
  auto payload = r.take(size_t(rows) * cols * sizeof(float));
  std::memcpy(m.data(), payload.data(), payload.size());
  if (!r.done()) throw Error("trailing bytes in feature container");
  return m;
}

void write_features(const fs::path& path, const FeatureMatrix& features) {
  write_file_atomic(path, encode_features(features));
}

FeatureMatrix read_features(const fs::path& path) { return decode_features(read_file(path)); }

std::string Checkpoint::serialize() const {
  std::string out = "CDCK";
  put_u32(out, 1);
  std::string cfg = config.dump();
  put_u32(out, static_cast<uint32_t>(cfg.size()));
  out += cfg;
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<uint32_t>(m.rows()));
    put_u32(out, static_cast<uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put_f32(out, m(i, j));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != "CDCK") throw Error("bad checkpoint magic");
  if (r.u32() != 1) throw Error("unsupported checkpoint version");
  Checkpoint ck;
  uint32_t cfg_len = r.u32();
  ck.config = json::parse(r.take(cfg_len));
  uint32_t n = r.u32();
  for (uint32_t k = 0; k < n; ++k) {
    std::string name(r.take(r.u32()));
    uint32_t rows = r.u32();
    uint32_t cols = r.u32();
    MatrixXf m(rows, cols);
    for (uint32_t i = 0; i < rows; ++i)
      for (uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32();
    ck.tensors.emplace(std::move(name), std::move(m));
  }
  if (!r.done()) throw Error("trailing bytes in checkpoint");
  return ck;
}

void Checkpoint::save(const fs::path& path) const { write_file_atomic(path, serialize()); }

Checkpoint Checkpoint::load(const fs::path& path) { return deserialize(read_file(path)); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) { return json::parse(read_file(path)); }

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace cdasr
