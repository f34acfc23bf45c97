#pragma once

#include <string>
#include <string_view>

namespace cdasr {

/// Hex SHA-256 of a byte string. Used as the content hash for cached artifacts.
std::string sha256_hex(std::string_view bytes);

/// Incremental content hasher; feed fields in a fixed order.
class ContentHasher {
 public:
  ContentHasher& add(std::string_view field);
  ContentHasher& add(double value);
  ContentHasher& add(long long value);
  std::string hex() const;

 private:
  std::string buffer_;
};

}  // namespace cdasr
