#include "cdasr/hash.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <cstring>

namespace cdasr {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

ContentHasher& ContentHasher::add(std::string_view field) {
  // length-prefix so that ("ab","c") and ("a","bc") differ
  buffer_ += std::to_string(field.size());
  buffer_ += ':';
  buffer_ += field;
  return *this;
}

ContentHasher& ContentHasher::add(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return add(std::string_view(buf));
}

ContentHasher& ContentHasher::add(long long value) { return add(std::string_view(std::to_string(value))); }

std::string ContentHasher::hex() const { return sha256_hex(buffer_); }

}  // namespace cdasr
