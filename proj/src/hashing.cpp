#include "tikzmcts/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "tikzmcts/errors.hpp"

namespace tikzmcts {

namespace {

std::string digest(const void* data, std::size_t size) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int md_len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data, size) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &md_len) != 1) {
    throw EnvironmentError("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(md_len * 2);
  for (unsigned int i = 0; i < md_len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  return digest(data.data(), data.size());
}

std::string sha256_hex(std::span<const std::uint8_t> data) {
  return digest(data.data(), data.size());
}

}  // namespace tikzmcts
