#pragma once

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "seal/errors.hpp"

namespace seal::crypto {

using Bytes = std::vector<std::uint8_t>;

inline std::array<std::uint8_t, 32> sha256(const void* data, std::size_t len) {
  std::array<std::uint8_t, 32> out{};
  unsigned int outlen = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data, len) != 1 ||
      EVP_DigestFinal_ex(ctx, out.data(), &outlen) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256 failed");
  }
  EVP_MD_CTX_free(ctx);
  return out;
}

inline std::string to_hex(const std::uint8_t* p, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string s(n * 2, '0');
  for (std::size_t i = 0; i < n; ++i) {
    s[2 * i] = digits[p[i] >> 4];
    s[2 * i + 1] = digits[p[i] & 0xf];
  }
  return s;
}

inline std::string sha256_hex(const std::string& s) {
  const auto d = sha256(s.data(), s.size());
  return to_hex(d.data(), d.size());
}

inline std::string sha256_hex(const Bytes& b) {
  const auto d = sha256(b.data(), b.size());
  return to_hex(d.data(), d.size());
}

constexpr std::size_t kKeyBytes = 32;
constexpr std::size_t kNonceBytes = 12;
constexpr std::size_t kTagBytes = 16;

struct AeadResult {
  Bytes ciphertext;
  std::array<std::uint8_t, kTagBytes> tag;
};

// AES-256-GCM. The nonce must be fresh per call; callers draw it from
// their RNG so sealing stays reproducible under a fixed seed.
inline AeadResult aead_encrypt(const Bytes& plaintext, const Bytes& key,
                               const std::array<std::uint8_t, kNonceBytes>& nonce) {
  if (key.size() != kKeyBytes) throw WrongKeyLength("expected 32-byte key");
  AeadResult r;
  r.ciphertext.resize(plaintext.size());
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  int len = 0;
  bool ok = ctx &&
            EVP_EncryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, key.data(),
                               nonce.data()) == 1 &&
            (plaintext.empty() ||
             EVP_EncryptUpdate(ctx, r.ciphertext.data(), &len,
                               plaintext.data(),
                               static_cast<int>(plaintext.size())) == 1) &&
            EVP_EncryptFinal_ex(ctx, r.ciphertext.data() + len, &len) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_GET_TAG, kTagBytes,
                                r.tag.data()) == 1;
  EVP_CIPHER_CTX_free(ctx);
  if (!ok) throw Error("aead_encrypt failed");
  return r;
}

inline Bytes aead_decrypt(const Bytes& ciphertext, const Bytes& key,
                          const std::array<std::uint8_t, kNonceBytes>& nonce,
                          const std::array<std::uint8_t, kTagBytes>& tag) {
  if (key.size() != kKeyBytes) throw WrongKeyLength("expected 32-byte key");
  Bytes plain(ciphertext.size());
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  int len = 0;
  bool ok = ctx &&
            EVP_DecryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, key.data(),
                               nonce.data()) == 1 &&
            (ciphertext.empty() ||
             EVP_DecryptUpdate(ctx, plain.data(), &len, ciphertext.data(),
                               static_cast<int>(ciphertext.size())) == 1);
  if (ok) {
    auto tag_copy = tag;
    ok = EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_TAG, kTagBytes,
                             tag_copy.data()) == 1 &&
         EVP_DecryptFinal_ex(ctx, plain.data() + len, &len) == 1;
  }
  EVP_CIPHER_CTX_free(ctx);
  if (!ok) throw AuthFailure("ciphertext failed authentication");
  return plain;
}

}  // namespace seal::crypto
