#include "cotforge/digest.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include "cotforge/errors.hpp"

namespace cotforge {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::missing_artifact: return "missing-artifact";
    case ErrorKind::backend_unavailable: return "backend-unavailable";
    case ErrorKind::protocol: return "protocol-error";
    case ErrorKind::template_error: return "template-error";
    case ErrorKind::configuration: return "configuration-error";
    case ErrorKind::candidate_parse: return "candidate-parse-error";
    case ErrorKind::selector: return "selector-error";
    case ErrorKind::critique: return "critique-error";
    case ErrorKind::invalid_plan: return "invalid-plan";
    case ErrorKind::invalid_record: return "invalid-record";
    case ErrorKind::unrecoverable_run: return "unrecoverable-run";
    case ErrorKind::storage: return "storage-error";
  }
  return "unknown-error";
}

Digest sha256(std::string_view bytes) {
  Digest out{};
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), out.data());
  return out;
}

std::string to_hex(const Digest& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(d.size() * 2);
  for (auto b : d) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

std::string sha256_hex(std::string_view bytes) { return to_hex(sha256(bytes)); }

Digest digest_from_hex(std::string_view hex) {
  require(hex.size() == 64, ErrorKind::invalid_input, "digest hex must be 64 characters");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Digest d{};
  for (std::size_t i = 0; i < d.size(); ++i) {
    int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
    require(hi >= 0 && lo >= 0, ErrorKind::invalid_input, "digest hex contains non-hex characters");
    d[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return d;
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                          reinterpret_cast<const unsigned char*>(bytes.data()),
                          static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char c : text)
    if (c != '\n' && c != '\r' && c != ' ') clean.push_back(c);
  require(clean.size() % 4 == 0, ErrorKind::protocol, "base64 payload length is not a multiple of 4");
  std::string out(3 * clean.size() / 4, '\0');
  int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                          reinterpret_cast<const unsigned char*>(clean.data()),
                          static_cast<int>(clean.size()));
  require(n >= 0, ErrorKind::protocol, "invalid base64 payload");
  // EVP_DecodeBlock keeps the bytes that padding stands in for.
  std::size_t pad = 0;
  if (!clean.empty() && clean.back() == '=') ++pad;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::uint64_t digest_prefix_u64(const Digest& d) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = v << 8 | d[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace cotforge
