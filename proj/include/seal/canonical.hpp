#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "seal/crypto.hpp"
#include "seal/errors.hpp"

namespace seal {

using Json = nlohmann::json;

namespace detail {

inline void append_escaped(std::string& out, const std::string& s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

}  // namespace detail

// Canonical serialization: UTF-8, object keys sorted (nlohmann objects are
// key-ordered maps), no whitespace, floats at 17 significant digits.
// Byte-stable across runs and platforms, so it is safe to hash.
inline void canonical_dump(const Json& j, std::string& out) {
  switch (j.type()) {
    case Json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        detail::append_escaped(out, it.key());
        out += ':';
        canonical_dump(it.value(), out);
      }
      out += '}';
      break;
    }
    case Json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ',';
        first = false;
        canonical_dump(v, out);
      }
      out += ']';
      break;
    }
    case Json::value_t::string:
      detail::append_escaped(out, j.get<std::string>());
      break;
    case Json::value_t::boolean:
      out += j.get<bool>() ? "true" : "false";
      break;
    case Json::value_t::number_integer:
      out += std::to_string(j.get<std::int64_t>());
      break;
    case Json::value_t::number_unsigned:
      out += std::to_string(j.get<std::uint64_t>());
      break;
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) throw Error("canonical_dump: non-finite number");
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out += buf;
      break;
    }
    case Json::value_t::null:
      out += "null";
      break;
    default:
      throw Error("canonical_dump: unsupported JSON value type");
  }
}

inline std::string canonical_dump(const Json& j) {
  std::string out;
  out.reserve(256);
  canonical_dump(j, out);
  return out;
}

// Content digest of a JSON document in canonical form. Keys listed in
// `volatile_keys` (top level only, e.g. timestamps) are dropped first so
// digests stay stable across re-runs.
inline std::string canonical_digest(
    Json j, const std::vector<std::string>& volatile_keys = {"created_at"}) {
  if (j.is_object()) {
    for (const auto& k : volatile_keys) j.erase(k);
  }
  return crypto::sha256_hex(canonical_dump(j));
}

}  // namespace seal
