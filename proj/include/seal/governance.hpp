#pragma once

// Governance layer: conjunctive policy authorization, a lifecycle state
// machine with a hash-chained append-only history, and authenticated
// encryption for dataset sharing.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "seal/canonical.hpp"
#include "seal/crypto.hpp"
#include "seal/datagen.hpp"
#include "seal/ercd.hpp"
#include "seal/errors.hpp"
#include "seal/rng.hpp"

namespace seal::gov {

using num::RngStream;

// ---------------------------------------------------------------------------
// Policies and authorization
// ---------------------------------------------------------------------------

enum class PolicyKind {
  role_required,
  consent_required,
  certification_required,
  metadata_predicate,
};

struct Policy {
  std::string policy_id;
  PolicyKind kind = PolicyKind::role_required;
  std::map<std::string, std::string> params;
};

struct UserContext {
  std::string user_id;
  std::set<std::string> roles;
  std::set<std::string> consents;
};

struct PolicyVerdict {
  std::string policy_id;
  bool passed = false;
  std::string reason;
};

struct AuthResult {
  bool granted = false;
  std::vector<PolicyVerdict> verdicts;
};

inline const std::string& require_param(const Policy& p,
                                        const std::string& key) {
  const auto it = p.params.find(key);
  if (it == p.params.end())
    throw MalformedPolicy("policy " + p.policy_id + ": missing param '" +
                          key + "'");
  return it->second;
}

inline PolicyVerdict eval_policy(const Policy& p, const UserContext& user,
                                 const Json& meta) {
  PolicyVerdict v;
  v.policy_id = p.policy_id;
  switch (p.kind) {
    case PolicyKind::role_required: {
      const auto& role = require_param(p, "role");
      v.passed = user.roles.count(role) > 0;
      v.reason = v.passed ? "role present" : "missing role '" + role + "'";
      break;
    }
    case PolicyKind::consent_required: {
      const auto& consent = require_param(p, "consent");
      v.passed = user.consents.count(consent) > 0;
      v.reason =
          v.passed ? "consent present" : "missing consent '" + consent + "'";
      break;
    }
    case PolicyKind::certification_required: {
      const std::string key = p.params.count("key") ? p.params.at("key")
                                                    : "validation_verdict";
      const std::string want =
          p.params.count("value") ? p.params.at("value") : "pass";
      v.passed = meta.contains(key) && meta.at(key).is_string() &&
                 meta.at(key).get<std::string>() == want;
      v.reason = v.passed ? "certified" : "metadata '" + key + "' != '" +
                                              want + "'";
      break;
    }
    case PolicyKind::metadata_predicate: {
      const auto& key = require_param(p, "key");
      const auto& op = require_param(p, "op");
      const auto& want = require_param(p, "value");
      if (!meta.contains(key)) {
        v.passed = false;
        v.reason = "metadata key '" + key + "' absent";
        break;
      }
      const Json& have = meta.at(key);
      if (op == "eq" || op == "ne") {
        const std::string s =
            have.is_string() ? have.get<std::string>() : have.dump();
        v.passed = (op == "eq") == (s == want);
      } else if (op == "lt" || op == "le" || op == "gt" || op == "ge") {
        if (!have.is_number())
          throw MalformedPolicy("policy " + p.policy_id +
                                ": ordered comparison on non-number");
        const double a = have.get<double>();
        const double b = std::stod(want);
        v.passed = (op == "lt" && a < b) || (op == "le" && a <= b) ||
                   (op == "gt" && a > b) || (op == "ge" && a >= b);
      } else {
        throw MalformedPolicy("policy " + p.policy_id + ": unknown op '" +
                              op + "'");
      }
      v.reason = v.passed ? "predicate holds" : "predicate fails";
      break;
    }
  }
  return v;
}

// Auth = AND over all policies; the empty conjunction grants (supply a
// default-deny policy if that is not wanted).
inline AuthResult authorize(const UserContext& user, const Json& meta,
                            const std::vector<Policy>& policies) {
  AuthResult r;
  r.granted = true;
  for (const auto& p : policies) {
    r.verdicts.push_back(eval_policy(p, user, meta));
    r.granted = r.granted && r.verdicts.back().passed;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Lifecycle state machine with hash-chained history
// ---------------------------------------------------------------------------

enum class State {
  Generated,
  Augmented,
  Calibrated,
  Validated,
  Certified,
  Rejected,
  Archived,
};

inline const char* to_string(State s) {
  switch (s) {
    case State::Generated: return "Generated";
    case State::Augmented: return "Augmented";
    case State::Calibrated: return "Calibrated";
    case State::Validated: return "Validated";
    case State::Certified: return "Certified";
    case State::Rejected: return "Rejected";
    case State::Archived: return "Archived";
  }
  return "?";
}

// Legal (state, action) -> state transitions.
inline std::optional<State> next_state(State s, const std::string& action) {
  using enum State;
  static const std::map<std::pair<State, std::string>, State> table = {
      {{Generated, "ercd_complete"}, Augmented},
      {{Augmented, "fl_round_complete"}, Calibrated},
      {{Calibrated, "fl_round_complete"}, Calibrated},  // self-loop
      {{Calibrated, "metrics_computed"}, Validated},
      {{Validated, "audit_pass"}, Certified},
      {{Validated, "audit_fail"}, Rejected},
      {{Rejected, "recalibrate"}, Calibrated},
      {{Certified, "share"}, Certified},  // sharing is logged, not a move
      {{Certified, "archive"}, Archived},
  };
  const auto it = table.find({s, action});
  if (it == table.end()) return std::nullopt;
  return it->second;
}

struct HistoryEntry {
  std::string prev_state;
  std::string state;
  std::string action;
  std::string actor;
  std::string timestamp;
  std::string prev_hash;   // hex; genesis = 64 zeros
  std::string entry_hash;  // hex
};

inline const std::string kGenesisHash(64, '0');

struct LifecycleRecord {
  State state = State::Generated;
  std::vector<HistoryEntry> history;
};

inline Json entry_body_json(const HistoryEntry& e) {
  return Json{{"prev_state", e.prev_state},
              {"state", e.state},
              {"action", e.action},
              {"actor", e.actor},
              {"timestamp", e.timestamp}};
}

inline std::string chain_hash(const std::string& prev_hash_hex,
                              const HistoryEntry& e) {
  return crypto::sha256_hex(prev_hash_hex +
                            canonical_dump(entry_body_json(e)));
}

// True iff replaying the history from Generated reproduces every entry hash
// and the final state.
inline bool verify_chain(const LifecycleRecord& rec) {
  State s = State::Generated;
  std::string prev = kGenesisHash;
  for (const auto& e : rec.history) {
    if (e.prev_state != to_string(s)) return false;
    const auto next = next_state(s, e.action);
    if (!next || to_string(*next) != e.state) return false;
    if (e.prev_hash != prev) return false;
    if (chain_hash(prev, e) != e.entry_hash) return false;
    s = *next;
    prev = e.entry_hash;
  }
  return s == rec.state;
}

inline LifecycleRecord transition(const LifecycleRecord& rec,
                                  const std::string& action,
                                  const std::string& actor,
                                  const std::string& timestamp) {
  if (!verify_chain(rec))
    throw ChainCorrupt("transition: history fails replay");
  const auto next = next_state(rec.state, action);
  if (!next)
    throw IllegalTransition(std::string("transition: '") + action +
                            "' not legal in state " + to_string(rec.state));
  LifecycleRecord out = rec;
  HistoryEntry e;
  e.prev_state = to_string(rec.state);
  e.state = to_string(*next);
  e.action = action;
  e.actor = actor;
  e.timestamp = timestamp;
  e.prev_hash = out.history.empty() ? kGenesisHash
                                    : out.history.back().entry_hash;
  e.entry_hash = chain_hash(e.prev_hash, e);
  out.history.push_back(std::move(e));
  out.state = *next;
  return out;
}

// ---------------------------------------------------------------------------
// Sealed packages (authenticated encryption)
// ---------------------------------------------------------------------------

struct SealedPackage {
  crypto::Bytes ciphertext;
  std::array<std::uint8_t, crypto::kNonceBytes> nonce{};
  std::array<std::uint8_t, crypto::kTagBytes> auth_tag{};
  std::string key_id;
  std::string plaintext_digest;  // hex
};

inline SealedPackage seal(const crypto::Bytes& payload,
                          const crypto::Bytes& key, RngStream& rng,
                          const std::string& key_id = "k0") {
  if (key.size() != crypto::kKeyBytes)
    throw WrongKeyLength("seal: key must be 32 bytes");
  SealedPackage pkg;
  pkg.key_id = key_id;
  for (auto& b : pkg.nonce)
    b = static_cast<std::uint8_t>(rng.next_u64() & 0xff);
  auto enc = crypto::aead_encrypt(payload, key, pkg.nonce);
  pkg.ciphertext = std::move(enc.ciphertext);
  pkg.auth_tag = enc.tag;
  pkg.plaintext_digest = crypto::sha256_hex(payload);
  return pkg;
}

inline crypto::Bytes unseal(const SealedPackage& pkg,
                            const crypto::Bytes& key) {
  if (key.size() != crypto::kKeyBytes)
    throw WrongKeyLength("unseal: key must be 32 bytes");
  auto plain =
      crypto::aead_decrypt(pkg.ciphertext, key, pkg.nonce, pkg.auth_tag);
  if (crypto::sha256_hex(plain) != pkg.plaintext_digest)
    throw DigestMismatch("unseal: plaintext digest mismatch");
  return plain;
}

// Binary layout: magic "SEALPKG1" | u32 version | u32 key_id length |
// key_id bytes | 12-byte nonce | 16-byte tag | ciphertext.
inline void write_package(const SealedPackage& pkg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_package: cannot open " + path);
  out.write("SEALPKG1", 8);
  auto put_u32 = [&out](std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff),
                 static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff),
                 static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
  };
  put_u32(1);
  put_u32(static_cast<std::uint32_t>(pkg.key_id.size()));
  out.write(pkg.key_id.data(),
            static_cast<std::streamsize>(pkg.key_id.size()));
  out.write(reinterpret_cast<const char*>(pkg.nonce.data()),
            static_cast<std::streamsize>(pkg.nonce.size()));
  out.write(reinterpret_cast<const char*>(pkg.auth_tag.data()),
            static_cast<std::streamsize>(pkg.auth_tag.size()));
  out.write(reinterpret_cast<const char*>(pkg.ciphertext.data()),
            static_cast<std::streamsize>(pkg.ciphertext.size()));
}

inline SealedPackage read_package(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_package: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "SEALPKG1")
    throw IoError("read_package: bad magic");
  auto get_u32 = [&in]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  const std::uint32_t version = get_u32();
  if (version != 1) throw IoError("read_package: unsupported version");
  SealedPackage pkg;
  const std::uint32_t klen = get_u32();
  pkg.key_id.resize(klen);
  in.read(pkg.key_id.data(), klen);
  in.read(reinterpret_cast<char*>(pkg.nonce.data()), crypto::kNonceBytes);
  in.read(reinterpret_cast<char*>(pkg.auth_tag.data()), crypto::kTagBytes);
  if (!in) throw IoError("read_package: truncated header");
  pkg.ciphertext.assign(std::istreambuf_iterator<char>(in),
                        std::istreambuf_iterator<char>());
  // digest is not stored in the package file; carried out of band
  return pkg;
}

// ---------------------------------------------------------------------------
// Sharing
// ---------------------------------------------------------------------------

inline Json augmented_to_json(const ercd::AugmentedDataset& d) {
  Json samples = Json::array();
  for (const auto& s : d.base.samples) samples.push_back(datagen::to_json(s));
  return Json{{"samples", samples},
              {"metadata", datagen::metadata_to_json(d.base)},
              {"trail", ercd::to_json(d.trail)},
              {"base_digest", d.base_digest}};
}

// Sharing requires Certified state and a granted authorization; on Denied no
// lifecycle entry is appended (atomicity).
inline SealedPackage share(const ercd::AugmentedDataset& dprime,
                           const UserContext& user,
                           const std::vector<Policy>& policies,
                           const std::vector<std::uint8_t>& key,
                           LifecycleRecord& rec, RngStream& rng,
                           const std::string& key_id = "k0") {
  if (rec.state != State::Certified)
    throw NotCertified("share: lifecycle state is " +
                       std::string(to_string(rec.state)));
  Json meta = datagen::metadata_to_json(dprime.base);
  meta["validation_verdict"] = "pass";  // implied by Certified state
  const AuthResult auth = authorize(user, meta, policies);
  if (!auth.granted) {
    std::string why = "share: denied by";
    for (const auto& v : auth.verdicts)
      if (!v.passed) why += " " + v.policy_id;
    throw Denied(why);
  }
  const std::string plain = canonical_dump(augmented_to_json(dprime));
  SealedPackage pkg =
      seal(crypto::Bytes(plain.begin(), plain.end()), key, rng, key_id);
  rec = transition(rec, "share", user.user_id, datagen::now_iso8601());
  return pkg;
}

// ---------------------------------------------------------------------------
// Lifecycle log persistence (append-only JSONL)
// ---------------------------------------------------------------------------

inline Json to_json(const HistoryEntry& e) {
  Json j = entry_body_json(e);
  j["prev_hash"] = e.prev_hash;
  j["entry_hash"] = e.entry_hash;
  return j;
}

inline void write_lifecycle_log(const LifecycleRecord& rec,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_lifecycle_log: cannot open " + path);
  for (const auto& e : rec.history) out << to_json(e).dump() << "\n";
}

inline LifecycleRecord read_lifecycle_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_lifecycle_log: cannot open " + path);
  LifecycleRecord rec;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json j = Json::parse(line);
    HistoryEntry e;
    e.prev_state = j.at("prev_state").get<std::string>();
    e.state = j.at("state").get<std::string>();
    e.action = j.at("action").get<std::string>();
    e.actor = j.at("actor").get<std::string>();
    e.timestamp = j.at("timestamp").get<std::string>();
    e.prev_hash = j.at("prev_hash").get<std::string>();
    e.entry_hash = j.at("entry_hash").get<std::string>();
    rec.history.push_back(std::move(e));
  }
  // final state is the replay of history
  State s = State::Generated;
  for (const auto& e : rec.history) {
    const auto next = next_state(s, e.action);
    if (!next) throw ChainCorrupt("read_lifecycle_log: illegal action");
    s = *next;
  }
  rec.state = s;
  if (!verify_chain(rec))
    throw ChainCorrupt("read_lifecycle_log: chain fails verification");
  return rec;
}

}  // namespace seal::gov
