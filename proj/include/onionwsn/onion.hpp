#ifndef ONIONWSN_ONION_HPP
#define ONIONWSN_ONION_HPP

// Query head (the onion) and query body. Byte layouts are normative; see
// docs/FORMAT.md.
//
// Sensor layer plaintext, identical size for decoys and targets:
//   next_hop(4) || flag(1) || key_a(32) || key_b(32) || inner layer
// Terminal layer plaintext (opened by the issuing sink):
//   query_id(32) || padding
// Body plaintext:
//   task_len(u16 LE) || task || padding up to task capacity || carrier(32)

#include "onionwsn/address.hpp"
#include "onionwsn/crypto.hpp"
#include "onionwsn/registry.hpp"

#include <array>
#include <optional>

namespace onionwsn::onion {

inline constexpr std::size_t kLayerFieldsLen = 4 + 1 + 2 * crypto::kSymKeyLen;
inline constexpr std::size_t kLayerStep = kLayerFieldsLen + crypto::kSealOverhead;
inline constexpr std::size_t kTerminalBase = crypto::kSymKeyLen + crypto::kSealOverhead;

inline constexpr std::size_t kDefaultTaskCapacity = 1280;  // L_t
inline constexpr std::size_t kCarrierLen = 32;             // L_w
inline constexpr std::size_t kBodyFraming = 2;
inline constexpr std::size_t kDefaultMaxPathLength = 100;  // n_max

using CarrierBytes = std::array<std::uint8_t, kCarrierLen>;

struct QueryHead {
    Bytes bytes;
    std::size_t size() const { return bytes.size(); }
    bool operator==(const QueryHead&) const = default;
};

struct QueryBody {
    Bytes bytes;
    std::size_t size() const { return bytes.size(); }
    bool operator==(const QueryBody&) const = default;
};

struct PeelResult {
    Address next_hop;
    std::optional<SymKeyPair> keys;  // present iff the peeling node is a target
    Bytes inner;                     // the next layer, without trailing padding
};

struct SinkIdentity {
    Address address;
    crypto::PublicKey public_key{};
};

// L_H for a path of n nodes. Every sensor layer costs the same number of
// bytes whether or not it carries keys, so this is exact for any target mix.
std::size_t head_size_for(std::size_t n);

// Builds OR_1. head_size must be head_size_for(m) for some m >= n; the
// terminal layer absorbs the difference as padding.
QueryHead build_head(const QueryDefinition& defn, const SinkIdentity& sink,
                     const Registry& registry, std::size_t head_size, Rng& rng);

// Opens the outermost layer. The layer boundary is found by trying each
// admissible layer length; throws AuthenticationError when none opens.
PeelResult peel(const QueryHead& head, const crypto::KeyPair& node_keys);

// Sink side: opens the terminal layer and returns the query id e_L.
crypto::SymKey open_terminal(const QueryHead& head, const crypto::KeyPair& sink_keys);

// inner || random bytes, to exactly head_size.
QueryHead repad_head(ByteView inner, std::size_t head_size, Rng& rng);

struct BodyContents {
    Bytes task;
    CarrierBytes carrier{};
    Bytes padding;

    bool operator==(const BodyContents&) const = default;
};

std::size_t body_size_for(std::size_t task_capacity);

QueryBody build_body(ByteView task, const CarrierBytes& carrier, const crypto::SymKey& key,
                     Rng& rng, std::size_t task_capacity = kDefaultTaskCapacity);
BodyContents open_body(const QueryBody& body, const crypto::SymKey& key);
// Re-encrypts already framed contents; only the carrier is expected to differ
// from what open_body returned.
QueryBody reencrypt_body(const BodyContents& contents, const crypto::SymKey& key, Rng& rng);

} // namespace onionwsn::onion

#endif // ONIONWSN_ONION_HPP
