#ifndef ONIONWSN_CRYPTO_HPP
#define ONIONWSN_CRYPTO_HPP

// Thin wrappers over libsodium: X25519 sealed boxes for onion layers,
// XChaCha20-Poly1305 for query bodies. Randomness is always injected so the
// simulator stays reproducible.

#include "onionwsn/common.hpp"
#include "onionwsn/rng.hpp"

#include <array>
#include <compare>
#include <optional>

namespace onionwsn::crypto {

inline constexpr std::size_t kPublicKeyLen = 32;   // PK_LEN
inline constexpr std::size_t kPrivateKeyLen = 32;
inline constexpr std::size_t kSymKeyLen = 32;      // SK_LEN
inline constexpr std::size_t kSealOverhead = 48;   // SEAL_OVERHEAD: ephemeral key + MAC
inline constexpr std::size_t kSymNonceLen = 24;
inline constexpr std::size_t kSymOverhead = 40;    // SYM_OVERHEAD: nonce + tag
inline constexpr std::size_t kMaxLayerPlaintext = std::size_t{1} << 24;
inline constexpr std::size_t kDigestLen = 16;

using PublicKey = std::array<std::uint8_t, kPublicKeyLen>;

class PrivateKey {
public:
    PrivateKey() = default;
    explicit PrivateKey(const std::array<std::uint8_t, kPrivateKeyLen>& bytes) : bytes_(bytes) {}
    PrivateKey(const PrivateKey&) = default;
    PrivateKey& operator=(const PrivateKey&) = default;
    ~PrivateKey();

    const std::uint8_t* data() const { return bytes_.data(); }
    std::uint8_t* data() { return bytes_.data(); }
    static constexpr std::size_t size() { return kPrivateKeyLen; }

    bool operator==(const PrivateKey&) const = default;

private:
    std::array<std::uint8_t, kPrivateKeyLen> bytes_{};
};

struct KeyPair {
    PublicKey public_key{};
    PrivateKey private_key;
};

struct SymKey {
    std::array<std::uint8_t, kSymKeyLen> bytes{};

    auto operator<=>(const SymKey&) const = default;
};

KeyPair generate_keypair(Rng& rng);
// Recompute a keypair from a stored private key.
KeyPair keypair_from_private(const PrivateKey& sk);
SymKey generate_sym_key(Rng& rng);

// Anonymous public-key encryption. Output layout is byte-compatible with
// libsodium's crypto_box_seal: ephemeral_pk(32) || mac(16) || ciphertext.
Bytes seal(const PublicKey& recipient, ByteView plaintext, Rng& rng);
Bytes open(const KeyPair& recipient, ByteView sealed);

// Opens sealed boxes whose exact length is unknown to the recipient. The
// shared secret is derived once from the ephemeral key at the start of the
// buffer; try_open() then checks a candidate length.
class SealOpener {
public:
    SealOpener(const KeyPair& recipient, ByteView sealed_prefix);
    ~SealOpener();
    SealOpener(const SealOpener&) = delete;
    SealOpener& operator=(const SealOpener&) = delete;

    std::optional<Bytes> try_open(ByteView sealed) const;

private:
    std::array<std::uint8_t, 32> shared_{};
    std::array<std::uint8_t, 24> nonce_{};
};

Bytes sym_encrypt(const SymKey& key, ByteView plaintext, Rng& rng);
Bytes sym_decrypt(const SymKey& key, ByteView ciphertext);

// Exactly len bytes drawn from rng.
Bytes random_pad(Rng& rng, std::size_t len);

// BLAKE2b-128, used to fingerprint ciphertexts in traces.
std::array<std::uint8_t, kDigestLen> digest(ByteView data);

} // namespace onionwsn::crypto

#endif // ONIONWSN_CRYPTO_HPP
