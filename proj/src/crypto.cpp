#include "onionwsn/crypto.hpp"

#include <sodium.h>

#include <mutex>

namespace onionwsn::crypto {

static_assert(kPublicKeyLen == crypto_box_PUBLICKEYBYTES);
static_assert(kPrivateKeyLen == crypto_box_SECRETKEYBYTES);
static_assert(kSealOverhead == crypto_box_SEALBYTES);
static_assert(kSymKeyLen == crypto_aead_xchacha20poly1305_ietf_KEYBYTES);
static_assert(kSymNonceLen == crypto_aead_xchacha20poly1305_ietf_NPUBBYTES);
static_assert(kSymOverhead == kSymNonceLen + crypto_aead_xchacha20poly1305_ietf_ABYTES);

namespace {

void ensure_sodium()
{
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0)
            throw CryptoError("libsodium initialisation failed");
    });
}

// Same nonce derivation as crypto_box_seal.
std::array<std::uint8_t, crypto_box_NONCEBYTES> seal_nonce(const std::uint8_t* ephemeral_pk,
                                                          const std::uint8_t* recipient_pk)
{
    std::array<std::uint8_t, crypto_box_NONCEBYTES> nonce{};
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, nonce.size());
    crypto_generichash_update(&st, ephemeral_pk, crypto_box_PUBLICKEYBYTES);
    crypto_generichash_update(&st, recipient_pk, crypto_box_PUBLICKEYBYTES);
    crypto_generichash_final(&st, nonce.data(), nonce.size());
    return nonce;
}

} // namespace

PrivateKey::~PrivateKey() { sodium_memzero(bytes_.data(), bytes_.size()); }

KeyPair generate_keypair(Rng& rng)
{
    ensure_sodium();
    std::array<std::uint8_t, crypto_box_SEEDBYTES> seed{};
    rng.fill(seed);
    KeyPair kp;
    crypto_box_seed_keypair(kp.public_key.data(), kp.private_key.data(), seed.data());
    sodium_memzero(seed.data(), seed.size());
    return kp;
}

KeyPair keypair_from_private(const PrivateKey& sk)
{
    ensure_sodium();
    KeyPair kp;
    kp.private_key = sk;
    crypto_scalarmult_base(kp.public_key.data(), sk.data());
    return kp;
}

SymKey generate_sym_key(Rng& rng)
{
    SymKey key;
    rng.fill(key.bytes);
    return key;
}

Bytes seal(const PublicKey& recipient, ByteView plaintext, Rng& rng)
{
    ensure_sodium();
    if (plaintext.size() > kMaxLayerPlaintext)
        throw FormatError("plaintext too large to seal");

    KeyPair ephemeral = generate_keypair(rng);
    auto nonce = seal_nonce(ephemeral.public_key.data(), recipient.data());

    Bytes out(plaintext.size() + kSealOverhead);
    std::copy(ephemeral.public_key.begin(), ephemeral.public_key.end(), out.begin());
    if (crypto_box_easy(out.data() + kPublicKeyLen, plaintext.data(), plaintext.size(),
                        nonce.data(), recipient.data(), ephemeral.private_key.data()) != 0)
        throw CryptoError("sealing failed");
    return out;
}

Bytes open(const KeyPair& recipient, ByteView sealed)
{
    if (sealed.size() < kSealOverhead)
        throw AuthenticationError("sealed box too short");
    SealOpener opener(recipient, sealed);
    auto plain = opener.try_open(sealed);
    if (!plain)
        throw AuthenticationError("sealed box rejected");
    return std::move(*plain);
}

SealOpener::SealOpener(const KeyPair& recipient, ByteView sealed_prefix)
{
    ensure_sodium();
    if (sealed_prefix.size() < kSealOverhead)
        throw AuthenticationError("sealed box too short");
    if (crypto_box_beforenm(shared_.data(), sealed_prefix.data(), recipient.private_key.data()) != 0)
        throw AuthenticationError("invalid ephemeral key");
    nonce_ = seal_nonce(sealed_prefix.data(), recipient.public_key.data());
}

SealOpener::~SealOpener() { sodium_memzero(shared_.data(), shared_.size()); }

std::optional<Bytes> SealOpener::try_open(ByteView sealed) const
{
    if (sealed.size() < kSealOverhead)
        return std::nullopt;
    Bytes out(sealed.size() - kSealOverhead);
    if (crypto_box_open_easy_afternm(out.data(), sealed.data() + kPublicKeyLen,
                                     sealed.size() - kPublicKeyLen, nonce_.data(),
                                     shared_.data()) != 0)
        return std::nullopt;
    return out;
}

Bytes sym_encrypt(const SymKey& key, ByteView plaintext, Rng& rng)
{
    ensure_sodium();
    Bytes out(plaintext.size() + kSymOverhead);
    rng.fill(std::span<std::uint8_t>(out.data(), kSymNonceLen));
    unsigned long long written = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt(out.data() + kSymNonceLen, &written,
                                               plaintext.data(), plaintext.size(), nullptr, 0,
                                               nullptr, out.data(), key.bytes.data());
    return out;
}

Bytes sym_decrypt(const SymKey& key, ByteView ciphertext)
{
    ensure_sodium();
    if (ciphertext.size() < kSymOverhead)
        throw AuthenticationError("ciphertext too short");
    Bytes out(ciphertext.size() - kSymOverhead);
    unsigned long long written = 0;
    if (crypto_aead_xchacha20poly1305_ietf_decrypt(out.data(), &written, nullptr,
                                                   ciphertext.data() + kSymNonceLen,
                                                   ciphertext.size() - kSymNonceLen, nullptr, 0,
                                                   ciphertext.data(), key.bytes.data()) != 0)
        throw AuthenticationError("symmetric decryption rejected");
    return out;
}

Bytes random_pad(Rng& rng, std::size_t len) { return rng.bytes(len); }

std::array<std::uint8_t, kDigestLen> digest(ByteView data)
{
    ensure_sodium();
    std::array<std::uint8_t, kDigestLen> out{};
    crypto_generichash(out.data(), out.size(), data.data(), data.size(), nullptr, 0);
    return out;
}

} // namespace onionwsn::crypto
