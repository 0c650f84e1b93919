#include "doctest.h"

#include "../support.hpp"

#include <sodium.h>

using namespace onionwsn;
using namespace onionwsn::crypto;

TEST_SUITE("crypto")
{
    TEST_CASE("keypair generation is deterministic per seed")
    {
        Rng a(42), b(42), c(43);
        auto ka = generate_keypair(a);
        auto kb = generate_keypair(b);
        auto kc = generate_keypair(c);
        CHECK(ka.public_key == kb.public_key);
        CHECK(ka.private_key == kb.private_key);
        CHECK(ka.public_key != kc.public_key);
        CHECK(keypair_from_private(ka.private_key).public_key == ka.public_key);
    }

    TEST_CASE("seal/open roundtrip of 1 KiB")
    {
        Rng rng(1);
        auto kp = generate_keypair(rng);
        Bytes msg = rng.bytes(1024);
        auto sealed = seal(kp.public_key, msg, rng);
        CHECK(sealed.size() == msg.size() + kSealOverhead);
        CHECK(open(kp, sealed) == msg);
    }

    TEST_CASE("sealed boxes open with stock libsodium")
    {
        Rng rng(2);
        auto kp = generate_keypair(rng);
        Bytes msg = testsupport::text_bytes("interop");
        auto sealed = seal(kp.public_key, msg, rng);
        Bytes out(msg.size());
        REQUIRE(crypto_box_seal_open(out.data(), sealed.data(), sealed.size(),
                                     kp.public_key.data(), kp.private_key.data()) == 0);
        CHECK(out == msg);

        Bytes theirs(msg.size() + crypto_box_SEALBYTES);
        crypto_box_seal(theirs.data(), msg.data(), msg.size(), kp.public_key.data());
        CHECK(open(kp, theirs) == msg);
    }

    TEST_CASE("open with the wrong key is an authentication error")
    {
        Rng rng(3);
        auto kp = generate_keypair(rng);
        auto other = generate_keypair(rng);
        auto sealed = seal(kp.public_key, rng.bytes(64), rng);
        CHECK_THROWS_AS(open(other, sealed), AuthenticationError);
        CHECK_THROWS_AS(open(kp, ByteView(sealed.data(), 10)), AuthenticationError);
    }

    TEST_CASE("seal overhead is constant")
    {
        Rng rng(4);
        auto kp = generate_keypair(rng);
        auto s100 = seal(kp.public_key, Bytes(100, 7), rng);
        auto s0 = seal(kp.public_key, Bytes{}, rng);
        CHECK(s100.size() - s0.size() == 100);
        CHECK(s0.size() == kSealOverhead);
    }

    TEST_CASE("every single-byte corruption is rejected")
    {
        Rng rng(5);
        auto kp = generate_keypair(rng);
        auto sealed = seal(kp.public_key, rng.bytes(40), rng);
        for (std::size_t i = 0; i < sealed.size(); ++i) {
            auto bad = sealed;
            bad[i] ^= 0x01;
            CHECK_THROWS_AS(open(kp, bad), AuthenticationError);
        }
        auto key = generate_sym_key(rng);
        auto ct = sym_encrypt(key, rng.bytes(40), rng);
        for (std::size_t i = 0; i < ct.size(); ++i) {
            auto bad = ct;
            bad[i] ^= 0x80;
            CHECK_THROWS_AS(sym_decrypt(key, bad), AuthenticationError);
        }
    }

    TEST_CASE("SealOpener finds the right length among candidates")
    {
        Rng rng(6);
        auto kp = generate_keypair(rng);
        Bytes msg = rng.bytes(77);
        auto sealed = seal(kp.public_key, msg, rng);
        Bytes padded = sealed;
        auto tail = rng.bytes(100);
        padded.insert(padded.end(), tail.begin(), tail.end());
        SealOpener opener(kp, padded);
        CHECK_FALSE(opener.try_open(padded).has_value());
        auto got = opener.try_open(ByteView(padded.data(), sealed.size()));
        REQUIRE(got.has_value());
        CHECK(*got == msg);
    }

    TEST_CASE("symmetric encryption")
    {
        Rng rng(7);
        auto key = generate_sym_key(rng);
        Bytes msg = testsupport::text_bytes("carrier string");
        auto c1 = sym_encrypt(key, msg, rng);
        auto c2 = sym_encrypt(key, msg, rng);
        CHECK(c1.size() == msg.size() + kSymOverhead);
        CHECK(c1 != c2);
        CHECK(sym_decrypt(key, c1) == msg);
        CHECK(sym_decrypt(key, c2) == msg);
        auto wrong = generate_sym_key(rng);
        CHECK_THROWS_AS(sym_decrypt(wrong, c1), AuthenticationError);
        CHECK_THROWS_AS(sym_decrypt(key, ByteView(c1.data(), kSymOverhead - 1)), AuthenticationError);
    }

    TEST_CASE("random padding")
    {
        Rng rng(8);
        CHECK(random_pad(rng, 0).empty());
        CHECK(random_pad(rng, 16).size() == 16);
        CHECK(random_pad(rng, 32) != random_pad(rng, 32));
    }

    TEST_CASE("digest is BLAKE2b-128")
    {
        // Reference value from libsodium's generichash with a 16-byte output.
        Bytes msg = testsupport::text_bytes("abc");
        std::array<std::uint8_t, 16> expect{};
        crypto_generichash(expect.data(), expect.size(), msg.data(), msg.size(), nullptr, 0);
        CHECK(digest(msg) == expect);
        CHECK(to_hex(ByteView(expect.data(), expect.size())) == "cf4ab791c62b8d2b2109c90275287816");
    }
}
