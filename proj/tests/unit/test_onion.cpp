#include "doctest.h"

#include "../support.hpp"

using namespace onionwsn;
using namespace onionwsn::onion;
using testsupport::make_registry;

namespace {

QueryDefinition definition_with_mask(const testsupport::KeyedRegistry& kr, std::size_t n,
                                     const std::vector<bool>& mask, Rng& rng)
{
    std::vector<Address> path;
    for (std::size_t i = 0; i < n; ++i)
        path.push_back(kr.registry.entries()[i].address);
    return assign_key_chain(path, mask, rng);
}

// Peels the whole head with the path's keys; returns what every hop saw.
struct Replay {
    std::vector<Address> next_hops;
    std::vector<std::optional<SymKeyPair>> keys;
    crypto::SymKey id;
};

Replay replay(const QueryHead& head, const QueryDefinition& defn,
              const testsupport::KeyedRegistry& kr, Rng& rng)
{
    Replay r;
    QueryHead cur = head;
    for (const auto& hop : defn.path) {
        REQUIRE(cur.size() == head.size());
        auto p = peel(cur, kr.keys.at(hop));
        r.next_hops.push_back(p.next_hop);
        r.keys.push_back(p.keys);
        cur = repad_head(p.inner, head.size(), rng);
    }
    r.id = open_terminal(cur, kr.sink.keys);
    return r;
}

} // namespace

TEST_SUITE("onion")
{
    TEST_CASE("head size arithmetic")
    {
        CHECK_THROWS_AS(head_size_for(1), FormatError);
        CHECK(head_size_for(2) > 2 * crypto::kSealOverhead);
        for (std::size_t n = 2; n < 120; ++n)
            CHECK(head_size_for(n + 1) > head_size_for(n));
        // n sensor layers of 69 plaintext bytes plus the 32-byte terminal id,
        // each sealed once.
        CHECK(head_size_for(5) == 5 * (69 + 48) + (32 + 48));
        CHECK(body_size_for(kDefaultTaskCapacity) == 2 + 1280 + 32 + 40);
    }

    TEST_CASE("two decoys then the terminal layer")
    {
        Rng rng(11);
        auto kr = make_registry(4, rng);
        auto defn = definition_with_mask(kr, 2, {false, false}, rng);
        auto head = build_head(defn, kr.sink.identity(), kr.registry, head_size_for(2), rng);
        CHECK(head.size() == head_size_for(2));
        auto r = replay(head, defn, kr, rng);
        CHECK(r.next_hops == std::vector<Address>{defn.path[1], kr.sink.address});
        CHECK_FALSE(r.keys[0].has_value());
        CHECK_FALSE(r.keys[1].has_value());
        CHECK(r.id == defn.last_key);
        CHECK(defn.last_key == defn.first_key);
    }

    TEST_CASE("targets at positions 1 and 3 of 4")
    {
        Rng rng(12);
        auto kr = make_registry(6, rng);
        auto defn = definition_with_mask(kr, 4, {true, false, true, false}, rng);
        auto head = build_head(defn, kr.sink.identity(), kr.registry, head_size_for(4), rng);
        auto r = replay(head, defn, kr, rng);
        CHECK(r.keys[0].has_value());
        CHECK_FALSE(r.keys[1].has_value());
        CHECK(r.keys[2].has_value());
        CHECK_FALSE(r.keys[3].has_value());
        CHECK(r.keys[0]->first == defn.first_key);
        CHECK(r.keys[0]->second == r.keys[2]->first);
        CHECK(r.keys[2]->second == defn.last_key);
        CHECK(r.id == defn.last_key);
    }

    TEST_CASE("head size does not depend on target count")
    {
        Rng rng(13);
        auto kr = make_registry(10, rng);
        const std::size_t n = 8;
        auto none = definition_with_mask(kr, n, std::vector<bool>(n, false), rng);
        auto half = definition_with_mask(kr, n, {true, true, true, true, false, false, false, false}, rng);
        auto a = build_head(none, kr.sink.identity(), kr.registry, head_size_for(n), rng);
        auto b = build_head(half, kr.sink.identity(), kr.registry, head_size_for(n), rng);
        CHECK(a.size() == b.size());
        CHECK(a.size() == head_size_for(n));
    }

    TEST_CASE("peel/build inverse on paths of length 2..10, deployment sizing")
    {
        Rng rng(14);
        auto kr = make_registry(12, rng);
        const std::size_t size = head_size_for(kDefaultMaxPathLength);
        for (std::size_t n = 2; n <= 10; ++n) {
            for (int trial = 0; trial < 5; ++trial) {
                std::vector<bool> mask(n, false);
                for (std::size_t i = 0; i + 1 < n; ++i)
                    mask[i] = rng.below(2) == 1;
                auto defn = definition_with_mask(kr, n, mask, rng);
                auto head = build_head(defn, kr.sink.identity(), kr.registry, size, rng);
                CHECK(head.size() == size);
                auto r = replay(head, defn, kr, rng);
                for (std::size_t i = 0; i < n; ++i) {
                    CHECK(r.next_hops[i] == (i + 1 < n ? defn.path[i + 1] : kr.sink.address));
                    CHECK(r.keys[i] == defn.keys[i]);
                }
                CHECK(r.id == defn.last_key);
            }
        }
    }

    TEST_CASE("peel by a node the layer is not addressed to")
    {
        Rng rng(15);
        auto kr = make_registry(5, rng);
        auto defn = definition_with_mask(kr, 3, {true, false, false}, rng);
        auto head = build_head(defn, kr.sink.identity(), kr.registry, head_size_for(3), rng);
        CHECK_THROWS_AS(peel(head, kr.keys.at(defn.path[1])), AuthenticationError);
        CHECK_THROWS_AS(open_terminal(head, kr.sink.keys), AuthenticationError);
        auto first = peel(head, kr.keys.at(defn.path[0]));
        CHECK(first.next_hop == defn.path[1]);
    }

    TEST_CASE("build_head validation")
    {
        Rng rng(16);
        auto kr = make_registry(5, rng);
        auto defn = definition_with_mask(kr, 4, {false, true, false, false}, rng);
        CHECK_THROWS(build_head(defn, kr.sink.identity(), kr.registry, head_size_for(3), rng));
        CHECK_THROWS(build_head(defn, kr.sink.identity(), kr.registry, head_size_for(4) + 1, rng));
        Registry partial;
        partial.add(kr.registry.entries()[0]);
        CHECK_THROWS(build_head(defn, kr.sink.identity(), partial, head_size_for(4), rng));
    }

    TEST_CASE("repad")
    {
        Rng rng(17);
        Bytes inner = rng.bytes(100);
        auto a = repad_head(inner, 300, rng);
        auto b = repad_head(inner, 300, rng);
        CHECK(a.size() == 300);
        CHECK(std::equal(inner.begin(), inner.end(), a.bytes.begin()));
        CHECK(a != b);
        Bytes full = rng.bytes(300);
        CHECK(repad_head(full, 300, rng).bytes == full);
        CHECK_THROWS_AS(repad_head(full, 299, rng), FormatError);
    }

    TEST_CASE("body roundtrip and fixed size")
    {
        Rng rng(18);
        auto key = crypto::generate_sym_key(rng);
        CarrierBytes w{};
        w[0] = 1;
        w[31] = 9;
        Bytes small_task(10, 0xaa), big_task(900, 0xbb);
        auto b1 = build_body(small_task, w, key, rng);
        auto b2 = build_body(big_task, w, key, rng);
        CHECK(b1.size() == body_size_for(kDefaultTaskCapacity));
        CHECK(b1.size() == b2.size());
        auto c = open_body(b1, key);
        CHECK(c.task == small_task);
        CHECK(c.carrier == w);
        CHECK(c.padding.size() == kDefaultTaskCapacity - small_task.size());
        auto other = crypto::generate_sym_key(rng);
        CHECK_THROWS_AS(open_body(b1, other), AuthenticationError);
        CHECK_THROWS(build_body(Bytes(kDefaultTaskCapacity + 1), w, key, rng));
    }

    TEST_CASE("re-encryption keeps size and freshness")
    {
        Rng rng(19);
        auto e_f = crypto::generate_sym_key(rng);
        auto e_b = crypto::generate_sym_key(rng);
        auto e_c = crypto::generate_sym_key(rng);
        CarrierBytes w{};
        auto body = build_body(Bytes{1, 2, 3}, w, e_f, rng);

        auto c = open_body(body, e_f);
        auto same = reencrypt_body(c, e_f, rng);
        CHECK(same.size() == body.size());
        CHECK(same != body);

        // Two targets chained (e_F, e_b), (e_b, e_c).
        c.carrier[0] = 5;
        auto b1 = reencrypt_body(c, e_b, rng);
        auto c1 = open_body(b1, e_b);
        c1.carrier[1] = 6;
        auto b2 = reencrypt_body(c1, e_c, rng);
        auto final = open_body(b2, e_c);
        CHECK(final.carrier[0] == 5);
        CHECK(final.carrier[1] == 6);
        CHECK(final.task == Bytes{1, 2, 3});
        CHECK(final.padding == c.padding);
    }
}
