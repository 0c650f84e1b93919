#ifndef ONIONWSN_TESTS_FORMAT_VECTORS_HPP
#define ONIONWSN_TESTS_FORMAT_VECTORS_HPP

// Recomputes the test vectors published in docs/FORMAT.md.

#include "onionwsn/node.hpp"

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace testsupport {

using namespace onionwsn;

inline std::vector<std::pair<std::string, std::string>> format_vectors()
{
    std::vector<std::pair<std::string, std::string>> v;
    auto hex = [](ByteView b) { return to_hex(b); };
    auto num = [](auto x) { return std::to_string(x); };
    auto text = [](std::string_view s) { return Bytes(s.begin(), s.end()); };

    // Rng
    Rng r1(1);
    v.emplace_back("rng.seed1.u64_0", num(r1.next_u64()));
    v.emplace_back("rng.seed1.derive_7_9.u64_0", num(Rng(1).derive({7, 9}).next_u64()));
    v.emplace_back("rng.seed1.bytes8", hex(Rng(1).bytes(8)));

    // Primitives
    v.emplace_back("blake2b128.abc", hex(crypto::digest(text("abc"))));
    Rng kr(1);
    const auto kp = crypto::generate_keypair(kr);
    v.emplace_back("keypair.seed1.private", hex(ByteView(kp.private_key.data(), kp.private_key.size())));
    v.emplace_back("keypair.seed1.public", hex(kp.public_key));
    Rng sr(2);
    v.emplace_back("seal.seed1key.seed2.onion", hex(crypto::seal(kp.public_key, text("onion"), sr)));
    crypto::SymKey key;
    for (std::size_t i = 0; i < key.bytes.size(); ++i)
        key.bytes[i] = static_cast<std::uint8_t>(i);
    Rng br(3);
    v.emplace_back("xchacha.key00to1f.seed3.body", hex(crypto::sym_encrypt(key, text("body"), br)));

    // Carrier and task encoding
    vm::CarrierString w;
    w.acc1 = 21.25;
    w.acc2 = 451.5625;
    w.count = 1;
    v.emplace_back("carrier.21.25_451.5625_1", hex(w.encode()));
    v.emplace_back("carrier.initial_max", hex(vm::initial_carrier(vm::Aggregation::Max).encode()));
    v.emplace_back("status_code.ON", num(static_cast<std::uint64_t>(vm::status_code("ON"))));
    v.emplace_back("task.SUM(temperature)",
                   hex(compile_task(parse_request("SUM(temperature) @ x").operation).bytecode));
    v.emplace_back("task.IF(light=ON)THEN_AVG(temperature)",
                   hex(compile_task(parse_request("IF(light=ON) THEN AVG(temperature) @ x").operation).bytecode));
    v.emplace_back("task.IF(temperature>20)THEN_VARIANCE(temperature)",
                   hex(compile_task(parse_request("IF(temperature>20) THEN VARIANCE(temperature) @ x").operation)
                           .bytecode));

    // Sizes
    for (std::size_t n : {2, 5, 10, 100})
        v.emplace_back("head_size.n" + num(n), num(onion::head_size_for(n)));
    v.emplace_back("body_size.1280", num(onion::body_size_for(1280)));

    // A complete two-node query: node keys from Rng(11) and Rng(12), sink
    // keys from Rng(13), key chain and padding from Rng(14).
    Registry reg;
    crypto::KeyPair nk[2];
    for (int i = 0; i < 2; ++i) {
        Rng r(11 + static_cast<std::uint64_t>(i));
        nk[i] = crypto::generate_keypair(r);
        RegistryEntry e;
        e.address = Address{0x0a000001u + static_cast<std::uint32_t>(i)};
        e.public_key = nk[i].public_key;
        e.location = "lab";
        e.quantities = {"temperature"};
        reg.add(e);
    }
    Rng sk(13);
    SinkIdentityKeys sink{Address{0x0a0000feu}, crypto::generate_keypair(sk)};
    Rng qr(14);
    const auto defn = assign_key_chain({Address{0x0a000001u}, Address{0x0a000002u}}, {true, false}, qr);
    const auto task = compile_task(parse_request("SUM(temperature) @ lab").operation);
    const auto q = assemble_query(defn, task, vm::initial_carrier(vm::Aggregation::Sum), sink.identity(), reg,
                                  onion::head_size_for(2), onion::kDefaultTaskCapacity, qr);
    v.emplace_back("query2.e_F", hex(defn.first_key.bytes));
    v.emplace_back("query2.e_L", hex(defn.last_key.bytes));
    v.emplace_back("query2.head.len", num(q.head.size()));
    v.emplace_back("query2.head.blake2b128", hex(crypto::digest(q.head.bytes)));
    v.emplace_back("query2.head.first48", hex(ByteView(q.head.bytes).first(48)));
    v.emplace_back("query2.body.len", num(q.body.size()));
    v.emplace_back("query2.body.blake2b128", hex(crypto::digest(q.body.bytes)));
    const auto p1 = onion::peel(q.head, nk[0]);
    v.emplace_back("query2.layer1.next_hop", p1.next_hop.to_string());
    v.emplace_back("query2.layer1.inner.len", num(p1.inner.size()));
    v.emplace_back("query2.layer1.e_b", p1.keys ? hex(p1.keys->second.bytes) : "none");
    return v;
}

} // namespace testsupport

#endif
