#ifndef ONIONWSN_TESTS_SUPPORT_HPP
#define ONIONWSN_TESTS_SUPPORT_HPP

#include "onionwsn/node.hpp"

#include <map>
#include <string>
#include <vector>

namespace testsupport {

using namespace onionwsn;

// Registry of `count` nodes at 10.0.0.1, 10.0.0.2, ... with fresh keypairs.
struct KeyedRegistry {
    Registry registry;
    std::map<Address, crypto::KeyPair> keys;
    SinkIdentityKeys sink;
};

inline Address node_address(std::size_t i)
{
    return Address{0x0a000000u + static_cast<std::uint32_t>(i + 1)};
}

inline KeyedRegistry make_registry(std::size_t count, Rng& rng,
                                   const std::vector<std::string>& locations = {"lab"},
                                   const std::set<std::string>& quantities = {"temperature"})
{
    KeyedRegistry out;
    for (std::size_t i = 0; i < count; ++i) {
        auto kp = crypto::generate_keypair(rng);
        RegistryEntry e;
        e.address = node_address(i);
        e.public_key = kp.public_key;
        e.location = locations[i % locations.size()];
        e.quantities = quantities;
        out.registry.add(e);
        out.keys.emplace(e.address, kp);
    }
    out.sink.address = Address{0x0a0000feu};
    out.sink.keys = crypto::generate_keypair(rng);
    return out;
}

inline Bytes text_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

} // namespace testsupport

#endif
