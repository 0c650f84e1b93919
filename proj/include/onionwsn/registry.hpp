#ifndef ONIONWSN_REGISTRY_HPP
#define ONIONWSN_REGISTRY_HPP

#include "onionwsn/address.hpp"
#include "onionwsn/crypto.hpp"

#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace onionwsn {

// What the sink knows about one sensor node.
struct RegistryEntry {
    Address address;
    crypto::PublicKey public_key{};
    std::string location;
    std::set<std::string> quantities;
};

// Sink-side node directory. Iteration order is insertion order, which is
// what the planners draw from.
class Registry {
public:
    void add(RegistryEntry entry);

    const RegistryEntry* find(Address address) const;
    const RegistryEntry& at(Address address) const;
    bool contains(Address address) const { return find(address) != nullptr; }

    const std::vector<RegistryEntry>& entries() const { return entries_; }
    std::vector<Address> addresses() const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    // Line format: `address pubkey_hex location quantity[,quantity...]`.
    // Blank lines and lines starting with '#' are skipped.
    static Registry parse(std::istream& in);
    static Registry load(const std::string& path);
    void write(std::ostream& out) const;

private:
    std::vector<RegistryEntry> entries_;
    std::unordered_map<Address, std::size_t> index_;
};

// (e_a, e_b): decrypt the incoming body with `first`, re-encrypt with `second`.
struct SymKeyPair {
    crypto::SymKey first;
    crypto::SymKey second;

    bool operator==(const SymKeyPair&) const = default;
};

// One circuit: the path S, the per-position key pairs K (empty for decoys),
// and the two ends of the key chain. last_key doubles as the query id.
struct QueryDefinition {
    std::vector<Address> path;
    std::vector<std::optional<SymKeyPair>> keys;
    crypto::SymKey first_key;
    crypto::SymKey last_key;

    std::size_t length() const { return path.size(); }
    std::vector<Address> targets() const;
    std::size_t target_count() const;
};

} // namespace onionwsn

#endif // ONIONWSN_REGISTRY_HPP
