#include "onionwsn/registry.hpp"

#include <fstream>
#include <sstream>

namespace onionwsn {

void Registry::add(RegistryEntry entry)
{
    if (index_.contains(entry.address))
        throw FormatError("duplicate registry address " + entry.address.to_string());
    index_.emplace(entry.address, entries_.size());
    entries_.push_back(std::move(entry));
}

const RegistryEntry* Registry::find(Address address) const
{
    auto it = index_.find(address);
    return it == index_.end() ? nullptr : &entries_[it->second];
}

const RegistryEntry& Registry::at(Address address) const
{
    const auto* e = find(address);
    if (!e)
        throw FormatError("unknown node " + address.to_string());
    return *e;
}

std::vector<Address> Registry::addresses() const
{
    std::vector<Address> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_)
        out.push_back(e.address);
    return out;
}

Registry Registry::parse(std::istream& in)
{
    Registry reg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        std::istringstream fields(line);
        std::string addr, key, location, quantities, extra;
        if (!(fields >> addr >> key >> location >> quantities) || (fields >> extra))
            throw FormatError("registry line " + std::to_string(lineno) +
                              ": expected 'address pubkey_hex location quantities'");
        RegistryEntry e;
        try {
            e.address = Address::parse(addr);
            Bytes pk = from_hex(key);
            if (pk.size() != crypto::kPublicKeyLen)
                throw FormatError("public key must be 32 bytes");
            std::copy(pk.begin(), pk.end(), e.public_key.begin());
        } catch (const FormatError& err) {
            throw FormatError("registry line " + std::to_string(lineno) + ": " + err.what());
        }
        e.location = location;
        std::stringstream qs(quantities);
        std::string q;
        while (std::getline(qs, q, ','))
            if (!q.empty())
                e.quantities.insert(q);
        reg.add(std::move(e));
    }
    return reg;
}

Registry Registry::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open registry file '" + path + "'");
    return parse(in);
}

void Registry::write(std::ostream& out) const
{
    for (const auto& e : entries_) {
        out << e.address.to_string() << ' ' << to_hex(e.public_key) << ' ' << e.location << ' ';
        bool first = true;
        for (const auto& q : e.quantities) {
            out << (first ? "" : ",") << q;
            first = false;
        }
        out << '\n';
    }
}

std::vector<Address> QueryDefinition::targets() const
{
    std::vector<Address> out;
    for (std::size_t i = 0; i < path.size(); ++i)
        if (keys[i])
            out.push_back(path[i]);
    return out;
}

std::size_t QueryDefinition::target_count() const
{
    std::size_t n = 0;
    for (const auto& k : keys)
        n += k.has_value();
    return n;
}

} // namespace onionwsn
