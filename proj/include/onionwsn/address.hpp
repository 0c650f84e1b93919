#ifndef ONIONWSN_ADDRESS_HPP
#define ONIONWSN_ADDRESS_HPP

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace onionwsn {

// 4-byte node address, rendered as a dotted quad. Serialized big-endian.
struct Address {
    std::uint32_t value = 0;

    static Address parse(std::string_view dotted);
    static Address from_bytes(const std::uint8_t* p);

    std::string to_string() const;
    std::array<std::uint8_t, 4> to_bytes() const;

    auto operator<=>(const Address&) const = default;
};

} // namespace onionwsn

template <>
struct std::hash<onionwsn::Address> {
    std::size_t operator()(const onionwsn::Address& a) const noexcept
    {
        return std::hash<std::uint32_t>{}(a.value);
    }
};

#endif // ONIONWSN_ADDRESS_HPP
