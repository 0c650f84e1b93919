#include "onionwsn/address.hpp"
#include "onionwsn/common.hpp"

#include <charconv>

namespace onionwsn {

Address Address::parse(std::string_view dotted)
{
    std::uint32_t value = 0;
    const char* p = dotted.data();
    const char* end = dotted.data() + dotted.size();
    for (int octet = 0; octet < 4; ++octet) {
        unsigned part = 0;
        auto [next, ec] = std::from_chars(p, end, part);
        if (ec != std::errc{} || next == p || part > 255)
            throw FormatError("invalid address '" + std::string(dotted) + "'");
        value = value << 8 | part;
        p = next;
        if (octet < 3) {
            if (p == end || *p != '.')
                throw FormatError("invalid address '" + std::string(dotted) + "'");
            ++p;
        }
    }
    if (p != end)
        throw FormatError("invalid address '" + std::string(dotted) + "'");
    return Address{value};
}

Address Address::from_bytes(const std::uint8_t* p)
{
    return Address{std::uint32_t{p[0]} << 24 | std::uint32_t{p[1]} << 16 |
                   std::uint32_t{p[2]} << 8 | std::uint32_t{p[3]}};
}

std::string Address::to_string() const
{
    return std::to_string(value >> 24) + '.' + std::to_string(value >> 16 & 0xff) + '.' +
           std::to_string(value >> 8 & 0xff) + '.' + std::to_string(value & 0xff);
}

std::array<std::uint8_t, 4> Address::to_bytes() const
{
    return {static_cast<std::uint8_t>(value >> 24), static_cast<std::uint8_t>(value >> 16),
            static_cast<std::uint8_t>(value >> 8), static_cast<std::uint8_t>(value)};
}

} // namespace onionwsn
