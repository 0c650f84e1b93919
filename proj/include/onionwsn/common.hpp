#ifndef ONIONWSN_COMMON_HPP
#define ONIONWSN_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace onionwsn {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CryptoError : public Error {
public:
    using Error::Error;
};

// Ciphertext rejected: wrong key, tampered bytes or layer not addressed to us.
class AuthenticationError : public CryptoError {
public:
    using CryptoError::CryptoError;
};

// Byte block of the wrong size or with malformed framing.
class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);

inline ByteView as_view(const Bytes& b) { return {b.data(), b.size()}; }

} // namespace onionwsn

#endif // ONIONWSN_COMMON_HPP
