#include "onionwsn/onion.hpp"

#include <algorithm>
#include <cstring>

namespace onionwsn::onion {

namespace {

constexpr std::uint8_t kFlagDecoy = 0;
constexpr std::uint8_t kFlagTarget = 1;

void check_head_size(std::size_t head_size)
{
    if (head_size < head_size_for(2) || (head_size - kTerminalBase) % kLayerStep != 0)
        throw FormatError("head size " + std::to_string(head_size) +
                          " is not a valid onion size");
}

} // namespace

std::size_t head_size_for(std::size_t n)
{
    if (n < 2)
        throw FormatError("query path must have at least 2 nodes");
    return kTerminalBase + n * kLayerStep;
}

QueryHead build_head(const QueryDefinition& defn, const SinkIdentity& sink,
                     const Registry& registry, std::size_t head_size, Rng& rng)
{
    const std::size_t n = defn.path.size();
    if (defn.keys.size() != n)
        throw FormatError("query definition has mismatched path and key lists");
    const std::size_t needed = head_size_for(n);
    check_head_size(head_size);
    if (head_size < needed)
        throw FormatError("path of " + std::to_string(n) + " nodes exceeds the head size " +
                          std::to_string(head_size));

    Bytes terminal(crypto::kSymKeyLen + (head_size - needed));
    std::copy(defn.last_key.bytes.begin(), defn.last_key.bytes.end(), terminal.begin());
    rng.fill(std::span<std::uint8_t>(terminal).subspan(crypto::kSymKeyLen));
    Bytes layer = crypto::seal(sink.public_key, terminal, rng);

    for (std::size_t i = n; i-- > 0;) {
        const auto& entry = registry.at(defn.path[i]);
        const Address next = i + 1 == n ? sink.address : defn.path[i + 1];

        Bytes plain(kLayerFieldsLen + layer.size(), 0);
        auto addr = next.to_bytes();
        std::copy(addr.begin(), addr.end(), plain.begin());
        if (const auto& k = defn.keys[i]) {
            plain[4] = kFlagTarget;
            std::copy(k->first.bytes.begin(), k->first.bytes.end(), plain.begin() + 5);
            std::copy(k->second.bytes.begin(), k->second.bytes.end(),
                      plain.begin() + 5 + crypto::kSymKeyLen);
        } else {
            plain[4] = kFlagDecoy;
        }
        std::copy(layer.begin(), layer.end(), plain.begin() + kLayerFieldsLen);
        layer = crypto::seal(entry.public_key, plain, rng);
    }
    return QueryHead{std::move(layer)};
}

PeelResult peel(const QueryHead& head, const crypto::KeyPair& node_keys)
{
    check_head_size(head.size());
    const ByteView bytes(head.bytes);
    crypto::SealOpener opener(node_keys, bytes);
    const std::size_t min_len = kLayerStep + kTerminalBase;
    for (std::size_t len = head.size(); len >= min_len; len -= kLayerStep) {
        auto plain = opener.try_open(bytes.first(len));
        if (!plain)
            continue;
        if ((*plain)[4] > kFlagTarget)
            throw FormatError("layer carries an unknown flag");
        PeelResult out;
        out.next_hop = Address::from_bytes(plain->data());
        if ((*plain)[4] == kFlagTarget) {
            SymKeyPair keys;
            std::memcpy(keys.first.bytes.data(), plain->data() + 5, crypto::kSymKeyLen);
            std::memcpy(keys.second.bytes.data(), plain->data() + 5 + crypto::kSymKeyLen,
                        crypto::kSymKeyLen);
            out.keys = keys;
        }
        out.inner.assign(plain->begin() + kLayerFieldsLen, plain->end());
        return out;
    }
    throw AuthenticationError("no head layer addressed to this node");
}

crypto::SymKey open_terminal(const QueryHead& head, const crypto::KeyPair& sink_keys)
{
    check_head_size(head.size());
    const ByteView bytes(head.bytes);
    crypto::SealOpener opener(sink_keys, bytes);
    for (std::size_t len = head.size(); len >= kTerminalBase; len -= kLayerStep) {
        if (auto plain = opener.try_open(bytes.first(len))) {
            crypto::SymKey id;
            std::memcpy(id.bytes.data(), plain->data(), crypto::kSymKeyLen);
            return id;
        }
        if (len < kTerminalBase + kLayerStep)
            break;
    }
    throw AuthenticationError("head does not end at this sink");
}

QueryHead repad_head(ByteView inner, std::size_t head_size, Rng& rng)
{
    if (inner.size() > head_size)
        throw FormatError("inner layer longer than the head size");
    QueryHead out{Bytes(head_size)};
    std::copy(inner.begin(), inner.end(), out.bytes.begin());
    rng.fill(std::span<std::uint8_t>(out.bytes).subspan(inner.size()));
    return out;
}

std::size_t body_size_for(std::size_t task_capacity)
{
    return kBodyFraming + task_capacity + kCarrierLen + crypto::kSymOverhead;
}

QueryBody build_body(ByteView task, const CarrierBytes& carrier, const crypto::SymKey& key,
                     Rng& rng, std::size_t task_capacity)
{
    if (task_capacity > 0xffff)
        throw FormatError("task capacity exceeds the 16-bit length field");
    if (task.size() > task_capacity)
        throw FormatError("task of " + std::to_string(task.size()) + " bytes exceeds capacity " +
                          std::to_string(task_capacity));
    BodyContents contents;
    contents.task.assign(task.begin(), task.end());
    contents.carrier = carrier;
    contents.padding = crypto::random_pad(rng, task_capacity - task.size());
    return reencrypt_body(contents, key, rng);
}

BodyContents open_body(const QueryBody& body, const crypto::SymKey& key)
{
    Bytes plain = crypto::sym_decrypt(key, body.bytes);
    if (plain.size() < kBodyFraming + kCarrierLen)
        throw FormatError("query body too short");
    const std::size_t capacity = plain.size() - kBodyFraming - kCarrierLen;
    const std::size_t task_len = plain[0] | std::size_t{plain[1]} << 8;
    if (task_len > capacity)
        throw FormatError("task length field exceeds the task region");
    BodyContents out;
    auto task_begin = plain.begin() + kBodyFraming;
    out.task.assign(task_begin, task_begin + static_cast<std::ptrdiff_t>(task_len));
    out.padding.assign(task_begin + static_cast<std::ptrdiff_t>(task_len),
                       task_begin + static_cast<std::ptrdiff_t>(capacity));
    std::copy(plain.end() - kCarrierLen, plain.end(), out.carrier.begin());
    return out;
}

QueryBody reencrypt_body(const BodyContents& contents, const crypto::SymKey& key, Rng& rng)
{
    const std::size_t capacity = contents.task.size() + contents.padding.size();
    if (capacity > 0xffff)
        throw FormatError("task capacity exceeds the 16-bit length field");
    Bytes plain;
    plain.reserve(kBodyFraming + capacity + kCarrierLen);
    plain.push_back(static_cast<std::uint8_t>(contents.task.size() & 0xff));
    plain.push_back(static_cast<std::uint8_t>(contents.task.size() >> 8));
    plain.insert(plain.end(), contents.task.begin(), contents.task.end());
    plain.insert(plain.end(), contents.padding.begin(), contents.padding.end());
    plain.insert(plain.end(), contents.carrier.begin(), contents.carrier.end());
    return QueryBody{crypto::sym_encrypt(key, plain, rng)};
}

} // namespace onionwsn::onion
