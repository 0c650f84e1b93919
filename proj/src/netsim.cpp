#include "onionwsn/netsim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <queue>
#include <set>
#include <sstream>
#include <thread>

namespace onionwsn::netsim {

using json = nlohmann::ordered_json;

std::string_view to_string(TopologyKind kind)
{
    return kind == TopologyKind::Grid ? "grid" : "disc";
}

TopologyKind parse_topology(std::string_view name)
{
    if (name == "grid")
        return TopologyKind::Grid;
    if (name == "disc")
        return TopologyKind::Disc;
    throw ConfigError("unknown topology '" + std::string(name) + "' (expected grid or disc)");
}

std::string_view to_string(PathNodes p) { return p == PathNodes::Distinct ? "distinct" : "reuse"; }

PathNodes parse_path_nodes(std::string_view name)
{
    if (name == "distinct")
        return PathNodes::Distinct;
    if (name == "reuse")
        return PathNodes::Reuse;
    throw ConfigError("unknown path_nodes '" + std::string(name) + "' (expected distinct or reuse)");
}

// ---- topology ------------------------------------------------------------

std::size_t Topology::sensor_degree(std::size_t v) const
{
    const auto& adj = adjacency.at(v);
    return static_cast<std::size_t>(
        std::count_if(adj.begin(), adj.end(), [&](std::size_t w) { return w != sink(); }));
}

namespace {

void link(Topology& t, std::size_t u, std::size_t v)
{
    t.adjacency[u].push_back(v);
    t.adjacency[v].push_back(u);
}

void sort_adjacency(Topology& t)
{
    for (auto& adj : t.adjacency) {
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    }
}

} // namespace

Topology build_grid(std::size_t s, double a)
{
    if (s == 0)
        throw ConfigError("network size s must be at least 1");
    if (!(a > 0.0))
        throw ConfigError("grid spacing a must be positive");
    const auto rows = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(s))));
    const std::size_t cols = (s + rows - 1) / rows;

    Topology t;
    t.kind = TopologyKind::Grid;
    t.positions.resize(s + 1);
    t.adjacency.resize(s + 1);
    auto cell = [&](std::size_t v) { return std::pair{v / cols, v % cols}; };
    for (std::size_t v = 0; v < s; ++v) {
        auto [r, c] = cell(v);
        t.positions[v] = {static_cast<double>(c) * a, static_cast<double>(r) * a};
    }
    for (std::size_t u = 0; u < s; ++u) {
        auto [ru, cu] = cell(u);
        for (std::size_t v = u + 1; v < s; ++v) {
            auto [rv, cv] = cell(v);
            const auto dr = ru > rv ? ru - rv : rv - ru;
            const auto dc = cu > cv ? cu - cv : cv - cu;
            if (dr <= 1 && dc <= 1)
                link(t, u, v);
        }
    }
    const Point centre{static_cast<double>(cols - 1) * a / 2.0,
                       static_cast<double>(rows - 1) * a / 2.0};
    t.positions[s] = centre;
    const double reach = a * (1.0 + 1e-9);
    for (std::size_t v = 0; v < s; ++v)
        if (std::fabs(t.positions[v].x - centre.x) <= reach &&
            std::fabs(t.positions[v].y - centre.y) <= reach)
            link(t, v, s);
    sort_adjacency(t);
    return t;
}

Topology build_random_disc(std::size_t s, double r_s, double radio_range, Rng& rng)
{
    if (s == 0)
        throw ConfigError("network size s must be at least 1");
    if (!(r_s > 0.0) || !(radio_range > 0.0))
        throw ConfigError("r_s and radio_range must be positive");
    const double r_p = r_s * std::sqrt(static_cast<double>(s));
    Topology t;
    t.kind = TopologyKind::Disc;
    t.positions.resize(s + 1);
    t.adjacency.resize(s + 1);
    for (std::size_t v = 0; v < s; ++v) {
        const double r = r_p * std::sqrt(rng.uniform01());
        const double theta = 2.0 * std::numbers::pi * rng.uniform01();
        t.positions[v] = {r * std::cos(theta), r * std::sin(theta)};
    }
    t.positions[s] = {0.0, 0.0};
    const double r2 = radio_range * radio_range;
    for (std::size_t u = 0; u <= s; ++u)
        for (std::size_t v = u + 1; v <= s; ++v) {
            const double dx = t.positions[u].x - t.positions[v].x;
            const double dy = t.positions[u].y - t.positions[v].y;
            if (dx * dx + dy * dy <= r2)
                link(t, u, v);
        }
    sort_adjacency(t);
    return t;
}

std::vector<std::size_t> reachable_set(const Topology& topo)
{
    std::vector<bool> seen(topo.vertex_count(), false);
    std::deque<std::size_t> frontier{topo.sink()};
    seen[topo.sink()] = true;
    while (!frontier.empty()) {
        const auto u = frontier.front();
        frontier.pop_front();
        for (auto w : topo.adjacency[u])
            if (!seen[w]) {
                seen[w] = true;
                frontier.push_back(w);
            }
    }
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < topo.sensor_count(); ++v)
        if (seen[v])
            out.push_back(v);
    return out;
}

double reachable_fraction(const Topology& topo)
{
    if (topo.sensor_count() == 0)
        return 0.0;
    return static_cast<double>(reachable_set(topo).size()) /
           static_cast<double>(topo.sensor_count());
}

const std::vector<int>& Router::distances_to(std::size_t dst)
{
    auto it = dist_.find(dst);
    if (it != dist_.end())
        return it->second;
    std::vector<int> dist(topo_->vertex_count(), -1);
    std::deque<std::size_t> frontier{dst};
    dist[dst] = 0;
    while (!frontier.empty()) {
        const auto u = frontier.front();
        frontier.pop_front();
        for (auto w : topo_->adjacency[u])
            if (dist[w] < 0) {
                dist[w] = dist[u] + 1;
                frontier.push_back(w);
            }
    }
    return dist_.emplace(dst, std::move(dist)).first->second;
}

std::vector<std::size_t> Router::route(std::size_t src, std::size_t dst)
{
    if (src >= topo_->vertex_count() || dst >= topo_->vertex_count())
        throw RoutingError("route endpoint out of range");
    const auto& dist = distances_to(dst);
    if (dist[src] < 0)
        throw RoutingError("no route from vertex " + std::to_string(src) + " to vertex " +
                           std::to_string(dst));
    std::vector<std::size_t> hops{src};
    std::size_t u = src;
    while (u != dst) {
        for (auto w : topo_->adjacency[u])
            if (dist[w] == dist[u] - 1) {
                u = w;
                break;
            }
        hops.push_back(u);
    }
    return hops;
}

std::vector<std::size_t> route(const Topology& topo, std::size_t src, std::size_t dst)
{
    Router r(topo);
    return r.route(src, dst);
}

void LinkModel::validate() const
{
    if (!(data_rate_bps > 0.0))
        throw ConfigError("data_rate must be positive");
    if (!(latency_s >= 0.0))
        throw ConfigError("latency must be non-negative");
    if (!(loss >= 0.0 && loss < 1.0))
        throw ConfigError("loss must lie in [0, 1)");
    if (!(rto_s > 0.0))
        throw ConfigError("rto must be positive");
    if (!(hop_timeout_s > 0.0))
        throw ConfigError("hop_timeout must be positive");
}

// ---- trace I/O -----------------------------------------------------------

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 8> kEventNames{{
    {EventKind::Issue, "issue"},
    {EventKind::Transmit, "transmit"},
    {EventKind::Deliver, "deliver"},
    {EventKind::Lost, "lost"},
    {EventKind::ProcessStart, "process_start"},
    {EventKind::ProcessEnd, "process_end"},
    {EventKind::Return, "return"},
    {EventKind::Abort, "abort"},
}};

std::string digest_hex(const Digest& d) { return to_hex(ByteView(d.data(), d.size())); }

Digest digest_from_hex(const std::string& s)
{
    auto b = from_hex(s);
    if (b.size() != crypto::kDigestLen)
        throw FormatError("digest must be 16 bytes");
    Digest d{};
    std::copy(b.begin(), b.end(), d.begin());
    return d;
}

std::string carrier_hex(const vm::CarrierString& w)
{
    auto b = w.encode();
    return to_hex(ByteView(b.data(), b.size()));
}

vm::CarrierString carrier_from_hex(const std::string& s)
{
    auto b = from_hex(s);
    if (b.size() != onion::kCarrierLen)
        throw FormatError("carrier must be 32 bytes");
    onion::CarrierBytes c{};
    std::copy(b.begin(), b.end(), c.begin());
    return vm::CarrierString::decode(c);
}

json event_json(const TraceEvent& e)
{
    json j;
    j["kind"] = to_string(e.kind);
    j["id"] = e.id;
    j["t"] = e.t;
    j["query"] = e.query;
    switch (e.kind) {
    case EventKind::Transmit:
    case EventKind::Deliver:
    case EventKind::Lost:
        j["link_src"] = e.link_src.to_string();
        j["link_dst"] = e.link_dst.to_string();
        j["ip_src"] = e.ip_src.to_string();
        j["ip_dst"] = e.ip_dst.to_string();
        j["bytes"] = e.bytes;
        j["head"] = digest_hex(e.head_digest);
        j["body"] = digest_hex(e.body_digest);
        break;
    case EventKind::ProcessStart:
        j["node"] = e.node.to_string();
        break;
    case EventKind::ProcessEnd:
        j["node"] = e.node.to_string();
        if (e.role)
            j["role"] = *e.role == Role::Target ? "target" : "decoy";
        if (e.carrier_in)
            j["carrier_in"] = carrier_hex(*e.carrier_in);
        if (e.carrier_out)
            j["carrier_out"] = carrier_hex(*e.carrier_out);
        if (!e.quantities.empty())
            j["quantities"] = e.quantities;
        if (e.reading)
            j["reading"] = *e.reading;
        if (e.contributed)
            j["contributed"] = *e.contributed;
        break;
    case EventKind::Issue:
        j["ip_dst"] = e.ip_dst.to_string();
        break;
    case EventKind::Return:
        if (e.qttr_s)
            j["qttr_s"] = *e.qttr_s;
        if (e.result)
            j["result"] = *e.result;
        break;
    case EventKind::Abort:
        j["reason"] = e.reason;
        break;
    }
    return j;
}

template <typename T>
T field(const json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end())
        throw FormatError(std::string("trace record lacks '") + key + "'");
    try {
        return it->template get<T>();
    } catch (const json::exception&) {
        throw FormatError(std::string("trace field '") + key + "' has the wrong type");
    }
}

Address address_field(const json& j, const char* key)
{
    try {
        return Address::parse(field<std::string>(j, key));
    } catch (const FormatError&) {
        throw;
    } catch (const Error& e) {
        throw FormatError(std::string("trace field '") + key + "': " + e.what());
    }
}

TraceEvent event_from_json(const json& j)
{
    TraceEvent e;
    e.kind = parse_event_kind(field<std::string>(j, "kind"));
    e.id = field<std::uint64_t>(j, "id");
    e.t = field<double>(j, "t");
    e.query = field<std::uint64_t>(j, "query");
    switch (e.kind) {
    case EventKind::Transmit:
    case EventKind::Deliver:
    case EventKind::Lost:
        e.link_src = address_field(j, "link_src");
        e.link_dst = address_field(j, "link_dst");
        e.ip_src = address_field(j, "ip_src");
        e.ip_dst = address_field(j, "ip_dst");
        e.bytes = field<std::size_t>(j, "bytes");
        e.head_digest = digest_from_hex(field<std::string>(j, "head"));
        e.body_digest = digest_from_hex(field<std::string>(j, "body"));
        break;
    case EventKind::ProcessStart:
        e.node = address_field(j, "node");
        break;
    case EventKind::ProcessEnd: {
        e.node = address_field(j, "node");
        if (j.contains("role")) {
            const auto r = field<std::string>(j, "role");
            if (r != "target" && r != "decoy")
                throw FormatError("unknown role '" + r + "'");
            e.role = r == "target" ? Role::Target : Role::Decoy;
        }
        if (j.contains("carrier_in"))
            e.carrier_in = carrier_from_hex(field<std::string>(j, "carrier_in"));
        if (j.contains("carrier_out"))
            e.carrier_out = carrier_from_hex(field<std::string>(j, "carrier_out"));
        if (j.contains("quantities"))
            e.quantities = field<std::vector<std::string>>(j, "quantities");
        if (j.contains("reading"))
            e.reading = field<double>(j, "reading");
        if (j.contains("contributed"))
            e.contributed = field<bool>(j, "contributed");
        break;
    }
    case EventKind::Issue:
        e.ip_dst = address_field(j, "ip_dst");
        break;
    case EventKind::Return:
        if (j.contains("qttr_s"))
            e.qttr_s = field<double>(j, "qttr_s");
        if (j.contains("result"))
            e.result = field<double>(j, "result");
        break;
    case EventKind::Abort:
        e.reason = field<std::string>(j, "reason");
        break;
    }
    return e;
}

} // namespace

std::string_view to_string(EventKind kind)
{
    for (const auto& [k, name] : kEventNames)
        if (k == kind)
            return name;
    return "?";
}

EventKind parse_event_kind(std::string_view name)
{
    for (const auto& [k, n] : kEventNames)
        if (n == name)
            return k;
    throw FormatError("unknown trace event kind '" + std::string(name) + "'");
}

void write_trace(std::ostream& out, const Trace& trace)
{
    const auto& h = trace.header;
    json head;
    head["kind"] = "header";
    head["version"] = h.version;
    head["sink"] = h.sink.to_string();
    head["topology"] = h.topology;
    head["s"] = h.s;
    head["n"] = h.n;
    head["queries"] = h.queries;
    head["concurrency"] = h.concurrency;
    head["delays"] = h.delays;
    head["entry_mitigation"] = h.entry_mitigation;
    head["seed"] = h.seed;
    head["task"] = h.task;
    out << head.dump() << '\n';
    for (const auto& e : trace.events)
        out << event_json(e).dump() << '\n';
}

Trace read_trace(std::istream& in)
{
    Trace trace;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            const json j = json::parse(line);
            if (!j.is_object())
                throw FormatError("record is not an object");
            if (!have_header) {
                if (field<std::string>(j, "kind") != "header")
                    throw FormatError("first record must be the header");
                auto& h = trace.header;
                h.version = field<int>(j, "version");
                if (h.version != 1)
                    throw FormatError("unsupported trace version " + std::to_string(h.version));
                h.sink = address_field(j, "sink");
                h.topology = field<std::string>(j, "topology");
                h.s = field<std::size_t>(j, "s");
                h.n = field<std::size_t>(j, "n");
                h.queries = field<std::size_t>(j, "queries");
                h.concurrency = field<std::size_t>(j, "concurrency");
                h.delays = field<bool>(j, "delays");
                h.entry_mitigation = field<bool>(j, "entry_mitigation");
                h.seed = field<std::uint64_t>(j, "seed");
                h.task = field<std::string>(j, "task");
                have_header = true;
                continue;
            }
            trace.events.push_back(event_from_json(j));
        } catch (const json::exception& e) {
            throw FormatError("trace line " + std::to_string(lineno) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError("trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_header)
        throw FormatError("trace is empty");
    double last = -std::numeric_limits<double>::infinity();
    for (const auto& e : trace.events) {
        if (e.t < last)
            throw FormatError("trace timestamps are not monotone");
        last = e.t;
    }
    return trace;
}

// ---- simulator -----------------------------------------------------------

Address vertex_address(std::size_t v)
{
    if (v >= 0xfffe)
        throw ConfigError("network too large for the simulated address plan");
    return Address{0x0a000000u + static_cast<std::uint32_t>(v) + 1u};
}

struct Simulator::Flight {
    std::uint64_t query = 0;
    QueryDefinition definition;
    crypto::SymKey id;
    vm::CarrierString offset;
    Query q;
    double issued_at = 0.0;
    std::size_t next_pos = 0;        // index into the path; n means the sink
    std::size_t overlay_src = 0;     // vertex that last processed the query
    std::size_t overlay_dst = 0;
    std::vector<std::size_t> hops;   // radio route for the current overlay hop
    std::size_t hop_index = 0;
    double overlay_started = 0.0;
    std::size_t attempts = 0;
    std::size_t transmissions = 0;
    std::optional<ReceiveOutcome> processing;
    bool finished = false;
    QttrRecord record;
};

namespace {

enum class Step { LinkArrive, LinkRetry, ProcessDone, Abort };

struct Scheduled {
    double t;
    std::uint64_t seq;
    std::size_t flight;
    Step step;
    bool operator>(const Scheduled& o) const { return t != o.t ? t > o.t : seq > o.seq; }
};

} // namespace

struct Simulator::Impl {
    Impl(Simulator& s, Rng& r) : sim(s), rng(r) {}
    Simulator& sim;
    Rng& rng;
    std::vector<Flight> flights;
    std::priority_queue<Scheduled, std::vector<Scheduled>, std::greater<>> queue;
    std::uint64_t seq = 0;
    double now = 0.0;

    void schedule(double t, std::size_t f, Step s) { queue.push({t, seq++, f, s}); }

    TraceEvent& emit(EventKind kind, double t, const Flight& f)
    {
        TraceEvent e;
        e.id = sim.next_event_++;
        e.t = t;
        e.kind = kind;
        e.query = f.query;
        if (!sim.params_.record_trace) {
            scratch = e;
            return scratch;
        }
        sim.trace_.events.push_back(std::move(e));
        return sim.trace_.events.back();
    }
    TraceEvent scratch;

    void launch(std::size_t fi, double t)
    {
        Flight& f = flights[fi];
        f.issued_at = t;
        f.id = f.definition.last_key;
        const auto kind = sim.request_.operation.kind;
        if (sim.params_.entry_mitigation)
            f.offset = draw_carrier_offset(kind, rng);
        const auto initial = apply_offset(vm::initial_carrier(kind), f.offset);
        f.q = assemble_query(f.definition, sim.task_, initial, sink_identity(), sim.registry_,
                             onion::head_size_for(f.definition.length()),
                             onion::kDefaultTaskCapacity, rng);
        f.record.n = f.definition.length();
        f.record.query_id = static_cast<std::size_t>(f.query);
        auto& e = emit(EventKind::Issue, t, f);
        e.ip_dst = f.definition.path.front();
        f.next_pos = 0;
        start_overlay(fi, sim.topo_.sink(), sim.vertex_of(f.definition.path.front()), t);
    }

    onion::SinkIdentity sink_identity() const { return sim.sink_.identity(); }

    void start_overlay(std::size_t fi, std::size_t src, std::size_t dst, double t)
    {
        Flight& f = flights[fi];
        f.overlay_src = src;
        f.overlay_dst = dst;
        f.overlay_started = t;
        f.hop_index = 0;
        f.attempts = 0;
        try {
            f.hops = sim.router_.route(src, dst);
        } catch (const RoutingError& e) {
            abort(fi, t, e.what());
            return;
        }
        send(fi, t);
    }

    void send(std::size_t fi, double t)
    {
        Flight& f = flights[fi];
        const std::size_t u = f.hops[f.hop_index];
        const std::size_t v = f.hops[f.hop_index + 1];
        const std::size_t bytes = f.q.head.size() + f.q.body.size();
        ++f.transmissions;
        auto& e = emit(EventKind::Transmit, t, f);
        e.link_src = vertex_address(u);
        e.link_dst = vertex_address(v);
        e.ip_src = vertex_address(f.overlay_src);
        e.ip_dst = vertex_address(f.overlay_dst);
        e.bytes = bytes;
        if (sim.params_.record_trace) {
            e.head_digest = crypto::digest(f.q.head.bytes);
            e.body_digest = crypto::digest(f.q.body.bytes);
        }
        const TraceEvent tx = e;
        const auto& link = sim.params_.link;
        const double arrive = t + link.transmit_time(bytes);
        const double deadline = f.overlay_started + link.hop_timeout_s;
        if (link.loss > 0.0 && rng.uniform01() < link.loss) {
            auto& lost = emit(EventKind::Lost, arrive, f);
            copy_link(lost, tx);
            const double retry = t + link.rto_s * std::pow(2.0, static_cast<double>(f.attempts));
            ++f.attempts;
            if (retry >= deadline)
                schedule(deadline, fi, Step::Abort);
            else
                schedule(std::max(retry, arrive), fi, Step::LinkRetry);
            return;
        }
        if (arrive > deadline) {
            schedule(deadline, fi, Step::Abort);
            return;
        }
        schedule(arrive, fi, Step::LinkArrive);
    }

    static void copy_link(TraceEvent& dst, const TraceEvent& src)
    {
        dst.link_src = src.link_src;
        dst.link_dst = src.link_dst;
        dst.ip_src = src.ip_src;
        dst.ip_dst = src.ip_dst;
        dst.bytes = src.bytes;
        dst.head_digest = src.head_digest;
        dst.body_digest = src.body_digest;
    }

    void arrive(std::size_t fi, double t)
    {
        Flight& f = flights[fi];
        const std::size_t u = f.hops[f.hop_index];
        const std::size_t v = f.hops[f.hop_index + 1];
        auto& e = emit(EventKind::Deliver, t, f);
        e.link_src = vertex_address(u);
        e.link_dst = vertex_address(v);
        e.ip_src = vertex_address(f.overlay_src);
        e.ip_dst = vertex_address(f.overlay_dst);
        e.bytes = f.q.head.size() + f.q.body.size();
        if (sim.params_.record_trace) {
            e.head_digest = crypto::digest(f.q.head.bytes);
            e.body_digest = crypto::digest(f.q.body.bytes);
        }
        ++f.hop_index;
        f.attempts = 0;
        if (v != f.overlay_dst) {
            send(fi, t);  // relays forward at once
            return;
        }
        if (v == sim.topo_.sink()) {
            finish(fi, t);
            return;
        }
        process(fi, v, t);
    }

    void process(std::size_t fi, std::size_t v, double t)
    {
        Flight& f = flights[fi];
        auto& start = emit(EventKind::ProcessStart, t, f);
        start.node = vertex_address(v);
        auto outcome = sim.sensor(v).on_receive(f.q);
        if (!outcome.forward) {
            abort(fi, t, outcome.diagnostic);
            return;
        }
        const double done = t + outcome.forward->delay_s;
        f.processing = std::move(outcome);
        schedule(done, fi, Step::ProcessDone);
    }

    void process_done(std::size_t fi, double t)
    {
        Flight& f = flights[fi];
        ReceiveOutcome out = std::move(*f.processing);
        f.processing.reset();
        const std::size_t v = f.overlay_dst;
        auto& e = emit(EventKind::ProcessEnd, t, f);
        e.node = vertex_address(v);
        e.role = out.role;
        if (out.target) {
            e.carrier_in = out.target->carrier_in;
            e.carrier_out = out.target->carrier_out;
            e.quantities = sim.request_.operation.quantities();
            const auto& readings = sim.sensor(v).sensors().readings;
            if (auto it = readings.find(sim.request_.operation.quantity); it != readings.end())
                e.reading = it->second;
            e.contributed = out.target->carrier_out != out.target->carrier_in;
        }
        f.q = std::move(out.forward->query);
        ++f.next_pos;
        const Address next = out.forward->next_hop;
        start_overlay(fi, v, sim.vertex_of(next), t);
    }

    void finish(std::size_t fi, double t)
    {
        Flight& f = flights[fi];
        auto& e = emit(EventKind::Return, t, f);
        try {
            const auto id = onion::open_terminal(f.q.head, sim.sink_.keys);
            if (id != f.id)
                throw AuthenticationError("returned query id does not match");
            auto w = vm::CarrierString::decode(onion::open_body(f.q.body, id).carrier);
            w = remove_offset(w, f.offset);
            if (w.count > 0)
                e.result = vm::finalize(sim.request_.operation.kind, w);
        } catch (const Error& err) {
            e.kind = EventKind::Abort;
            e.reason = std::string("sink rejected the returning query: ") + err.what();
            close(fi, t, false);
            return;
        }
        e.qttr_s = t - f.issued_at;
        close(fi, t, true);
    }

    void abort(std::size_t fi, double t, const std::string& reason)
    {
        auto& e = emit(EventKind::Abort, t, flights[fi]);
        e.reason = reason;
        close(fi, t, false);
    }

    void close(std::size_t fi, double t, bool returned)
    {
        Flight& f = flights[fi];
        f.finished = true;
        if (returned)
            f.record.qttr_s = t - f.issued_at;
        f.record.hops_total = f.transmissions;
        f.q = {};
        finished_at = t;
        ++done_count;
    }

    double finished_at = 0.0;
    std::size_t done_count = 0;

    template <typename Next>
    void run(std::size_t count, Next&& next_definition)
    {
        flights.resize(count);
        std::size_t launched = 0;
        auto launch_next = [&](double t) {
            if (launched == count)
                return;
            Flight& f = flights[launched];
            f.query = sim.next_query_++;
            f.definition = next_definition();
            launch(launched, t);
            ++launched;
        };
        const std::size_t width = std::max<std::size_t>(1, sim.params_.concurrency);
        for (std::size_t i = 0; i < width && i < count; ++i)
            launch_next(now);
        // A flight can abort inside launch(); keep the window full.
        while (true) {
            while (launched < count && launched - done_count < width)
                launch_next(finished_at > now ? finished_at : now);
            if (queue.empty())
                break;
            const auto ev = queue.top();
            queue.pop();
            now = ev.t;
            const std::size_t before = done_count;
            switch (ev.step) {
            case Step::LinkArrive: arrive(ev.flight, ev.t); break;
            case Step::LinkRetry: send(ev.flight, ev.t); break;
            case Step::ProcessDone: process_done(ev.flight, ev.t); break;
            case Step::Abort: abort(ev.flight, ev.t, "no delivery to the next hop within the timeout"); break;
            }
            if (done_count > before)
                now = ev.t;
        }
    }
};

Simulator::Simulator(Topology topo, SimParams params, std::uint64_t seed)
    : topo_(std::move(topo)), params_(std::move(params)), seed_(seed), router_(topo_)
{
    params_.timing.validate();
    params_.link.validate();
    if (params_.concurrency == 0)
        throw ConfigError("concurrency must be at least 1");
    if (!(params_.reading_min <= params_.reading_max))
        throw ConfigError("reading_min must not exceed reading_max");
    try {
        request_ = parse_request(params_.task + " @ field");
    } catch (const RequestError& e) {
        throw ConfigError(std::string("task: ") + e.what());
    }
    task_ = compile_task(request_.operation);

    reachable_ = reachable_set(topo_);
    const Rng base(seed);
    sensors_.resize(topo_.sensor_count());
    std::set<std::string> quantities{"temperature", "humidity", "light"};
    for (const auto& q : request_.operation.quantities())
        quantities.insert(q);
    for (std::size_t v = 0; v < topo_.sensor_count(); ++v) {
        Rng key_rng = base.derive({1, v});
        Rng state_rng = base.derive({2, v});
        auto kp = crypto::generate_keypair(key_rng);
        vm::SensorInterface s;
        for (const auto& q : quantities)
            if (q != "light")
                s.readings[q] = state_rng.uniform(params_.reading_min, params_.reading_max);
        s.statuses["light"] = state_rng.below(2) == 0 ? "ON" : "OFF";
        s.readings.erase("light");
        const Address a = vertex_address(v);
        by_address_.emplace(a, v);
        sensors_[v].emplace(a, kp, s, params_.timing, base.derive({3, v}));
    }
    for (auto v : reachable_) {
        RegistryEntry e;
        e.address = vertex_address(v);
        e.public_key = sensors_[v]->keys().public_key;
        e.location = "field";
        e.quantities = quantities;
        registry_.add(e);
    }
    Rng sink_rng = base.derive({4});
    sink_.address = vertex_address(topo_.sink());
    sink_.keys = crypto::generate_keypair(sink_rng);
    by_address_.emplace(sink_.address, topo_.sink());

    trace_.header.sink = sink_.address;
    trace_.header.topology = std::string(to_string(topo_.kind));
    trace_.header.s = topo_.sensor_count();
    trace_.header.concurrency = params_.concurrency;
    trace_.header.delays = params_.timing.delays_enabled;
    trace_.header.entry_mitigation = params_.entry_mitigation;
    trace_.header.seed = seed;
    trace_.header.task = params_.task;
}

Simulator::~Simulator() = default;

std::size_t Simulator::vertex_of(Address a) const
{
    auto it = by_address_.find(a);
    if (it == by_address_.end())
        throw RoutingError("unknown address " + a.to_string());
    return it->second;
}

SensorNode& Simulator::sensor(std::size_t v)
{
    if (v >= sensors_.size())
        throw RoutingError("vertex " + std::to_string(v) + " is not a sensor");
    return *sensors_[v];
}

QueryDefinition Simulator::plan(std::size_t n, Rng& rng) const
{
    if (n < 2)
        throw ConfigError("path length n must be at least 2");
    const auto universe = registry_.addresses();
    if (params_.path_nodes == PathNodes::Distinct) {
        if (n > universe.size())
            throw ConfigError("path length " + std::to_string(n) + " exceeds the " +
                              std::to_string(universe.size()) + " reachable sensors");
        // Target set: a uniform floor(n/2)-subset of the reachable sensors.
        std::vector<Address> pool = universe;
        std::vector<Address> targets;
        for (std::size_t i = 0; i < n / 2; ++i) {
            const auto k = i + rng.below(pool.size() - i);
            std::swap(pool[i], pool[k]);
            targets.push_back(pool[i]);
        }
        return query_path_selection(universe, std::move(targets), n, rng).definition;
    }
    if (universe.size() < 2)
        throw ConfigError("path reuse needs at least two reachable sensors");
    std::vector<bool> mask(n, false);
    for (std::size_t placed = 0; placed < n / 2;) {
        const auto t = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(n - 1)) + 1;
        if (mask[t - 1])
            continue;
        mask[t - 1] = true;
        ++placed;
    }
    std::vector<Address> path;
    for (std::size_t i = 0; i < n; ++i) {
        Address a;
        do {
            a = universe[rng.below(universe.size())];
        } while (!path.empty() && a == path.back());
        path.push_back(a);
    }
    return assign_key_chain(std::move(path), mask, rng);
}

std::vector<QttrRecord> Simulator::run_random(std::size_t count, std::size_t n, Rng& rng)
{
    plan(n, rng);  // validates n against the network before anything runs
    Impl impl(*this, rng);
    impl.now = trace_.events.empty() ? 0.0 : trace_.events.back().t;
    impl.run(count, [&] { return plan(n, rng); });
    trace_.header.n = n;
    trace_.header.queries += count;
    std::vector<QttrRecord> out;
    for (auto& f : impl.flights)
        out.push_back(f.record);
    return out;
}

std::vector<QttrRecord> Simulator::run(const std::vector<QueryDefinition>& definitions, Rng& rng)
{
    Impl impl(*this, rng);
    impl.now = trace_.events.empty() ? 0.0 : trace_.events.back().t;
    std::size_t i = 0;
    impl.run(definitions.size(), [&] { return definitions[i++]; });
    if (!definitions.empty())
        trace_.header.n = definitions.back().length();
    trace_.header.queries += definitions.size();
    std::vector<QttrRecord> out;
    for (auto& f : impl.flights)
        out.push_back(f.record);
    return out;
}

Trace Simulator::take_trace()
{
    Trace t = std::move(trace_);
    trace_ = Trace{};
    trace_.header = t.header;
    trace_.header.queries = 0;
    return t;
}

// ---- experiments ---------------------------------------------------------

void ExperimentConfig::validate() const
{
    if (topologies.empty() || s.empty() || n.empty())
        throw ConfigError("topology, s and n lists must be non-empty");
    for (auto v : s)
        if (v == 0)
            throw ConfigError("s values must be positive");
    for (auto v : n)
        if (v < 2)
            throw ConfigError("n values must be at least 2");
    if (queries == 0 || runs == 0)
        throw ConfigError("queries and runs must be positive");
    if (!(a > 0.0) || !(r_s > 0.0) || !(radio_range > 0.0))
        throw ConfigError("a, r_s and radio_range must be positive");
    if (threads == 0)
        throw ConfigError("threads must be at least 1");
    sim.timing.validate();
    sim.link.validate();
}

namespace {

struct CellJob {
    TopologyKind kind;
    std::size_t s;
    std::size_t run;
    std::vector<QttrRecord> records;
    std::vector<RunMedian> medians;
    std::string error;
    bool config_error = false;
};

std::uint64_t kind_tag(TopologyKind k) { return k == TopologyKind::Grid ? 1 : 2; }

void run_cell(const ExperimentConfig& cfg, CellJob& job)
{
    try {
        const std::string topo_name(to_string(job.kind));
        Rng topo_rng = Rng(cfg.seed).derive({10, kind_tag(job.kind), job.s, job.run});
        Topology topo = job.kind == TopologyKind::Grid
                            ? build_grid(job.s, cfg.a)
                            : build_random_disc(job.s, cfg.r_s, cfg.radio_range, topo_rng);
        const double reach = reachable_fraction(topo);
        SimParams params = cfg.sim;
        params.record_trace = !cfg.trace_dir.empty();
        Simulator sim(std::move(topo), params,
                      Rng(cfg.seed).derive({11, kind_tag(job.kind), job.s, job.run}).next_u64());
        for (auto n : cfg.n) {
            Rng rng = Rng(cfg.seed).derive({12, kind_tag(job.kind), job.s, job.run, n});
            auto recs = sim.run_random(cfg.queries, n, rng);
            std::vector<double> q;
            for (auto& r : recs) {
                r.topology = topo_name;
                r.s = job.s;
                r.query_id = job.run * cfg.queries + (&r - recs.data());
                if (r.qttr_s)
                    q.push_back(*r.qttr_s);
            }
            RunMedian m{topo_name, job.s, n, job.run, reach, std::nullopt};
            if (!q.empty())
                m.median_qttr_s = quantile(q, 0.5);
            job.medians.push_back(m);
            job.records.insert(job.records.end(), recs.begin(), recs.end());
            if (!cfg.trace_dir.empty()) {
                auto tr = sim.take_trace();
                const auto path = std::filesystem::path(cfg.trace_dir) /
                                  ("trace_" + topo_name + "_s" + std::to_string(job.s) + "_n" +
                                   std::to_string(n) + "_r" + std::to_string(job.run) + ".jsonl");
                std::ofstream out(path);
                if (!out)
                    throw Error("cannot write trace file " + path.string());
                write_trace(out, tr);
            }
        }
    } catch (const ConfigError& e) {
        job.error = e.what();
        job.config_error = true;
    } catch (const std::exception& e) {
        job.error = e.what();
    }
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg)
{
    cfg.validate();
    if (!cfg.trace_dir.empty())
        std::filesystem::create_directories(cfg.trace_dir);
    std::vector<CellJob> jobs;
    for (auto kind : cfg.topologies)
        for (auto s : cfg.s)
            for (std::size_t r = 0; r < cfg.runs; ++r)
                jobs.push_back({kind, s, r, {}, {}, {}, false});

    const std::size_t workers = std::min(cfg.threads, jobs.size());
    if (workers <= 1) {
        for (auto& j : jobs)
            run_cell(cfg, j);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < jobs.size(); i = next++)
                    run_cell(cfg, jobs[i]);
            });
        for (auto& t : pool)
            t.join();
    }

    ExperimentResult result;
    for (auto& j : jobs) {
        if (!j.error.empty()) {
            const std::string where = std::string(to_string(j.kind)) + " s=" + std::to_string(j.s);
            if (j.config_error)
                throw ConfigError(where + ": " + j.error);
            throw Error(where + ": " + j.error);
        }
    }
    // Order: topology, s, n, run, query.
    for (auto kind : cfg.topologies)
        for (auto s : cfg.s)
            for (auto n : cfg.n)
                for (auto& j : jobs) {
                    if (j.kind != kind || j.s != s)
                        continue;
                    for (const auto& r : j.records)
                        if (r.n == n)
                            result.records.push_back(r);
                    for (const auto& m : j.medians)
                        if (m.n == n)
                            result.runs.push_back(m);
                }
    return result;
}

// ---- statistics ----------------------------------------------------------

double quantile(std::vector<double> xs, double p)
{
    if (xs.empty())
        throw Error("quantile of an empty sample");
    std::sort(xs.begin(), xs.end());
    const double h = (static_cast<double>(xs.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double sample_std(const std::vector<double>& xs)
{
    if (xs.size() < 2)
        return 0.0;
    double mean = 0.0;
    for (double x : xs)
        mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs)
        ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::vector<CellStats> summarize(const std::vector<QttrRecord>& records)
{
    std::vector<CellStats> out;
    std::map<std::tuple<std::string, std::size_t, std::size_t>, std::size_t> index;
    std::vector<std::vector<double>> samples;
    for (const auto& r : records) {
        const auto key = std::make_tuple(r.topology, r.s, r.n);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, out.size()).first;
            CellStats c;
            c.topology = r.topology;
            c.s = r.s;
            c.n = r.n;
            out.push_back(c);
            samples.emplace_back();
        }
        auto& c = out[it->second];
        ++c.total;
        if (r.aborted())
            ++c.aborted;
        else
            samples[it->second].push_back(*r.qttr_s);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& c = out[i];
        const auto& xs = samples[i];
        c.pct_aborted = 100.0 * static_cast<double>(c.aborted) / static_cast<double>(c.total);
        if (xs.empty())
            continue;
        c.min = *std::min_element(xs.begin(), xs.end());
        c.max = *std::max_element(xs.begin(), xs.end());
        double sum = 0.0;
        for (double x : xs)
            sum += x;
        c.avg = sum / static_cast<double>(xs.size());
        c.std = sample_std(xs);
        c.q25 = quantile(xs, 0.25);
        c.median = quantile(xs, 0.5);
        c.q75 = quantile(xs, 0.75);
    }
    return out;
}

RankTest mann_whitney_less(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.empty() || y.empty())
        throw Error("rank test needs two non-empty samples");
    std::vector<std::pair<double, int>> all;
    for (double v : x)
        all.emplace_back(v, 0);
    for (double v : y)
        all.emplace_back(v, 1);
    std::sort(all.begin(), all.end());
    const double N = static_cast<double>(all.size());
    double r1 = 0.0, tie_term = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first)
            ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second == 0)
                r1 += avg_rank;
        i = j;
    }
    const double n1 = static_cast<double>(x.size()), n2 = static_cast<double>(y.size());
    RankTest rt;
    rt.u = r1 - n1 * (n1 + 1.0) / 2.0;
    const double mean = n1 * n2 / 2.0;
    const double var = n1 * n2 / 12.0 * ((N + 1.0) - tie_term / (N * (N - 1.0)));
    if (var <= 0.0) {
        rt.z = 0.0;
        rt.p_less = 1.0;
        return rt;
    }
    rt.z = (rt.u - mean + 0.5) / std::sqrt(var);
    rt.p_less = 0.5 * std::erfc(-rt.z / std::numbers::sqrt2);
    return rt;
}

namespace {

std::string fixed9(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", v);
    return buf;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

} // namespace

void write_csv(std::ostream& out, const std::vector<QttrRecord>& records)
{
    out << "topology,s,n,query_id,qttr_s,aborted,hops_total\n";
    for (const auto& r : records) {
        out << r.topology << ',' << r.s << ',' << r.n << ',' << r.query_id << ','
            << (r.qttr_s ? fixed9(*r.qttr_s) : std::string()) << ',' << (r.aborted() ? 1 : 0)
            << ',' << r.hops_total << '\n';
    }
}

void write_summary(std::ostream& out, const ExperimentConfig& cfg, const ExperimentResult& result)
{
    json j;
    json c;
    std::vector<std::string> topo;
    for (auto k : cfg.topologies)
        topo.emplace_back(to_string(k));
    c["topology"] = topo;
    c["s"] = cfg.s;
    c["n"] = cfg.n;
    c["queries"] = cfg.queries;
    c["runs"] = cfg.runs;
    c["seed"] = cfg.seed;
    c["a"] = cfg.a;
    c["r_s"] = cfg.r_s;
    c["radio_range"] = cfg.radio_range;
    c["delays"] = cfg.sim.timing.delays_enabled;
    c["path_nodes"] = to_string(cfg.sim.path_nodes);
    c["task"] = cfg.sim.task;
    j["config"] = c;

    json cells = json::array();
    for (const auto& s : summarize(result.records)) {
        json e;
        e["topology"] = s.topology;
        e["s"] = s.s;
        e["n"] = s.n;
        e["queries"] = s.total;
        e["aborted"] = s.aborted;
        e["pct_aborted"] = s.pct_aborted;
        e["min"] = opt(s.min);
        e["avg"] = opt(s.avg);
        e["max"] = opt(s.max);
        e["std"] = opt(s.std);
        e["q25"] = opt(s.q25);
        e["median"] = opt(s.median);
        e["q75"] = opt(s.q75);
        cells.push_back(e);
    }
    j["cells"] = cells;

    json runs = json::array();
    for (const auto& r : result.runs) {
        json e;
        e["topology"] = r.topology;
        e["s"] = r.s;
        e["n"] = r.n;
        e["run"] = r.run;
        e["reachable_fraction"] = r.reachable_fraction;
        e["median_qttr_s"] = opt(r.median_qttr_s);
        runs.push_back(e);
    }
    j["runs"] = runs;

    json tests = json::array();
    const bool both = std::find(cfg.topologies.begin(), cfg.topologies.end(), TopologyKind::Grid) !=
                          cfg.topologies.end() &&
                      std::find(cfg.topologies.begin(), cfg.topologies.end(), TopologyKind::Disc) !=
                          cfg.topologies.end();
    if (both && cfg.runs >= 2) {
        for (auto s : cfg.s)
            for (auto n : cfg.n) {
                std::vector<double> g, d;
                for (const auto& r : result.runs) {
                    if (r.s != s || r.n != n || !r.median_qttr_s)
                        continue;
                    (r.topology == "grid" ? g : d).push_back(*r.median_qttr_s);
                }
                if (g.empty() || d.empty())
                    continue;
                auto rt = mann_whitney_less(g, d);
                json e;
                e["s"] = s;
                e["n"] = n;
                e["hypothesis"] = "grid median QTTR < disc median QTTR";
                e["u"] = rt.u;
                e["z"] = rt.z;
                e["p"] = rt.p_less;
                tests.push_back(e);
            }
    }
    j["rank_tests"] = tests;
    out << j.dump(2) << '\n';
}

} // namespace onionwsn::netsim
