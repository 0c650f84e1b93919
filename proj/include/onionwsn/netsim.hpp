#ifndef ONIONWSN_NETSIM_HPP
#define ONIONWSN_NETSIM_HPP

// Deterministic discrete-event simulator: topologies, shortest-path routing,
// an abstract link model, query execution over real protocol objects, the
// event trace and QTTR statistics.

#include "onionwsn/node.hpp"

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace onionwsn::netsim {

class RoutingError : public Error {
public:
    using Error::Error;
};

enum class TopologyKind { Grid, Disc };
std::string_view to_string(TopologyKind kind);
TopologyKind parse_topology(std::string_view name);

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// Sensors are vertices 0..s-1; the sink is vertex s, placed at the centre.
struct Topology {
    TopologyKind kind = TopologyKind::Grid;
    std::vector<Point> positions;
    std::vector<std::vector<std::size_t>> adjacency;  // sorted ascending

    std::size_t sensor_count() const { return positions.empty() ? 0 : positions.size() - 1; }
    std::size_t sink() const { return sensor_count(); }
    std::size_t vertex_count() const { return positions.size(); }
    // Neighbours among sensors only (the sink not counted).
    std::size_t sensor_degree(std::size_t v) const;
};

// rows = floor(sqrt(s)), cols = ceil(s / rows), filled row by row with
// spacing a. Sensors are adjacent at Chebyshev lattice distance 1; the sink
// links to the sensors within one lattice step of the centre on both axes.
Topology build_grid(std::size_t s, double a);

// s sensors uniform on a disc of radius r_p = r_s * sqrt(s); vertices within
// radio_range of each other are adjacent.
Topology build_random_disc(std::size_t s, double r_s, double radio_range, Rng& rng);

// Sensors in the connected component of the sink, ascending.
std::vector<std::size_t> reachable_set(const Topology& topo);
double reachable_fraction(const Topology& topo);

// Minimum-hop paths. Among equal-length paths the next hop is always the
// lowest-numbered candidate. Distances are cached per destination.
class Router {
public:
    explicit Router(const Topology& topo) : topo_(&topo) {}
    // Vertex list from src to dst inclusive. Throws RoutingError.
    std::vector<std::size_t> route(std::size_t src, std::size_t dst);

private:
    const std::vector<int>& distances_to(std::size_t dst);
    const Topology* topo_;
    std::map<std::size_t, std::vector<int>> dist_;
};

std::vector<std::size_t> route(const Topology& topo, std::size_t src, std::size_t dst);

struct LinkModel {
    double data_rate_bps = 12e6;
    double latency_s = 0.5e-3;
    double loss = 0.0;       // per-transmission loss probability
    double rto_s = 1.0;      // first retransmission timeout, doubled on each loss
    double hop_timeout_s = 30.0;

    double transmit_time(std::size_t bytes) const
    {
        return static_cast<double>(bytes) * 8.0 / data_rate_bps + latency_s;
    }
    void validate() const;
};

// How simulated query paths pick their nodes.
enum class PathNodes {
    Distinct,  // the path-selection algorithm verbatim; needs n <= reachable sensors
    Reuse,     // nodes may repeat, never twice in a row
};
std::string_view to_string(PathNodes p);
PathNodes parse_path_nodes(std::string_view name);

// ---- trace ---------------------------------------------------------------

enum class EventKind { Issue, Transmit, Deliver, Lost, ProcessStart, ProcessEnd, Return, Abort };
std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view name);

using Digest = std::array<std::uint8_t, crypto::kDigestLen>;

struct TraceEvent {
    std::uint64_t id = 0;
    double t = 0.0;
    EventKind kind = EventKind::Issue;
    std::uint64_t query = 0;  // index of the query within the run

    // Transmit / deliver / lost: one radio hop of an overlay hop ip_src -> ip_dst.
    Address link_src, link_dst, ip_src, ip_dst;
    std::size_t bytes = 0;
    Digest head_digest{}, body_digest{};

    // Process events. Ground truth: role and, for targets, carrier states
    // and the local reading. Only owned nodes' values are visible to an
    // internal adversary.
    Address node;
    std::optional<Role> role;
    std::optional<vm::CarrierString> carrier_in, carrier_out;
    std::vector<std::string> quantities;  // sensors the task reads
    std::optional<double> reading;
    std::optional<bool> contributed;      // task changed the carrier

    // Return / abort.
    std::optional<double> qttr_s;
    std::optional<double> result;
    std::string reason;
};

struct TraceHeader {
    int version = 1;
    Address sink;
    std::string topology;
    std::size_t s = 0;
    std::size_t n = 0;
    std::size_t queries = 0;
    std::size_t concurrency = 1;
    bool delays = false;
    bool entry_mitigation = true;
    std::uint64_t seed = 0;
    std::string task;
};

struct Trace {
    TraceHeader header;
    std::vector<TraceEvent> events;
};

void write_trace(std::ostream& out, const Trace& trace);
// Throws FormatError on malformed input.
Trace read_trace(std::istream& in);

// ---- simulation ----------------------------------------------------------

struct SimParams {
    TimingParams timing{.delays_enabled = false};
    LinkModel link;
    bool entry_mitigation = true;
    PathNodes path_nodes = PathNodes::Reuse;
    std::size_t concurrency = 1;  // queries in flight at once
    std::string task = "SUM(temperature)";
    double reading_min = 15.0;
    double reading_max = 30.0;
    bool record_trace = true;
};

struct QttrRecord {
    std::string topology;
    std::size_t s = 0;
    std::size_t n = 0;
    std::size_t query_id = 0;
    std::optional<double> qttr_s;  // empty when aborted
    std::size_t hops_total = 0;    // radio transmissions, retransmissions included
    bool aborted() const { return !qttr_s.has_value(); }
};

// Address of simulated vertex v (sensors and sink alike).
Address vertex_address(std::size_t v);

// One network: topology, keys for every sensor, sensor state, and the sink's
// registry holding the reachable sensors. Runs queries over the event queue.
class Simulator {
public:
    Simulator(Topology topo, SimParams params, std::uint64_t seed);
    ~Simulator();
    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    const Topology& topology() const { return topo_; }
    const Registry& registry() const { return registry_; }
    const SimParams& params() const { return params_; }
    const std::vector<std::size_t>& reachable() const { return reachable_; }
    std::size_t vertex_of(Address a) const;
    SensorNode& sensor(std::size_t v);

    // Random definition over reachable sensors with floor(n/2) targets.
    QueryDefinition plan(std::size_t n, Rng& rng) const;

    // Plans and runs `count` queries of length n.
    std::vector<QttrRecord> run_random(std::size_t count, std::size_t n, Rng& rng);
    // Runs the given definitions in order.
    std::vector<QttrRecord> run(const std::vector<QueryDefinition>& definitions, Rng& rng);

    const Trace& trace() const { return trace_; }
    Trace take_trace();

private:
    struct Flight;
    struct Impl;

    Topology topo_;
    SimParams params_;
    std::uint64_t seed_;
    Router router_;
    std::vector<std::size_t> reachable_;
    std::vector<std::optional<SensorNode>> sensors_;
    std::map<Address, std::size_t> by_address_;
    Registry registry_;
    SinkIdentityKeys sink_;
    Request request_;
    vm::Task task_;
    Trace trace_;
    std::uint64_t next_query_ = 0;
    std::uint64_t next_event_ = 0;
};

// ---- experiments ---------------------------------------------------------

struct ExperimentConfig {
    std::vector<TopologyKind> topologies{TopologyKind::Grid};
    std::vector<std::size_t> s{50};
    std::vector<std::size_t> n{5};
    std::size_t queries = 40;   // per (topology, s, n, run)
    std::size_t runs = 1;
    std::uint64_t seed = 1;
    double a = 60.0;
    double r_s = 35.0;
    double radio_range = 85.0;
    std::size_t threads = 1;
    SimParams sim;
    std::string trace_dir;      // empty: no traces written

    void validate() const;
};

struct CellStats {
    std::string topology;
    std::size_t s = 0;
    std::size_t n = 0;
    std::size_t total = 0;
    std::size_t aborted = 0;
    double pct_aborted = 0.0;
    // Over returned queries; absent when none returned.
    std::optional<double> min, avg, max, std, q25, median, q75;
};

struct RunMedian {
    std::string topology;
    std::size_t s = 0;
    std::size_t n = 0;
    std::size_t run = 0;
    double reachable_fraction = 0.0;
    std::optional<double> median_qttr_s;
};

struct ExperimentResult {
    std::vector<QttrRecord> records;
    std::vector<RunMedian> runs;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Sample statistics, linearly interpolated quantiles.
double quantile(std::vector<double> xs, double p);
double sample_std(const std::vector<double>& xs);
std::vector<CellStats> summarize(const std::vector<QttrRecord>& records);

struct RankTest {
    double u = 0.0;         // U statistic of the first sample
    double z = 0.0;
    double p_less = 1.0;    // one-sided p for "first sample tends to be smaller"
};
// Mann-Whitney U with the normal approximation and tie correction.
RankTest mann_whitney_less(const std::vector<double>& x, const std::vector<double>& y);

void write_csv(std::ostream& out, const std::vector<QttrRecord>& records);
// JSON summary: per-cell stats, per-run medians and, when both topologies
// ran with several runs, the grid-vs-disc rank test per (s, n).
void write_summary(std::ostream& out, const ExperimentConfig& cfg, const ExperimentResult& result);

} // namespace onionwsn::netsim

#endif // ONIONWSN_NETSIM_HPP
