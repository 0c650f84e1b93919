#ifndef ONIONWSN_ADVERSARY_HPP
#define ONIONWSN_ADVERSARY_HPP

// Passive adversaries replayed over simulation traces. Observers read only
// what their position allows; ground-truth fields of the trace are used
// solely for scoring.

#include "onionwsn/netsim.hpp"

#include <functional>
#include <iosfwd>
#include <set>

namespace onionwsn::adversary {

using netsim::Trace;

enum class Claim { ProcessedQuery, IsDecoy, IsTarget, SensesQuantity, ReadingDisclosed };
std::string_view to_string(Claim c);
Claim parse_claim(std::string_view name);

struct Finding {
    std::uint64_t query = 0;           // query of the earliest evidence event
    Address subject;
    Claim claim = Claim::ProcessedQuery;
    std::optional<double> value;       // ReadingDisclosed
    std::string quantity;              // SensesQuantity
    bool suspected = false;            // rests on an unverifiable linkage
    std::vector<std::uint64_t> evidence;
    bool operator==(const Finding&) const = default;
};

// ---- external eavesdropper -------------------------------------------------

struct SizeObservation {
    std::uint64_t query = 0;
    Address node;
    std::size_t bytes_in = 0;
    std::size_t bytes_out = 0;
};

struct ExternalReport {
    // One ProcessedQuery finding per node visit that held the packet.
    std::vector<Finding> processing;
    // Visits whose outgoing packet differs in length from the incoming one.
    std::vector<SizeObservation> size_channel;
    // Best timing guess: a visit is called a target when its hold time
    // exceeds the median hold.
    std::size_t visits = 0;
    std::size_t correct_guesses = 0;
    double accuracy() const
    {
        return visits == 0 ? 0.0 : static_cast<double>(correct_guesses) / static_cast<double>(visits);
    }
};

// Uses transmit and deliver events only (link endpoints, size, time).
ExternalReport external_view(const Trace& trace);

// ---- internal adversary ----------------------------------------------------

enum class Policy {
    AlwaysDeduce,  // trust the IP-transitivity linkage
    MixingAware,   // linkage-based findings become suspected when queries may mix
};
std::string_view to_string(Policy p);
Policy parse_policy(std::string_view name);

struct AdversaryConfig {
    std::set<Address> owned;
    Policy policy = Policy::AlwaysDeduce;
    // Throws ConfigError when the sink is owned.
    void validate(Address sink) const;
};

// Owned nodes see packets where they are a radio endpoint, and their own
// processing (roles, plus task and carrier when they are targets).
std::vector<Finding> internal_findings(const Trace& trace, const AdversaryConfig& cfg);

struct Score {
    std::size_t firm = 0;
    std::size_t firm_false = 0;
    std::size_t suspected = 0;
    std::size_t suspected_false = 0;
    std::size_t reading_disclosures = 0;  // firm and true
};

// True when the finding matches the trace's ground truth.
bool finding_holds(const Trace& trace, const Finding& f, double tolerance = 1e-6);
Score score(const Trace& trace, const std::vector<Finding>& findings);

// ---- scenarios ---------------------------------------------------------------

struct Scenario {
    std::string name;
    Trace trace;
    std::vector<Address> owned;
    std::vector<Finding> expected;  // compared ignoring evidence ids
};

// Hand-built single-query traces for each disclosure rule.
std::vector<Scenario> canonical_scenarios(std::uint64_t seed = 1);

// Findings equal up to evidence ids, as multisets.
bool same_findings(std::vector<Finding> a, std::vector<Finding> b);

struct RandomScenarioConfig {
    std::size_t min_s = 9, max_s = 36;
    std::size_t min_n = 3, max_n = 10;
    std::size_t per_network = 100;  // queries simulated per generated network
};

// Single-query traces with distinct path nodes and a random owned set.
void for_each_random_scenario(std::size_t count, std::uint64_t seed,
                              const std::function<void(const Trace&, const std::set<Address>&)>& fn,
                              const RandomScenarioConfig& cfg = {});

struct RatePoint {
    double fraction = 0.0;
    double rate = 0.0;
};

// P(at least one firm, correct reading disclosure) against the owned fraction.
// Trials share their networks, queries and per-node draws across fractions,
// so a node owned at one fraction is owned at every larger one.
std::vector<RatePoint> disclosure_rate(const std::vector<double>& fractions, std::size_t trials,
                                       std::uint64_t seed, std::size_t s = 36, std::size_t n = 8,
                                       bool entry_mitigation = true);

void write_findings(std::ostream& out, const std::vector<Finding>& findings);

} // namespace onionwsn::adversary

#endif // ONIONWSN_ADVERSARY_HPP
