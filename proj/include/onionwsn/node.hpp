#ifndef ONIONWSN_NODE_HPP
#define ONIONWSN_NODE_HPP

// Per-node protocol state machines: sensor-side query processing and the
// sink's issue / collect / merge cycle.

#include "onionwsn/onion.hpp"
#include "onionwsn/request.hpp"
#include "onionwsn/task_vm.hpp"

#include <map>
#include <optional>
#include <string>

namespace onionwsn {

struct Query {
    onion::QueryHead head;
    onion::QueryBody body;
    bool operator==(const Query&) const = default;
};

struct TimingParams {
    double delta_q_s = 0.050;           // fixed hold before the random wait
    double r_max = 4.0;                 // r ~ U[0, r_max]
    bool delays_enabled = true;         // off mirrors the simulation setup
    std::uint64_t step_budget = vm::kDefaultStepBudget;  // task budget
    double step_cost_s = 1e-6;          // simulated cost of one VM step
    double decrypt_cost_s_per_byte = 2e-6;

    // Task budget expressed in seconds; must stay below delta_q_s.
    double task_budget_s() const { return static_cast<double>(step_budget) * step_cost_s; }
    void validate() const;
};

struct ForwardAction {
    Address next_hop;
    Query query;
    double delay_s = 0.0;
};

enum class Role { Decoy, Target };

// What a target node learned while processing. Ground truth for the trace;
// only an adversary owning the node gets to read it.
struct TargetView {
    vm::CarrierString carrier_in;
    vm::CarrierString carrier_out;
    vm::Task task;
    vm::ExecStatus status = vm::ExecStatus::Completed;
    std::optional<std::string> fault;  // sensor fault or invalid task
};

struct ReceiveOutcome {
    std::optional<ForwardAction> forward;  // empty when the query was dropped
    Role role = Role::Decoy;
    std::optional<TargetView> target;
    std::string diagnostic;
};

class SensorNode {
public:
    SensorNode(Address address, crypto::KeyPair keys, vm::SensorInterface sensors,
               TimingParams timing, Rng rng);

    Address address() const { return address_; }
    const crypto::KeyPair& keys() const { return keys_; }
    const vm::SensorInterface& sensors() const { return sensors_; }
    vm::SensorInterface& sensors() { return sensors_; }
    const TimingParams& timing() const { return timing_; }

    // Peel, execute (targets only), re-pad and schedule the forward. Decoys
    // and targets draw the same amount of randomness in the same order, so
    // both produce identically distributed delays and sizes.
    ReceiveOutcome on_receive(const Query& query);

private:
    Address address_;
    crypto::KeyPair keys_;
    vm::SensorInterface sensors_;
    TimingParams timing_;
    Rng rng_;
};

struct SinkConfig {
    std::size_t path_length = 8;       // n
    // Head size: head_size_for(max_path_length). Zero sizes each head for its
    // own path length, which is what the simulation experiments do.
    std::size_t max_path_length = onion::kDefaultMaxPathLength;
    std::size_t task_capacity = onion::kDefaultTaskCapacity;
    bool entry_mitigation = true;      // random carrier offset subtracted at finalize
    double deadline_s = 30.0;
};

struct IssuedQuery {
    Address first_hop;
    Query query;
    crypto::SymKey id;
};

enum class CollectStatus { Accepted, Completed, RejectedUnknown, RejectedDuplicate, RejectedMalformed };

struct RequestResult {
    vm::Aggregation kind = vm::Aggregation::Sum;
    std::optional<double> value;       // empty when no node contributed
    std::string error;
    vm::CarrierString merged;
    std::size_t queries = 0;
};

struct CollectOutcome {
    CollectStatus status = CollectStatus::RejectedUnknown;
    std::optional<RequestResult> result;  // set when status == Completed
};

struct SinkIdentityKeys {
    Address address;
    crypto::KeyPair keys;
    onion::SinkIdentity identity() const { return {address, keys.public_key}; }
};

// Entry mitigation: the sink starts each carrier from a random offset and
// subtracts it again on return. count starts at 2 or more, so a carrier seen
// with count 1 can only come from an unmitigated query.
vm::CarrierString draw_carrier_offset(vm::Aggregation kind, Rng& rng);
vm::CarrierString apply_offset(vm::CarrierString w, const vm::CarrierString& offset);
vm::CarrierString remove_offset(vm::CarrierString w, const vm::CarrierString& offset);

// Builds head and body for one definition.
Query assemble_query(const QueryDefinition& defn, const vm::Task& task,
                     const vm::CarrierString& initial, const onion::SinkIdentity& sink,
                     const Registry& registry, std::size_t head_size, std::size_t task_capacity,
                     Rng& rng);

// One request's lifetime at the sink.
class SinkSession {
public:
    SinkSession(const SinkIdentityKeys& sink, const Registry& registry, SinkConfig config);

    // Translate and issue. Throws RequestError / PlanningError before
    // anything is issued.
    std::vector<IssuedQuery> issue(const Request& request, Rng& rng, double now_s = 0.0);

    CollectOutcome collect(const Query& query);

    // Retires a query that missed its deadline and plans a replacement over
    // the same targets with fresh keys and path. Returns nothing if the id is
    // not pending or the deadline has not passed.
    std::optional<IssuedQuery> abort_and_reissue(const crypto::SymKey& id, double now_s, Rng& rng);

    bool complete() const { return result_.has_value(); }
    const std::optional<RequestResult>& result() const { return result_; }
    const RecoveryRules& rules() const { return rules_; }
    std::size_t pending_count() const { return pending_.size(); }
    bool is_pending(const crypto::SymKey& id) const { return pending_.contains(id); }
    const QueryDefinition* pending_definition(const crypto::SymKey& id) const;

private:
    struct Pending {
        QueryDefinition definition;
        double issued_at_s = 0.0;
        vm::CarrierString offset;  // what the sink added to the initial carrier
    };

    IssuedQuery launch(QueryDefinition defn, double now_s, Rng& rng);
    std::size_t head_size(std::size_t n) const;

    SinkIdentityKeys sink_;
    const Registry& registry_;
    SinkConfig config_;
    Request request_;
    vm::Task task_;
    RecoveryRules rules_;
    std::map<crypto::SymKey, Pending> pending_;
    std::map<crypto::SymKey, vm::CarrierString> partials_;
    std::optional<RequestResult> result_;
};

// In-process network without timing: hands queries node to node until they
// return to the sink. Used by the `query` CLI command and end-to-end tests.
class LocalNetwork {
public:
    LocalNetwork(SinkIdentityKeys sink, Registry registry, std::vector<SensorNode> nodes);

    struct RunReport {
        RequestResult result;
        std::size_t queries_issued = 0;
        std::size_t hops = 0;
        std::vector<std::string> diagnostics;
    };

    RunReport run(const Request& request, const SinkConfig& config, Rng& rng);

    const Registry& registry() const { return registry_; }
    SensorNode* node(Address a);

private:
    SinkIdentityKeys sink_;
    Registry registry_;
    std::map<Address, SensorNode> nodes_;
};

} // namespace onionwsn

#endif // ONIONWSN_NODE_HPP
