#include "onionwsn/node.hpp"

#include <cmath>

namespace onionwsn {

void TimingParams::validate() const
{
    if (!(delta_q_s > 0.0))
        throw ConfigError("delta_q must be positive");
    if (!(r_max >= 0.0))
        throw ConfigError("r_max must be non-negative");
    if (step_budget == 0)
        throw ConfigError("task step budget must be positive");
    if (!(task_budget_s() < delta_q_s))
        throw ConfigError("task budget must be shorter than delta_q");
    if (decrypt_cost_s_per_byte < 0.0 || step_cost_s < 0.0)
        throw ConfigError("processing costs must be non-negative");
}

SensorNode::SensorNode(Address address, crypto::KeyPair keys, vm::SensorInterface sensors,
                       TimingParams timing, Rng rng)
    : address_(address), keys_(std::move(keys)), sensors_(std::move(sensors)), timing_(timing),
      rng_(std::move(rng))
{
    timing_.validate();
}

ReceiveOutcome SensorNode::on_receive(const Query& query)
{
    ReceiveOutcome out;
    onion::PeelResult peeled;
    try {
        peeled = onion::peel(query.head, keys_);
    } catch (const Error& e) {
        out.diagnostic = "dropped query at " + address_.to_string() + ": " + e.what();
        return out;
    }

    ForwardAction action;
    action.next_hop = peeled.next_hop;
    double busy_s = timing_.decrypt_cost_s_per_byte * static_cast<double>(query.head.size());

    if (peeled.keys) {
        out.role = Role::Target;
        TargetView view;
        try {
            onion::BodyContents contents = onion::open_body(query.body, peeled.keys->first);
            view.task.bytecode = contents.task;
            view.carrier_in = vm::CarrierString::decode(contents.carrier);
            view.carrier_out = view.carrier_in;
            try {
                auto exec = vm::execute(view.task, view.carrier_in, sensors_, timing_.step_budget);
                view.carrier_out = exec.carrier;
                view.status = exec.status;
                busy_s += static_cast<double>(exec.steps) * timing_.step_cost_s;
            } catch (const vm::VmError& e) {
                view.fault = e.what();
            }
            contents.carrier = view.carrier_out.encode();
            action.query.body = onion::reencrypt_body(contents, peeled.keys->second, rng_);
            busy_s += 2.0 * timing_.decrypt_cost_s_per_byte * static_cast<double>(query.body.size());
        } catch (const Error& e) {
            // Body does not open under e_a: forward it untouched.
            view.fault = e.what();
            rng_.bytes(crypto::kSymNonceLen);
            action.query.body = query.body;
        }
        if (view.fault)
            out.diagnostic = "task fault at " + address_.to_string() + ": " + *view.fault;
        out.target = std::move(view);
    } else {
        out.role = Role::Decoy;
        // Same draw a target spends on the body nonce.
        rng_.bytes(crypto::kSymNonceLen);
        action.query.body = query.body;
    }

    action.query.head = onion::repad_head(peeled.inner, query.head.size(), rng_);
    const double r = rng_.uniform(0.0, timing_.r_max);
    action.delay_s = timing_.delays_enabled ? timing_.delta_q_s * (1.0 + r) : busy_s;
    out.forward = std::move(action);
    return out;
}

vm::CarrierString draw_carrier_offset(vm::Aggregation kind, Rng& rng)
{
    vm::CarrierString off;
    // Integers keep the later subtraction exact for acc fields of moderate size.
    if (kind != vm::Aggregation::Max)
        off.acc1 = static_cast<double>(1 + rng.below(1023));
    if (kind == vm::Aggregation::Variance || kind == vm::Aggregation::Std)
        off.acc2 = static_cast<double>(1 + rng.below(1023));
    off.count = 2 + rng.below(1022);
    return off;
}

vm::CarrierString apply_offset(vm::CarrierString w, const vm::CarrierString& offset)
{
    w.acc1 += offset.acc1;
    w.acc2 += offset.acc2;
    w.count += offset.count;
    return w;
}

vm::CarrierString remove_offset(vm::CarrierString w, const vm::CarrierString& offset)
{
    w.acc1 -= offset.acc1;
    w.acc2 -= offset.acc2;
    w.count = w.count >= offset.count ? w.count - offset.count : 0;
    return w;
}

Query assemble_query(const QueryDefinition& defn, const vm::Task& task,
                     const vm::CarrierString& initial, const onion::SinkIdentity& sink,
                     const Registry& registry, std::size_t head_size, std::size_t task_capacity,
                     Rng& rng)
{
    Query q;
    q.head = onion::build_head(defn, sink, registry, head_size, rng);
    q.body = onion::build_body(task.bytecode, initial.encode(), defn.first_key, rng, task_capacity);
    return q;
}

SinkSession::SinkSession(const SinkIdentityKeys& sink, const Registry& registry, SinkConfig config)
    : sink_(sink), registry_(registry), config_(config)
{
    if (config_.path_length < 2)
        throw ConfigError("path length must be at least 2");
    if (config_.max_path_length != 0 && config_.max_path_length < config_.path_length)
        throw ConfigError("path length exceeds the deployment maximum");
}

std::size_t SinkSession::head_size(std::size_t n) const
{
    return onion::head_size_for(config_.max_path_length == 0 ? n : config_.max_path_length);
}

const QueryDefinition* SinkSession::pending_definition(const crypto::SymKey& id) const
{
    auto it = pending_.find(id);
    return it == pending_.end() ? nullptr : &it->second.definition;
}

IssuedQuery SinkSession::launch(QueryDefinition defn, double now_s, Rng& rng)
{
    const vm::CarrierString offset = config_.entry_mitigation
                                         ? draw_carrier_offset(rules_.kind, rng)
                                         : vm::CarrierString{};
    const vm::CarrierString initial = apply_offset(vm::initial_carrier(rules_.kind), offset);

    IssuedQuery issued;
    issued.first_hop = defn.path.front();
    issued.id = defn.last_key;
    issued.query = assemble_query(defn, task_, initial, sink_.identity(), registry_,
                                  head_size(defn.length()), config_.task_capacity, rng);
    pending_.emplace(issued.id, Pending{std::move(defn), now_s, offset});
    return issued;
}

std::vector<IssuedQuery> SinkSession::issue(const Request& request, Rng& rng, double now_s)
{
    if (!rules_.query_ids.empty())
        throw Error("session already issued its request");
    auto targets = select_targets(registry_, request);
    auto task = compile_task(request.operation);
    const auto universe = registry_.addresses();
    auto plan = plan_queries(universe, std::move(targets), config_.path_length,
                             request.operation.kind, rng);

    request_ = request;
    task_ = std::move(task);
    rules_ = plan.rules;
    std::vector<IssuedQuery> out;
    out.reserve(plan.definitions.size());
    for (auto& defn : plan.definitions)
        out.push_back(launch(std::move(defn), now_s, rng));
    return out;
}

CollectOutcome SinkSession::collect(const Query& query)
{
    CollectOutcome out;
    crypto::SymKey id;
    try {
        id = onion::open_terminal(query.head, sink_.keys);
    } catch (const Error&) {
        out.status = CollectStatus::RejectedMalformed;
        return out;
    }
    if (partials_.contains(id)) {
        out.status = CollectStatus::RejectedDuplicate;
        return out;
    }
    auto it = pending_.find(id);
    if (it == pending_.end()) {
        out.status = CollectStatus::RejectedUnknown;
        return out;
    }
    vm::CarrierString w;
    try {
        w = vm::CarrierString::decode(onion::open_body(query.body, id).carrier);
    } catch (const Error&) {
        out.status = CollectStatus::RejectedMalformed;
        return out;
    }
    partials_.emplace(id, remove_offset(w, it->second.offset));
    pending_.erase(it);
    out.status = CollectStatus::Accepted;

    if (pending_.empty() && partials_.size() == rules_.expected_count) {
        RequestResult r;
        r.kind = rules_.kind;
        r.queries = partials_.size();
        r.merged = vm::initial_carrier(rules_.kind);
        for (const auto& qid : rules_.query_ids)
            r.merged = vm::merge(rules_.kind, r.merged, partials_.at(qid));
        try {
            r.value = vm::finalize(rules_.kind, r.merged);
        } catch (const vm::VmError& e) {
            r.error = e.what();
        }
        result_ = r;
        out.status = CollectStatus::Completed;
        out.result = std::move(r);
    }
    return out;
}

std::optional<IssuedQuery> SinkSession::abort_and_reissue(const crypto::SymKey& id, double now_s,
                                                          Rng& rng)
{
    auto it = pending_.find(id);
    if (it == pending_.end() || now_s - it->second.issued_at_s < config_.deadline_s)
        return std::nullopt;
    auto targets = it->second.definition.targets();
    const std::size_t n = it->second.definition.length();
    const auto universe = registry_.addresses();
    auto sel = query_path_selection(universe, std::move(targets), n, rng);

    pending_.erase(it);
    std::erase(rules_.query_ids, id);
    rules_.query_ids.push_back(sel.definition.last_key);
    return launch(std::move(sel.definition), now_s, rng);
}

LocalNetwork::LocalNetwork(SinkIdentityKeys sink, Registry registry, std::vector<SensorNode> nodes)
    : sink_(std::move(sink)), registry_(std::move(registry))
{
    for (auto& n : nodes) {
        const Address a = n.address();
        nodes_.emplace(a, std::move(n));
    }
}

SensorNode* LocalNetwork::node(Address a)
{
    auto it = nodes_.find(a);
    return it == nodes_.end() ? nullptr : &it->second;
}

LocalNetwork::RunReport LocalNetwork::run(const Request& request, const SinkConfig& config, Rng& rng)
{
    RunReport report;
    SinkSession session(sink_, registry_, config);
    auto issued = session.issue(request, rng);
    report.queries_issued = issued.size();

    for (auto& iq : issued) {
        Address at = iq.first_hop;
        Query q = std::move(iq.query);
        const std::size_t hop_limit = q.head.size();  // far above any real path
        bool delivered = false;
        for (std::size_t hop = 0; hop <= hop_limit; ++hop) {
            ++report.hops;
            if (at == sink_.address) {
                auto c = session.collect(q);
                if (c.status != CollectStatus::Accepted && c.status != CollectStatus::Completed)
                    report.diagnostics.push_back("sink rejected a returning query");
                delivered = true;
                break;
            }
            SensorNode* n = node(at);
            if (!n) {
                report.diagnostics.push_back("no node at " + at.to_string());
                break;
            }
            auto outcome = n->on_receive(q);
            if (!outcome.diagnostic.empty())
                report.diagnostics.push_back(outcome.diagnostic);
            if (!outcome.forward)
                break;
            at = outcome.forward->next_hop;
            q = std::move(outcome.forward->query);
        }
        if (!delivered)
            report.diagnostics.push_back("query lost before returning to the sink");
    }
    if (session.result()) {
        report.result = *session.result();
    } else {
        report.result.kind = request.operation.kind;
        report.result.queries = issued.size();
        report.result.error = "request incomplete: not every query returned";
    }
    return report;
}

} // namespace onionwsn
