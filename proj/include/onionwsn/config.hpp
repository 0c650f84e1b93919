#ifndef ONIONWSN_CONFIG_HPP
#define ONIONWSN_CONFIG_HPP

// Operator configuration: `key = value` files whose keys double as
// command-line overrides.

#include "onionwsn/adversary.hpp"

#include <iosfwd>

namespace onionwsn::config {

struct CliConfig {
    netsim::ExperimentConfig experiment;
    std::string csv = "results.csv";
    std::string summary = "summary.json";
    std::set<Address> owned;
    adversary::Policy policy = adversary::Policy::AlwaysDeduce;
};

struct KeyInfo {
    std::string name;
    std::string help;
};

// Every accepted key, in documentation order.
const std::vector<KeyInfo>& keys();

// Throws ConfigError on an unknown key or a malformed value.
void apply_setting(CliConfig& cfg, std::string_view key, std::string_view value);

// Lines are `key = value`; '#' starts a comment. Throws ConfigError with
// the line number.
CliConfig parse_config(std::istream& in, const std::string& source = "<config>");
CliConfig load_config(const std::string& path);

// Comma-separated dotted-quad addresses.
std::set<Address> parse_address_list(std::string_view text);

} // namespace onionwsn::config

#endif // ONIONWSN_CONFIG_HPP
