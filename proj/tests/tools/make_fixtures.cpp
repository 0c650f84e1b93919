// Writes the canonical adversary scenarios as trace files plus their owned
// sets, for the CLI golden tests.

#include "onionwsn/adversary.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace onionwsn;

int main(int argc, char** argv)
{
    if (argc != 2) {
        std::cerr << "usage: make_fixtures <dir>\n";
        return 2;
    }
    const std::filesystem::path dir = argv[1];
    std::filesystem::create_directories(dir);
    for (const auto& sc : adversary::canonical_scenarios(1)) {
        std::ofstream trace(dir / ("scenario_" + sc.name + ".jsonl"));
        netsim::write_trace(trace, sc.trace);
        std::ofstream owned(dir / ("scenario_" + sc.name + ".owned"));
        for (std::size_t i = 0; i < sc.owned.size(); ++i)
            owned << (i ? "," : "") << sc.owned[i].to_string();
        owned << '\n';
    }
    return 0;
}
