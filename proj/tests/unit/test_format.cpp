#include "doctest.h"
#include "format_vectors.hpp"

#include <fstream>
#include <map>
#include <string>

TEST_SUITE("format")
{
    TEST_CASE("published test vectors match the implementation")
    {
        std::ifstream in(ONIONWSN_FORMAT_DOC);
        REQUIRE(in);
        std::map<std::string, std::string> published;
        std::string line;
        bool inside = false;
        while (std::getline(in, line)) {
            if (line == "```vectors") {
                inside = true;
                continue;
            }
            if (inside && line == "```")
                break;
            if (!inside)
                continue;
            const auto eq = line.find(" = ");
            REQUIRE(eq != std::string::npos);
            published[line.substr(0, eq)] = line.substr(eq + 3);
        }
        const auto computed = testsupport::format_vectors();
        CHECK(published.size() == computed.size());
        for (const auto& [name, value] : computed) {
            INFO(name);
            REQUIRE(published.contains(name));
            CHECK(published.at(name) == value);
        }
    }
}
