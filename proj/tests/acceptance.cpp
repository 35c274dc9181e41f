// Runs every acceptance criterion with the default configuration and prints one
// line per criterion.  Exit status is nonzero if any criterion fails.

#include <iostream>

#include "blockrg/verify.hpp"

int main() {
    using namespace blockrg;
    RunConfig cfg;
    int failed = 0;
    for (const auto& [id, fn] : verify::all_criteria()) {
        try {
            verify::CriterionResult r = fn(cfg);
            std::cout << (r.pass ? "PASS" : "FAIL") << "  [" << r.id << "] " << r.name << ": " << r.summary << " ("
                      << verify::fmt(r.seconds) << " s)" << std::endl;
            failed += r.pass ? 0 : 1;
        } catch (const std::exception& e) {
            std::cout << "FAIL  [" << id << "] raised: " << e.what() << std::endl;
            ++failed;
        }
    }
    std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : "acceptance: all criteria passed")
              << std::endl;
    return failed ? 1 : 0;
}
