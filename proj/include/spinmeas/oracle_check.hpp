#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spinmeas {

struct OracleCheckOptions {
    int algebra_cases = 1000;
    double max_amplitude = 3.0;  // |gamma| bound for random configurations
    std::uint64_t seed = 12345;
    // Multiplies the couplings seen by the closed-form matrix elements only.
    // Anything but +1 is a deliberate fault, used to check that the suite bites.
    double coupling_sign = 1.0;
};

struct SuiteResult {
    std::string name;
    bool passed = false;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    long cases = 0;
    std::string detail;
};

struct OracleReport {
    std::vector<SuiteResult> suites;
    bool passed() const;
};

// Coherent-state matrix elements vs truncated Fock sums (relative 1e-8).
SuiteResult check_coherent_algebra(const OracleCheckOptions& options);

// N = 1, M = 6 variational trajectory vs exact propagation, |delta a_z| < 0.02 up to t = 20.
SuiteResult check_propagator(const OracleCheckOptions& options);

// S_O = S_E and S_mutual = 2 S_O on every sample of a short trajectory (1e-8).
SuiteResult check_entropy_identities(const OracleCheckOptions& options);

// Parity-definite exact starts keep a_z = 0; the mixed start does not.
SuiteResult check_parity(const OracleCheckOptions& options);

OracleReport oracle_check(const OracleCheckOptions& options = {});

std::string format_report(const OracleReport& report);

}  // namespace spinmeas
