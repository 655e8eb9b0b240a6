#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ivmiss/bias.hpp"
#include "ivmiss/dgp.hpp"
#include "ivmiss/estimators.hpp"
#include "ivmiss/influence.hpp"

namespace ivmiss {

struct Tolerances {
    double identity_abs = 1e-10;
    double mc_sigma = 3.0;
    double variance_rel = 0.05;
};

struct ExperimentConfig {
    CausalSpec spec;  // MCAR mechanism required
    std::size_t n = 0;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    std::vector<EstimatorId> estimators;
    double rho = 0.0;  // only read by rho_known
    Tolerances tolerances;
};

void validate_config(const ExperimentConfig& config);

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct EstimatorSummary {
    EstimatorId id = EstimatorId::wald_full;
    double target = 0.0;  // psi_full, psi_dagger, or psi_rho as appropriate
    std::size_t reps_ok = 0;
    std::map<std::string, std::size_t> failures;  // error kind -> count
    double mean_estimate = 0.0;
    double bias = 0.0;
    double mcse = 0.0;              // sd of estimates / sqrt(reps_ok)
    double n_times_variance = 0.0;  // n * var(estimates), compare to avar
    double reference_avar = 0.0;    // exact value enumerated from the population
    double mean_if_variance = 0.0;  // average plug-in variance estimate
    // cc_rdagger only: bias against psi_full, to compare with the closed-form
    // complete-case bias.
    std::optional<double> bias_vs_psi_full;
    std::optional<double> closed_form_bias;
    std::vector<CheckResult> checks;
};

struct ExperimentResult {
    std::size_t n = 0;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    double rho = 0.0;
    double psi_full_value = 0.0;
    std::optional<double> psi_dagger_value;
    BoundsReport bounds;
    std::optional<BiasReport> bias_report;  // one-sided populations only
    std::vector<EstimatorSummary> estimators;
    bool checks_run = false;
    std::string checks_note;
    bool all_checks_passed = false;
};

// Replicated experiment with per-replicate seeds derived from the master
// seed. The outcome is identical for any thread count; threads = 0 picks the
// hardware concurrency. Aborts (experiment_aborted) when more than 1% of
// replications fail for some estimator, which signals n too small for the
// design.
ExperimentResult run_experiment(const ExperimentConfig& config, unsigned threads = 0);

// Exact asymptotic variances used as MC references; enumerated from the
// population, never hand-entered.
double avar_cc_dagger(const DiscretePopulation& pop);
double avar_rho_complete_cases(const DiscretePopulation& pop, double rho);

// Named identity batteries evaluated on one population (or generative spec).
// These power both the fuzzing suite and `verify --config`.
std::vector<CheckResult> check_population_identities(const DiscretePopulation& pop);
std::vector<CheckResult> check_onesided_population_identities(const DiscretePopulation& pop);
// Population battery plus the spec-level identities (complier-ATE
// identification, bias linearity in the missing fraction).
std::vector<CheckResult> check_onesided_identities(const CausalSpec& spec);

struct IdentityFailure {
    std::string check;
    std::string detail;
    std::string family;  // "one_sided", "two_sided", "mar_variant"
    CausalSpec spec;     // counterexample certificate payload
};

struct IdentitySuiteReport {
    std::size_t populations = 0;
    std::size_t checks_passed = 0;
    std::size_t checks_failed = 0;
    std::vector<IdentityFailure> failures;  // capped at 10

    bool passed() const { return checks_failed == 0; }
};

// Fuzzes `count` one-sided and `count` two-sided MCAR models (plus a MAR
// variant of each one-sided model for the conditional-independence check)
// and asserts every exact identity.
IdentitySuiteReport identity_suite(std::size_t count, std::uint64_t seed);

}  // namespace ivmiss
