#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ivmiss/errors.hpp"

namespace ivmiss {

// Shared tolerances. Structural zeros are checked at 1e-12, algebraic
// identities that accumulate across table cells at 1e-10.
inline constexpr double kNormalizationTol = 1e-12;
inline constexpr double kStructuralTol = 1e-12;
inline constexpr double kIdentityTol = 1e-10;
inline constexpr double kInstrumentationTol = 1e-12;

// Ordered finite support for the outcome Y. K = 1 is allowed (degenerate
// outcome); anything nondegenerate needs K >= 2.
struct OutcomeSupport {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    // Exact-match lookup; returns -1 if y is not a support point.
    int index_of(double y) const;
    bool strictly_increasing() const;
};

// Exact joint law of the observed full data (Z, A, Y) on a finite support,
// plus the MCAR observation rate r = P(R=1). R is Bernoulli(r) independent
// of (Z, A, Y) by construction; the updated indicator R+ = R(1-A) + A is
// always derived on the fly, never stored.
struct DiscretePopulation {
    OutcomeSupport support;
    std::vector<double> p;  // flattened [z][a][k], size 4*K
    double r = 1.0;

    std::size_t n_levels() const { return support.size(); }
    double cell(int z, int a, std::size_t k) const {
        return p[(static_cast<std::size_t>(z) * 2 + static_cast<std::size_t>(a)) * n_levels() + k];
    }
    double& cell(int z, int a, std::size_t k) {
        return p[(static_cast<std::size_t>(z) * 2 + static_cast<std::size_t>(a)) * n_levels() + k];
    }

    double pz1() const;
    double p_treated() const;  // P(A=1)
    // True iff p(0,1,y) == 0 exactly for every y. Derived, never assumed.
    bool one_sided() const;
};

// Checked constructor used by loaders and generators: enforces shape,
// nonnegative entries, r in (0,1], and a strictly increasing support.
// Normalization and the model assumptions are reported by validate(), not
// enforced here, so that defective tables can still be diagnosed.
DiscretePopulation make_population(OutcomeSupport support, std::vector<double> p, double r);

struct ValidationCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    bool one_sided = false;

    bool all_passed() const;
    const ValidationCheck* find(const std::string& name) const;
};

// Diagnostic only; never throws, never mutates. Checks: entries finite and
// nonnegative, normalization, r in range, support ordering, positivity
// 0 < P(Z=1) < 1, instrumentation E(A|Z=1) != E(A|Z=0), and records the
// one-sided predicate.
ValidationReport validate(const DiscretePopulation& pop);

// Every conditional moment that can condition on a probability-zero event
// is optional; absent means "undefined", not NaN.
struct MomentTable {
    double e_z = 0.0;
    double e_a = 0.0;
    double e_y = 0.0;
    std::array<std::optional<double>, 2> e_a_given_z;  // [z]
    std::array<std::optional<double>, 2> e_y_given_z;  // [z]
    double cov_za = 0.0;                               // E(ZA) - E(Z)E(A)
    std::array<std::optional<double>, 4> e_y_given_za;  // [z*2 + a]
    std::array<std::optional<double>, 2> p_rdag1_given_z;   // [z]
    std::array<std::optional<double>, 2> e_a_given_z1_rdag; // [rdag]
    std::optional<double> e_y_given_z1_rdag1;
};

MomentTable moments(const DiscretePopulation& pop);

// Unwraps an optional conditional moment, throwing undefined_conditional
// with the given description when the conditioning event had mass zero.
double require_defined(const std::optional<double>& value, const std::string& what);

// The four estimands. All are pure functions of the population table.
//
//   psi_full    {E(Y|Z=1)-E(Y|Z=0)} / {E(A|Z=1)-E(A|Z=0)}
//   psi_cc      same ratio conditioned on R=1 (equals psi_full under MCAR)
//   psi_dagger  same ratio conditioned on R+=1, R+ = R(1-A)+A (one-sided only)
//   psi_rho     {E(Y|Z=1)-E(Y|Z=0)} / {E(A|Z=1) - rho} for a known rho
double psi_full(const DiscretePopulation& pop);
double psi_cc(const DiscretePopulation& pop);
double psi_dagger(const DiscretePopulation& pop);
double psi_rho(const DiscretePopulation& pop, double rho);

}  // namespace ivmiss
