#pragma once

#include <optional>
#include <vector>

#include "ivmiss/population.hpp"

namespace ivmiss {

// One fully observed unit O* = (Z, A, Y).
struct FullObservation {
    int z = 0;
    int a = 0;
    double y = 0.0;
};

// One observed unit O = (RZ, R, A, Y); z is present iff r = 1.
struct ObservedObservation {
    int r = 1;
    std::optional<int> z;
    int a = 0;
    double y = 0.0;
};

struct CondCell {
    double mean = 0.0;  // E(D | A=a, Y=y)
    double var = 0.0;   // Var(D | A=a, Y=y)
    double prob = 0.0;  // P(A=a, Y=y)
};

// Per-(a,y) conditional law of the full-data influence function D, plus the
// aggregates every bound formula is built from. Zero-probability cells are
// absent and excluded from all sums.
struct CondTables {
    std::vector<std::optional<CondCell>> treated;    // a = 1, indexed by y level
    std::vector<std::optional<CondCell>> untreated;  // a = 0
    double var_of_cond_mean = 0.0;           // Var[E(D|A,Y)]
    double mean_of_cond_var = 0.0;           // E[Var(D|A,Y)]
    double mean_of_cond_var_treated = 0.0;   // E[1(A=1) Var(D|A,Y)]
    double mean_of_cond_var_untreated = 0.0; // E[1(A=0) Var(D|A,Y)]

    const std::optional<CondCell>& at(int a, std::size_t k) const {
        return a == 1 ? treated[k] : untreated[k];
    }
};

struct BoundsReport {
    double var_d = 0.0;
    double var_d_star = 0.0;
    std::optional<double> var_d_os;  // defined only for one-sided populations
    double gap = 0.0;
    double rel_eff_mcar_vs_full = 1.0;
    double rel_eff_cc_vs_full = 1.0;  // exactly 1/r
    bool one_sided = false;
    double r = 1.0;
};

struct GapResult {
    double value = 0.0;
    bool no_treated = false;  // P(A=1) = 0: formula returns 0 with this flag
};

// Full-data efficient influence function
//   D(O) = {Z - E(Z)} {(Y - psi A) - E(Y - psi A)} / Cov(Z, A).
double d_full(const DiscretePopulation& pop, const FullObservation& obs);

// Var{D}, computed by cell enumeration and cross-checked against the
// per-arm closed form sum_z Var(Y - psi A | Z=z)/P(Z=z) over the squared
// treatment contrast. Disagreement beyond 1e-10 is a hard error.
double var_d(const DiscretePopulation& pop);

CondTables cond_tables(const DiscretePopulation& pop);

// Observed-data efficient influence function under MCAR
//   D*(O) = (R/r) [D - E(D|A,Y)] + E(D|A,Y).
double d_star(const DiscretePopulation& pop, const ObservedObservation& obs);

// Var{D*} via direct enumeration over the (R,Z,A,Y) joint, cross-checked
// against Var{D}/r - odds(R=0) Var[E(D|A,Y)] and against
// Var{D} + odds(R=0) E[Var(D|A,Y)].
double var_d_star(const DiscretePopulation& pop);

// Influence function when one-sided noncompliance is known:
//   D_os(O) = (R+/E(R+|A)) [D - E(D|A,Y)] + E(D|A,Y),  R+ = R(1-A)+A.
double d_os(const DiscretePopulation& pop, const ObservedObservation& obs);

// Var{D_os} = Var{D} + odds(R=0) E[(1-A) Var(D|A,Y)], cross-checked against
// direct enumeration.
double var_d_os(const DiscretePopulation& pop);

// Bound difference odds(R=0) E[Var(D|A,Y) | A=1] P(A=1). Evaluates to an
// exact zero on strictly one-sided populations (Z is degenerate given A=1);
// strictly positive values only arise diagnostically on two-sided tables.
GapResult bound_gap(const DiscretePopulation& pop);

BoundsReport relative_efficiencies(const DiscretePopulation& pop);

}  // namespace ivmiss
