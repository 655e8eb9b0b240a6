#pragma once

#include <optional>

#include "ivmiss/dgp.hpp"
#include "ivmiss/population.hpp"

namespace ivmiss {

// Closed-form bias of the R+-based complete-case estimand on a one-sided
// MCAR population:
//   psi_dagger - psi_full = alpha beta P(R+=0|Z=1) / E(A|Z=1, R+=1)
// with alpha = E(A|Z=1,R+=1) - E(A|Z=1,R+=0) and
// beta = E(Y|Z=1,A=1) - E(Y|Z=1,A=0) - psi_full.
struct BiasReport {
    std::optional<double> alpha;  // absent when P(R+=0|Z=1) = 0
    double beta = 0.0;
    double p_rdag0_given_z1 = 0.0;
    double e_a_given_z1_rdag1 = 0.0;
    double bias = 0.0;  // product formula; defined as 0 when alpha is absent
    double psi_dagger_minus_psi_full = 0.0;
};

struct AlphaBeta {
    std::optional<double> alpha;
    double beta = 0.0;
};

// Under one-sidedness R+=0 forces A=0, so E(A|Z=1,R+=0) is a structural zero
// and alpha reduces to E(A|Z=1,R+=1) whenever it is defined.
AlphaBeta alpha_beta(const DiscretePopulation& pop);

// Product formula and the direct difference psi_dagger - psi_full, computed
// independently; disagreement beyond 1e-10 is a hard error.
BiasReport cc_dagger_bias(const DiscretePopulation& pop);

struct McarViolation {
    std::optional<double> p1;  // P(R+=1 | A=1), mechanically 1
    std::optional<double> p0;  // P(R+=1 | A=0), structurally r under MCAR
    bool violated = false;     // true iff r < 1 and both treatment arms populated
};

McarViolation mcar_violation(const DiscretePopulation& pop);

// Remark-2 retention on a one-sided MCAR population: R+ independent of (Z,Y)
// given A, verified cellwise to 1e-12 on the enumerated joint. Vacuous cells
// (zero mass on either side of the conditioning) pass.
bool mar_retention_check(const DiscretePopulation& pop);

// The analogous statement for general (possibly MAR) mechanisms: R+
// independent of Z given (A, Y), cellwise on an enumerated (R,Z,A,Y) joint.
bool rdagger_mar_check(const ExtendedJoint& joint);

struct NoBiasConditions {
    bool alpha_zero = false;
    bool beta_zero = false;
    std::optional<double> alpha;
    double beta = 0.0;
};

// Flags the two exact no-bias scenarios at tolerance 1e-12; either flag
// implies cc_dagger_bias returns 0 to 1e-10.
NoBiasConditions no_bias_conditions(const DiscretePopulation& pop);

}  // namespace ivmiss
