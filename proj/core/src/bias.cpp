#include "ivmiss/bias.hpp"

#include <cmath>

namespace ivmiss {

namespace {

struct Z1Masses {
    double total = 0.0;        // P(Z=1)
    double a1 = 0.0;           // P(Z=1, A=1)
    double rdag1 = 0.0;        // P(Z=1, R+=1)
    double rdag0 = 0.0;        // P(Z=1, R+=0), multiplicative (exact 0 at r=1)
};

Z1Masses z1_masses(const DiscretePopulation& pop) {
    Z1Masses m;
    double a0 = 0.0;
    for (std::size_t k = 0; k < pop.n_levels(); ++k) {
        a0 += pop.cell(1, 0, k);
        m.a1 += pop.cell(1, 1, k);
    }
    m.total = a0 + m.a1;
    m.rdag1 = a0 * pop.r + m.a1;
    m.rdag0 = a0 * (1.0 - pop.r);
    return m;
}

}  // namespace

AlphaBeta alpha_beta(const DiscretePopulation& pop) {
    if (!pop.one_sided()) fail(ErrorKind::not_one_sided, "alpha_beta requires one-sided noncompliance");
    MomentTable m = moments(pop);
    AlphaBeta out;
    double psi = psi_full(pop);
    out.beta = require_defined(m.e_y_given_za[3], "E(Y|Z=1,A=1)") -
               require_defined(m.e_y_given_za[2], "E(Y|Z=1,A=0)") - psi;

    Z1Masses masses = z1_masses(pop);
    if (masses.rdag1 > 0.0 && masses.rdag0 > 0.0) {
        // E(A|Z=1,R+=0) is a structural zero: R+=0 forces A=0.
        double e_a_rdag0 = require_defined(m.e_a_given_z1_rdag[0], "E(A|Z=1,R+=0)");
        out.alpha = require_defined(m.e_a_given_z1_rdag[1], "E(A|Z=1,R+=1)") - e_a_rdag0;
    }
    return out;
}

BiasReport cc_dagger_bias(const DiscretePopulation& pop) {
    AlphaBeta ab = alpha_beta(pop);
    double psif = psi_full(pop);
    double psid = psi_dagger(pop);

    Z1Masses masses = z1_masses(pop);
    if (!(masses.total > 0.0) || !(masses.rdag1 > 0.0))
        fail(ErrorKind::undefined_conditional, "cc_dagger_bias: P(Z=1, R+=1) = 0");

    BiasReport report;
    report.alpha = ab.alpha;
    report.beta = ab.beta;
    report.p_rdag0_given_z1 = masses.rdag0 / masses.total;
    report.e_a_given_z1_rdag1 = masses.a1 / masses.rdag1;
    report.psi_dagger_minus_psi_full = psid - psif;

    if (!ab.alpha.has_value()) {
        // No missingness among the encouraged: the P(R+=0|Z=1) factor is an
        // exact zero, so the bias is defined as zero on this boundary.
        report.bias = 0.0;
    } else {
        report.bias = (*ab.alpha) * ab.beta * report.p_rdag0_given_z1 / report.e_a_given_z1_rdag1;
        // Structural simplification: alpha equals E(A|Z=1,R+=1), so the
        // product must collapse to beta * P(R+=0|Z=1).
        double simplified = ab.beta * report.p_rdag0_given_z1;
        if (std::fabs(report.bias - simplified) > kStructuralTol)
            fail(ErrorKind::consistency_failure, "bias formula does not collapse to beta*P(R+=0|Z=1)");
    }
    if (std::fabs(report.bias - report.psi_dagger_minus_psi_full) > kIdentityTol)
        fail(ErrorKind::consistency_failure, "bias formula and psi_dagger - psi_full disagree");
    return report;
}

McarViolation mcar_violation(const DiscretePopulation& pop) {
    double mass_a1 = pop.p_treated();
    double mass_a0 = 0.0;
    for (int z = 0; z < 2; ++z) {
        for (std::size_t k = 0; k < pop.n_levels(); ++k) mass_a0 += pop.cell(z, 0, k);
    }
    McarViolation out;
    if (mass_a1 > 0.0) out.p1 = 1.0;      // R+ = 1 is forced by A = 1
    if (mass_a0 > 0.0) out.p0 = pop.r;    // R+ = R, independent of A under MCAR
    out.violated = out.p1.has_value() && out.p0.has_value() && pop.r < 1.0;
    return out;
}

namespace {

// Compares two conditional laws cellwise; either side with zero total mass
// makes the comparison vacuous.
bool laws_match(const std::vector<double>& lhs, double lhs_total,
                const std::vector<double>& rhs, double rhs_total) {
    if (!(lhs_total > 0.0) || !(rhs_total > 0.0)) return true;
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        if (std::fabs(lhs[i] / lhs_total - rhs[i] / rhs_total) > kStructuralTol) return false;
    }
    return true;
}

}  // namespace

bool mar_retention_check(const DiscretePopulation& pop) {
    if (!pop.one_sided())
        fail(ErrorKind::not_one_sided, "mar_retention_check requires one-sided noncompliance");
    // Given A=1 the indicator is constant, so only the A=0 stratum binds:
    // (Z,Y) | A=0, R+=1 must equal (Z,Y) | A=0, R+=0 cellwise.
    const std::size_t K = pop.n_levels();
    std::vector<double> law_rdag1(2 * K, 0.0), law_rdag0(2 * K, 0.0);
    double total1 = 0.0, total0 = 0.0;
    for (int z = 0; z < 2; ++z) {
        for (std::size_t k = 0; k < K; ++k) {
            double mass = pop.cell(z, 0, k);
            law_rdag1[static_cast<std::size_t>(z) * K + k] = mass * pop.r;
            law_rdag0[static_cast<std::size_t>(z) * K + k] = mass * (1.0 - pop.r);
            total1 += mass * pop.r;
            total0 += mass * (1.0 - pop.r);
        }
    }
    return laws_match(law_rdag1, total1, law_rdag0, total0);
}

bool rdagger_mar_check(const ExtendedJoint& joint) {
    const std::size_t K = joint.n_levels();
    for (int a = 0; a < 2; ++a) {
        for (std::size_t k = 0; k < K; ++k) {
            // R+ = 1 iff a = 1 or r = 1; collect P(Z=z, R+=j | A=a, Y=y_k).
            std::vector<double> rdag1(2, 0.0), rdag0(2, 0.0);
            for (int z = 0; z < 2; ++z) {
                if (a == 1) {
                    rdag1[static_cast<std::size_t>(z)] =
                        joint.cell(0, z, 1, k) + joint.cell(1, z, 1, k);
                } else {
                    rdag1[static_cast<std::size_t>(z)] = joint.cell(1, z, 0, k);
                    rdag0[static_cast<std::size_t>(z)] = joint.cell(0, z, 0, k);
                }
            }
            double total1 = rdag1[0] + rdag1[1];
            double total0 = rdag0[0] + rdag0[1];
            if (!laws_match(rdag1, total1, rdag0, total0)) return false;
        }
    }
    return true;
}

NoBiasConditions no_bias_conditions(const DiscretePopulation& pop) {
    AlphaBeta ab = alpha_beta(pop);
    NoBiasConditions out;
    out.alpha = ab.alpha;
    out.beta = ab.beta;
    out.alpha_zero = ab.alpha.has_value() && std::fabs(*ab.alpha) <= kStructuralTol;
    out.beta_zero = std::fabs(ab.beta) <= kStructuralTol;
    return out;
}

}  // namespace ivmiss
