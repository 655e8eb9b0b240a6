#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ivmiss/estimators.hpp"
#include "ivmiss/population.hpp"

namespace ivmiss {

// Instrument-observation mechanism. MCAR is the structural default; the
// outcome-dependent table exists only to exercise the conditional
// independence diagnostics and is excluded from all MCAR-only identities.
struct MissingMechanism {
    bool mcar = true;
    double rate = 1.0;                              // MCAR: P(R=1)
    std::array<std::vector<double>, 2> rate_table;  // MAR: P(R=1 | A=a, Y=y_k)

    double rate_for(int a, std::size_t k) const {
        return mcar ? rate : rate_table[static_cast<std::size_t>(a)][k];
    }
};

// Generative model over compliance types and potential outcomes. Monotonicity
// is structural: there is no defier type. The exclusion restriction is built
// in through outcome laws indexed by received treatment only, and the
// instrument is drawn independently of type and potential outcomes.
struct CausalSpec {
    double pz1 = 0.5;
    double p_complier = 0.0;
    double p_never_taker = 0.0;
    double p_always_taker = 0.0;
    OutcomeSupport support;
    // Outcome laws per (type, received treatment); only realizable arms are
    // present: never-takers are never treated, always-takers always are.
    std::vector<double> complier_y1;
    std::vector<double> complier_y0;
    std::vector<double> never_taker_y0;
    std::vector<double> always_taker_y1;
    MissingMechanism missing;
    std::uint64_t seed = 0;  // default seed for sampling-based front ends
};

void validate_spec(const CausalSpec& spec);  // throws invalid_input

// Desk-scale canonical instances used across tests and shipped configs.
// p1: pz1=0.5, 60% compliers (Y1~B(0.8), Y0~B(0.3)), 40% never-takers
//     (Y0~B(0.5)), MCAR r=0.7.
// p2: p1 with never-taker mean 0.3 (kills the outcome-contrast bias term).
// p3: two-sided diagnostic: 20% always-takers (Y1~B(0.6)), never-takers 20%.
CausalSpec canonical_p1();
CausalSpec canonical_p2();
CausalSpec canonical_p3();
CausalSpec with_missing_rate(CausalSpec spec, double r);

// Exact marginalization of the spec to the observed-data joint; this is the
// brute-force oracle every closed-form quantity is checked against.
DiscretePopulation to_population(const CausalSpec& spec);

// Exact joint over (R, Z, A, Y); supports both MCAR and MAR mechanisms.
struct ExtendedJoint {
    OutcomeSupport support;
    std::vector<double> q;  // flattened [r][z][a][k], size 8*K

    std::size_t n_levels() const { return support.size(); }
    double cell(int r, int z, int a, std::size_t k) const {
        return q[((static_cast<std::size_t>(r) * 2 + static_cast<std::size_t>(z)) * 2 +
                  static_cast<std::size_t>(a)) * n_levels() + k];
    }
    double& cell(int r, int z, int a, std::size_t k) {
        return q[((static_cast<std::size_t>(r) * 2 + static_cast<std::size_t>(z)) * 2 +
                  static_cast<std::size_t>(a)) * n_levels() + k];
    }
};

ExtendedJoint to_extended_joint(const CausalSpec& spec);

// E(Y1 - Y0 | complier), straight from the outcome laws.
double complier_ate(const CausalSpec& spec);

// One drawn unit before masking; z is always known here.
struct SampledUnit {
    int z = 0;
    int a = 0;
    double y = 0.0;
    int r = 1;
};

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// Deterministic given (spec, n, seed); draw order per unit is fixed
// (type, instrument, outcome, missingness).
std::vector<SampledUnit> sample_units(const CausalSpec& spec, std::size_t n, std::uint64_t seed);

Sample mask(const std::vector<SampledUnit>& units);

Sample sample(const CausalSpec& spec, std::size_t n, std::uint64_t seed);

// Cell relative frequencies over (z, a, y); requires fully observed z.
struct FrequencyTable {
    OutcomeSupport support;
    std::vector<double> freq;  // flattened [z][a][k]

    double cell(int z, int a, std::size_t k) const {
        return freq[(static_cast<std::size_t>(z) * 2 + static_cast<std::size_t>(a)) *
                        support.size() + k];
    }
};

FrequencyTable empirical_joint(const Sample& sample, const OutcomeSupport& support);

// Random generative models for the identity-fuzzing suites. Type masses and
// outcome laws come from flat simplex draws; outcome-law cells are floored at
// 0.02 and r ranges over [0.3, 0.95]. Type masses and the instrument
// probability are kept away from their boundaries (complier mass >= 0.1,
// pz1 in [0.2, 0.8], supports inside [-0.5, 1]) so the absolute identity
// gates sit far above double roundoff.
class Fuzzer {
  public:
    explicit Fuzzer(std::uint64_t seed);

    CausalSpec one_sided_spec();
    CausalSpec two_sided_spec();
    // Replaces the mechanism by an outcome-dependent table (MAR, not MCAR).
    CausalSpec mar_variant(CausalSpec spec);

    double uniform();  // [0, 1)
    double uniform(double lo, double hi);

  private:
    std::vector<double> simplex(std::size_t k, double floor_mass);
    OutcomeSupport random_support();

    std::mt19937_64 engine_;
};

}  // namespace ivmiss
