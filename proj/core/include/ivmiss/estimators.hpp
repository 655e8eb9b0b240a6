#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "ivmiss/influence.hpp"
#include "ivmiss/population.hpp"

namespace ivmiss {

enum class EstimatorId { wald_full, cc_r, cc_rdagger, efficient, rho_known };

const char* estimator_id_name(EstimatorId id);
std::optional<EstimatorId> estimator_id_from_name(std::string_view name);

enum class CcIndicator { r, r_dagger };

// i.i.d. observed records (R, RZ, A, Y).
struct Sample {
    std::vector<ObservedObservation> records;

    std::size_t n() const { return records.size(); }
};

struct DerivedRecord {
    int r_dagger = 0;
    ObservedObservation filled;  // z = 1 filled in when a = 1 and z was missing
};

// R+ = R(1-A) + A; whenever A = 1 the instrument is known to be 1.
DerivedRecord derive_r_dagger(const ObservedObservation& record);

// Saturated cell-mean fits of E(R+|A,Y) and E(Z|A,Y,R+=1) over the observed
// (a, y) cells. Cells with a = 1 are structural: propensity and instrument
// regression are both exactly 1.
struct NuisanceFit {
    std::vector<double> y_levels;  // sorted distinct observed outcomes
    std::array<std::vector<double>, 2> propensity;    // [a][level]
    std::array<std::vector<double>, 2> z_regression;  // [a][level]
    std::array<std::vector<long>, 2> cell_counts;     // [a][level]

    int level_index(double y) const;
};

struct EstimateResult {
    EstimatorId estimator_id = EstimatorId::wald_full;
    double estimate = 0.0;
    // Plug-in variance of the matching influence function, per unit: an
    // estimate of the asymptotic variance of sqrt(n) (psi_hat - psi).
    double if_variance_estimate = 0.0;
    std::size_t n_used = 0;
};

// Usual instrumental variable (Wald) estimator on fully observed data,
// evaluated as a ratio of instrument-centered cross sums.
EstimateResult wald_full(const Sample& sample);

// Wald estimator restricted to records with the chosen indicator equal to 1
// (instruments filled as z = 1 for a = 1 records under the R+ variant).
EstimateResult cc_estimator(const Sample& sample, CcIndicator indicator);

NuisanceFit fit_nuisances(const Sample& sample);

// One-step efficient estimator: replaces Z by the augmented pseudo-instrument
//   Zhat = (R+/ehat(A,Y)) {Ztilde - mhat(A,Y)} + mhat(A,Y)
// and forms the Wald ratio in Zhat. Reduces exactly to wald_full when no
// instrument is missing.
EstimateResult efficient_estimator(const Sample& sample);

// Known-compliance estimator {Pn(Y|Z=1)-Pn(Y|Z=0)}/{Pn(A|Z=1)-rho}, computed
// through the estimating equation Pn[(Z-pi)(Y - psi {ZA+(1-Z)rho})] = 0 so
// that rho = 0 coincides bitwise with wald_full on one-sided data. Requires
// fully observed instruments.
EstimateResult rho_estimator(const Sample& sample, double rho);

// Plug-in influence-function variance for the given estimator on this sample.
double if_variance(const Sample& sample, EstimatorId id, double rho = 0.0);

}  // namespace ivmiss
