#include "ivmiss/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ivmiss {

namespace {

constexpr double kPropensityFloor = 1e-6;
constexpr std::size_t kMaxOutcomeLevels = 64;

double mean_of(const std::vector<double>& xs) {
    double total = 0.0;
    for (double x : xs) total += x;
    return total / static_cast<double>(xs.size());
}

// sum_i u_i (x_i - center); the one arithmetic path shared by every Wald-type
// ratio in this module, so algebraic reductions between estimators hold
// bitwise and not just to rounding.
double centered_cross(const std::vector<double>& u, const std::vector<double>& x, double center) {
    double total = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) total += u[i] * (x[i] - center);
    return total;
}

double sample_variance(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) {
        double d = x - m;
        s += d * d;
    }
    return s / static_cast<double>(xs.size() - 1);
}

bool is_constant(const std::vector<double>& xs) {
    for (double x : xs) {
        if (x != xs.front()) return false;
    }
    return true;
}

struct CompleteData {
    std::vector<double> z, a, y;

    std::size_t n() const { return z.size(); }
};

struct WaldFit {
    double estimate = 0.0;
    double num = 0.0;
    double den = 0.0;
    double ybar = 0.0;
    double abar = 0.0;
};

WaldFit fit_wald(const CompleteData& data) {
    if (data.n() == 0) fail(ErrorKind::no_complete_cases, "no usable records");
    if (is_constant(data.z)) fail(ErrorKind::degenerate_sample, "instrument is constant");
    WaldFit fit;
    fit.ybar = mean_of(data.y);
    fit.abar = mean_of(data.a);
    fit.num = centered_cross(data.z, data.y, fit.ybar);
    fit.den = centered_cross(data.z, data.a, fit.abar);
    if (fit.den == 0.0) fail(ErrorKind::degenerate_sample, "instrument-treatment cross sum is zero");
    fit.estimate = fit.num / fit.den;
    if (!std::isfinite(fit.estimate)) fail(ErrorKind::degenerate_sample, "non-finite estimate");
    return fit;
}

// Per-record plug-in values of the full-data influence function D under the
// fitted moments.
std::vector<double> wald_if_values(const CompleteData& data, const WaldFit& fit) {
    const double n = static_cast<double>(data.n());
    const double zbar = mean_of(data.z);
    const double cov = fit.den / n;
    std::vector<double> v(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) v[i] = data.y[i] - fit.estimate * data.a[i];
    const double vbar = mean_of(v);
    std::vector<double> values(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        values[i] = (data.z[i] - zbar) * (v[i] - vbar) / cov;
    }
    return values;
}

CompleteData require_complete(const Sample& sample, const char* who) {
    CompleteData data;
    data.z.reserve(sample.n());
    data.a.reserve(sample.n());
    data.y.reserve(sample.n());
    for (std::size_t i = 0; i < sample.records.size(); ++i) {
        const auto& rec = sample.records[i];
        if (rec.r != 1 || !rec.z.has_value()) {
            std::ostringstream msg;
            msg << who << " requires fully observed instruments (record " << i << " has r=0)";
            fail(ErrorKind::invalid_input, msg.str());
        }
        data.z.push_back(static_cast<double>(*rec.z));
        data.a.push_back(static_cast<double>(rec.a));
        data.y.push_back(rec.y);
    }
    return data;
}

}  // namespace

const char* estimator_id_name(EstimatorId id) {
    switch (id) {
        case EstimatorId::wald_full: return "wald_full";
        case EstimatorId::cc_r: return "cc_r";
        case EstimatorId::cc_rdagger: return "cc_rdagger";
        case EstimatorId::efficient: return "efficient";
        case EstimatorId::rho_known: return "rho_known";
    }
    return "unknown";
}

std::optional<EstimatorId> estimator_id_from_name(std::string_view name) {
    if (name == "wald_full") return EstimatorId::wald_full;
    if (name == "cc_r") return EstimatorId::cc_r;
    if (name == "cc_rdagger") return EstimatorId::cc_rdagger;
    if (name == "efficient") return EstimatorId::efficient;
    if (name == "rho_known") return EstimatorId::rho_known;
    return std::nullopt;
}

DerivedRecord derive_r_dagger(const ObservedObservation& record) {
    DerivedRecord out;
    out.filled = record;
    out.r_dagger = record.a == 1 ? 1 : record.r;
    if (record.a == 1 && !record.z.has_value()) out.filled.z = 1;
    return out;
}

int NuisanceFit::level_index(double y) const {
    auto it = std::lower_bound(y_levels.begin(), y_levels.end(), y);
    if (it == y_levels.end() || *it != y) return -1;
    return static_cast<int>(it - y_levels.begin());
}

EstimateResult wald_full(const Sample& sample) {
    CompleteData data = require_complete(sample, "wald_full");
    WaldFit fit = fit_wald(data);
    return {EstimatorId::wald_full, fit.estimate, sample_variance(wald_if_values(data, fit)),
            sample.n()};
}

EstimateResult cc_estimator(const Sample& sample, CcIndicator indicator) {
    CompleteData data;
    std::vector<char> included(sample.n(), 0);
    for (std::size_t i = 0; i < sample.records.size(); ++i) {
        const auto& rec = sample.records[i];
        if (indicator == CcIndicator::r) {
            if (rec.r != 1) continue;
            data.z.push_back(static_cast<double>(*rec.z));
        } else {
            DerivedRecord derived = derive_r_dagger(rec);
            if (derived.r_dagger != 1) continue;
            data.z.push_back(static_cast<double>(*derived.filled.z));
        }
        data.a.push_back(static_cast<double>(rec.a));
        data.y.push_back(rec.y);
        included[i] = 1;
    }
    if (data.n() == 0) fail(ErrorKind::no_complete_cases, "no records with indicator = 1");
    WaldFit fit = fit_wald(data);

    // Asymptotic expansion of the complete-case estimator: (I/E(I)) D with the
    // influence values of the restricted fit, zero for excluded records.
    std::vector<double> sub_values = wald_if_values(data, fit);
    const double rate = static_cast<double>(data.n()) / static_cast<double>(sample.n());
    std::vector<double> values(sample.n(), 0.0);
    std::size_t j = 0;
    for (std::size_t i = 0; i < sample.n(); ++i) {
        if (included[i]) values[i] = sub_values[j++] / rate;
    }
    EstimatorId id = indicator == CcIndicator::r ? EstimatorId::cc_r : EstimatorId::cc_rdagger;
    return {id, fit.estimate, sample_variance(values), data.n()};
}

NuisanceFit fit_nuisances(const Sample& sample) {
    if (sample.n() == 0) fail(ErrorKind::invalid_input, "empty sample");
    NuisanceFit fit;
    fit.y_levels.reserve(sample.n());
    for (const auto& rec : sample.records) fit.y_levels.push_back(rec.y);
    std::sort(fit.y_levels.begin(), fit.y_levels.end());
    fit.y_levels.erase(std::unique(fit.y_levels.begin(), fit.y_levels.end()), fit.y_levels.end());
    if (fit.y_levels.size() > kMaxOutcomeLevels)
        fail(ErrorKind::invalid_input, "outcome has too many distinct values for saturated fits");

    const std::size_t K = fit.y_levels.size();
    std::array<std::vector<double>, 2> rdag_sum = {std::vector<double>(K, 0.0),
                                                   std::vector<double>(K, 0.0)};
    std::array<std::vector<double>, 2> z_sum = {std::vector<double>(K, 0.0),
                                                std::vector<double>(K, 0.0)};
    std::array<std::vector<long>, 2> rdag1 = {std::vector<long>(K, 0), std::vector<long>(K, 0)};
    for (int a = 0; a < 2; ++a) {
        fit.propensity[a].assign(K, std::numeric_limits<double>::quiet_NaN());
        fit.z_regression[a].assign(K, std::numeric_limits<double>::quiet_NaN());
        fit.cell_counts[a].assign(K, 0);
    }

    for (const auto& rec : sample.records) {
        DerivedRecord derived = derive_r_dagger(rec);
        int k = fit.level_index(rec.y);
        fit.cell_counts[rec.a][k] += 1;
        rdag_sum[rec.a][k] += static_cast<double>(derived.r_dagger);
        if (derived.r_dagger == 1) {
            rdag1[rec.a][k] += 1;
            z_sum[rec.a][k] += static_cast<double>(*derived.filled.z);
        }
    }

    for (std::size_t k = 0; k < K; ++k) {
        if (fit.cell_counts[1][k] > 0) {
            fit.propensity[1][k] = 1.0;
            fit.z_regression[1][k] = 1.0;
        }
        long count = fit.cell_counts[0][k];
        if (count == 0) continue;
        fit.propensity[0][k] = rdag_sum[0][k] / static_cast<double>(count);
        if (rdag1[0][k] == 0) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "cell (a=0, y=" << fit.y_levels[k] << ") has no record with observed instrument";
            fail(ErrorKind::empty_cell, msg.str());
        }
        fit.z_regression[0][k] = z_sum[0][k] / static_cast<double>(rdag1[0][k]);
    }
    return fit;
}

EstimateResult efficient_estimator(const Sample& sample) {
    NuisanceFit fit = fit_nuisances(sample);
    if (fit.y_levels.size() < 2) fail(ErrorKind::degenerate_sample, "outcome is constant");

    const std::size_t n = sample.n();
    std::vector<double> zhat(n), avec(n), yvec(n), ztilde(n);
    std::vector<int> rdag(n);
    std::vector<int> level(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = sample.records[i];
        DerivedRecord derived = derive_r_dagger(rec);
        int k = fit.level_index(rec.y);
        level[i] = k;
        rdag[i] = derived.r_dagger;
        avec[i] = static_cast<double>(rec.a);
        yvec[i] = rec.y;
        ztilde[i] = derived.r_dagger == 1 ? static_cast<double>(*derived.filled.z) : 0.0;

        double e = fit.propensity[rec.a][k];
        if (e < kPropensityFloor) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "fitted propensity " << e << " below floor in cell (a=" << rec.a
                << ", y=" << rec.y << ")";
            fail(ErrorKind::propensity_underflow, msg.str());
        }
        double m = fit.z_regression[rec.a][k];
        if (derived.r_dagger == 1 && e == 1.0) {
            zhat[i] = ztilde[i];  // the augmentation telescopes away exactly
        } else if (derived.r_dagger == 1) {
            zhat[i] = (ztilde[i] - m) / e + m;
        } else {
            zhat[i] = m;
        }
    }

    const double ybar = mean_of(yvec);
    const double abar = mean_of(avec);
    const double num = centered_cross(zhat, yvec, ybar);
    const double den = centered_cross(zhat, avec, abar);
    if (den == 0.0) fail(ErrorKind::degenerate_sample, "pseudo-instrument cross sum is zero");
    const double psi = num / den;
    if (!std::isfinite(psi)) fail(ErrorKind::degenerate_sample, "non-finite estimate");

    // Plug-in D* built from the same nuisances and the pseudo-instrument
    // moments: E(Z) via the augmented mean, Cov(Z,A) via the fitted ratio.
    const double ez = mean_of(zhat);
    const double cov = den / static_cast<double>(n);
    const double ev = ybar - psi * abar;
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        int a = sample.records[i].a;
        int k = level[i];
        double m = fit.z_regression[a][k];
        double v = yvec[i] - psi * avec[i];
        double cond_mean = (m - ez) * (v - ev) / cov;
        if (rdag[i] == 1) {
            double d = (ztilde[i] - ez) * (v - ev) / cov;
            double e = fit.propensity[a][k];
            values[i] = (d - cond_mean) / e + cond_mean;
        } else {
            values[i] = cond_mean;
        }
    }
    return {EstimatorId::efficient, psi, sample_variance(values), n};
}

EstimateResult rho_estimator(const Sample& sample, double rho) {
    if (!(rho >= 0.0) || rho >= 1.0) fail(ErrorKind::invalid_input, "rho must lie in [0,1)");
    CompleteData data = require_complete(sample, "rho_estimator");
    if (data.n() == 0) fail(ErrorKind::no_complete_cases, "no usable records");

    const std::size_t n = data.n();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = data.z[i] * data.a[i] + (1.0 - data.z[i]) * rho;

    const double ybar = mean_of(data.y);
    const double wbar = mean_of(w);
    const double num = centered_cross(data.z, data.y, ybar);
    const double den = centered_cross(data.z, w, wbar);
    if (den == 0.0) fail(ErrorKind::degenerate_denominator, "instrument-exposure cross sum is zero");
    const double psi = num / den;
    if (!std::isfinite(psi)) fail(ErrorKind::degenerate_denominator, "non-finite estimate");

    // The estimate must solve Pn[(Z - Pn Z)(Y - psi {ZA + (1-Z) rho})] = 0.
    const double zbar = mean_of(data.z);
    double residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        residual += (data.z[i] - zbar) * (data.y[i] - psi * w[i]);
    }
    if (std::fabs(residual) > kIdentityTol * static_cast<double>(n)) {
        fail(ErrorKind::consistency_failure, "estimating-equation residual out of tolerance");
    }

    // Reciprocal identity against the standard Wald estimate, whenever that
    // estimate and the instrument-outcome covariance are usable:
    //   1/psi_rho = 1/psi_wald + Pn{(A-rho)(1-Z)} Pn(Z) / Cov_n(Z, Y).
    if (!is_constant(data.z) && num != 0.0) {
        const double abar = mean_of(data.a);
        const double wald_den = centered_cross(data.z, data.a, abar);
        if (wald_den != 0.0) {
            const double wald = num / wald_den;
            if (wald != 0.0 && psi != 0.0) {
                double correction = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    correction += (data.a[i] - rho) * (1.0 - data.z[i]);
                }
                const double rhs = 1.0 / wald + correction * zbar / num;
                const double lhs = 1.0 / psi;
                if (std::fabs(lhs - rhs) > kIdentityTol * std::max(1.0, std::fabs(lhs))) {
                    fail(ErrorKind::consistency_failure, "reciprocal identity out of tolerance");
                }
            }
        }
    }

    // Influence values of the estimating-equation solution, mirroring the
    // full-data form with W in place of A.
    const double cov_zw = den / static_cast<double>(n);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = data.y[i] - psi * w[i];
    const double vbar = mean_of(v);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = (data.z[i] - zbar) * (v[i] - vbar) / cov_zw;
    return {EstimatorId::rho_known, psi, sample_variance(values), n};
}

double if_variance(const Sample& sample, EstimatorId id, double rho) {
    switch (id) {
        case EstimatorId::wald_full: return wald_full(sample).if_variance_estimate;
        case EstimatorId::cc_r: return cc_estimator(sample, CcIndicator::r).if_variance_estimate;
        case EstimatorId::cc_rdagger:
            return cc_estimator(sample, CcIndicator::r_dagger).if_variance_estimate;
        case EstimatorId::efficient: return efficient_estimator(sample).if_variance_estimate;
        case EstimatorId::rho_known: return rho_estimator(sample, rho).if_variance_estimate;
    }
    fail(ErrorKind::invalid_input, "unknown estimator id");
}

}  // namespace ivmiss
