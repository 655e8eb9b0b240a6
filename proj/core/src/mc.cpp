#include "ivmiss/mc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace ivmiss {

namespace {

constexpr std::size_t kMinRepsForChecks = 100;
constexpr double kAbortFailureFraction = 0.01;

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

CheckResult delta_check(const std::string& name, double delta, double tol) {
    return {name, std::fabs(delta) <= tol, "delta = " + fmt(delta) + ", tol = " + fmt(tol)};
}

CheckResult exact_check(const std::string& name, bool passed, const std::string& detail) {
    return {name, passed, detail};
}

struct WeightedMoments {
    std::vector<double> w, v;

    void add(double weight, double value) {
        if (weight > 0.0) {
            w.push_back(weight);
            v.push_back(value);
        }
    }
    double mean() const {
        double total = 0.0, acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            total += w[i];
            acc += w[i] * v[i];
        }
        return acc / total;
    }
    double variance() const {
        double m = mean();
        double total = 0.0, acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            total += w[i];
            double d = v[i] - m;
            acc += w[i] * d * d;
        }
        return acc / total;
    }
};

double rdag_weight(int a, double r) { return a == 1 ? 1.0 : r; }

}  // namespace

double avar_cc_dagger(const DiscretePopulation& pop) {
    if (!pop.one_sided())
        fail(ErrorKind::not_one_sided, "avar_cc_dagger requires one-sided noncompliance");
    const std::size_t K = pop.n_levels();

    // Law of (Z,A,Y) conditional on R+=1; its Wald estimand is psi_dagger and
    // its influence function drives the complete-case expansion.
    double mass = 0.0;
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < K; ++k) mass += pop.cell(z, a, k) * rdag_weight(a, pop.r);
        }
    }
    std::vector<double> p_dag(4 * K, 0.0);
    DiscretePopulation cond{pop.support, p_dag, 1.0};
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < K; ++k) {
                cond.cell(z, a, k) = pop.cell(z, a, k) * rdag_weight(a, pop.r) / mass;
            }
        }
    }

    // Var{ (R+/E(R+)) D_dag } over the full (R, Z, A, Y) joint.
    WeightedMoments acc;
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < K; ++k) {
                double p = pop.cell(z, a, k);
                if (p == 0.0) continue;
                double w = rdag_weight(a, pop.r);
                double d = d_full(cond, FullObservation{z, a, pop.support.values[k]});
                acc.add(p * w, d / mass);
                acc.add(p * (1.0 - w), 0.0);
            }
        }
    }
    return acc.variance();
}

double avar_rho_complete_cases(const DiscretePopulation& pop, double rho) {
    const std::size_t K = pop.n_levels();
    double psi = psi_rho(pop, rho);
    MomentTable m = moments(pop);

    double e_w = 0.0, cross_zw = 0.0;
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            double w = static_cast<double>(z * a) + (1.0 - static_cast<double>(z)) * rho;
            for (std::size_t k = 0; k < K; ++k) {
                double p = pop.cell(z, a, k);
                e_w += p * w;
                cross_zw += p * static_cast<double>(z) * w;
            }
        }
    }
    double cov_zw = cross_zw - m.e_z * e_w;
    if (cov_zw == 0.0) fail(ErrorKind::degenerate_denominator, "Cov(Z, W) = 0");

    double e_v = m.e_y - psi * e_w;
    WeightedMoments acc;
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            double w = static_cast<double>(z * a) + (1.0 - static_cast<double>(z)) * rho;
            for (std::size_t k = 0; k < K; ++k) {
                double p = pop.cell(z, a, k);
                if (p == 0.0) continue;
                double v = pop.support.values[k] - psi * w;
                acc.add(p, (static_cast<double>(z) - m.e_z) * (v - e_v) / cov_zw);
            }
        }
    }
    // The estimator runs on the R=1 subsample, hence the complete-case factor.
    return acc.variance() / pop.r;
}

namespace {

double joint_mean_d_star(const DiscretePopulation& pop) {
    double acc = 0.0;
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < pop.n_levels(); ++k) {
                double p = pop.cell(z, a, k);
                if (p == 0.0) continue;
                double y = pop.support.values[k];
                acc += p * pop.r * d_star(pop, ObservedObservation{1, z, a, y});
                if (pop.r < 1.0)
                    acc += p * (1.0 - pop.r) * d_star(pop, ObservedObservation{0, std::nullopt, a, y});
            }
        }
    }
    return acc;
}

double joint_mean_d_os(const DiscretePopulation& pop) {
    double acc = 0.0;
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < pop.n_levels(); ++k) {
                double p = pop.cell(z, a, k);
                if (p == 0.0) continue;
                double y = pop.support.values[k];
                acc += p * pop.r * d_os(pop, ObservedObservation{1, z, a, y});
                if (pop.r < 1.0)
                    acc += p * (1.0 - pop.r) * d_os(pop, ObservedObservation{0, std::nullopt, a, y});
            }
        }
    }
    return acc;
}

double joint_mean_d_full(const DiscretePopulation& pop) {
    double acc = 0.0;
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < pop.n_levels(); ++k) {
                double p = pop.cell(z, a, k);
                if (p == 0.0) continue;
                acc += p * d_full(pop, FullObservation{z, a, pop.support.values[k]});
            }
        }
    }
    return acc;
}

}  // namespace

std::vector<CheckResult> check_population_identities(const DiscretePopulation& pop) {
    std::vector<CheckResult> checks;
    const double r = pop.r;
    const double odds = (1.0 - r) / r;

    double psif = psi_full(pop);
    checks.push_back(delta_check("psi_cc_equals_psi_full", psi_cc(pop) - psif, kStructuralTol));

    MomentTable m = moments(pop);
    double ea0 = require_defined(m.e_a_given_z[0], "E(A|Z=0)");
    checks.push_back(exact_check("psi_rho_at_observed_rate_is_psi_full",
                                 psi_rho(pop, ea0) == psif, "bitwise comparison"));
    checks.push_back(exact_check("pure_recomputation", psi_full(pop) == psif, "bitwise comparison"));

    double vd = var_d(pop);
    double vds = var_d_star(pop);
    CondTables ct = cond_tables(pop);
    checks.push_back(delta_check("lemma3_subtractive_form",
                                 vds - (vd / r - odds * ct.var_of_cond_mean), kIdentityTol));
    checks.push_back(delta_check("lemma3_additive_form",
                                 vds - (vd + odds * ct.mean_of_cond_var), kIdentityTol));
    checks.push_back(delta_check("law_of_total_variance",
                                 ct.var_of_cond_mean + ct.mean_of_cond_var - vd, kIdentityTol));
    checks.push_back(delta_check("cc_inefficiency_identity",
                                 (vd / r - vds) - odds * ct.var_of_cond_mean, kIdentityTol));
    checks.push_back(exact_check("cc_inefficiency_nonnegative", vd / r - vds >= -kIdentityTol,
                                 "Var{D}/r - Var{D*} = " + fmt(vd / r - vds)));
    if (vd > 0.0) {
        checks.push_back(delta_check("cc_relative_efficiency_is_inverse_rate",
                                     (vd / r) / vd - 1.0 / r, kIdentityTol));
    }
    checks.push_back(exact_check(
        "bound_ordering", vd <= vds + kIdentityTol && vds <= vd / r + kIdentityTol,
        "Var{D} = " + fmt(vd) + ", Var{D*} = " + fmt(vds) + ", Var{D}/r = " + fmt(vd / r)));

    checks.push_back(delta_check("mean_zero_d_full", joint_mean_d_full(pop), kIdentityTol));
    checks.push_back(delta_check("mean_zero_d_star", joint_mean_d_star(pop), kIdentityTol));
    return checks;
}

std::vector<CheckResult> check_onesided_population_identities(const DiscretePopulation& pop) {
    std::vector<CheckResult> checks;
    const double r = pop.r;

    double psif = psi_full(pop);
    MomentTable m = moments(pop);
    double simplified = (require_defined(m.e_y_given_z[1], "E(Y|Z=1)") -
                         require_defined(m.e_y_given_z[0], "E(Y|Z=0)")) /
                        require_defined(m.e_a_given_z[1], "E(A|Z=1)");
    checks.push_back(delta_check("onesided_wald_simplification", simplified - psif, kStructuralTol));

    // E(Y | Z=0, R+=1) must reduce to E(Y | Z=0).
    {
        double mass = 0.0, y_sum = 0.0;
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < pop.n_levels(); ++k) {
                double w = pop.cell(0, a, k) * rdag_weight(a, r);
                mass += w;
                y_sum += w * pop.support.values[k];
            }
        }
        double delta = y_sum / mass - require_defined(m.e_y_given_z[0], "E(Y|Z=0)");
        checks.push_back(delta_check("ey_given_z0_rdag1_invariance", delta, kStructuralTol));
    }

    try {
        BiasReport bias = cc_dagger_bias(pop);
        checks.push_back(delta_check("lemma1_bias_identity",
                                     bias.bias - bias.psi_dagger_minus_psi_full, kIdentityTol));
        if (bias.alpha.has_value()) {
            checks.push_back(delta_check("bias_structural_form",
                                         bias.bias - bias.beta * bias.p_rdag0_given_z1,
                                         kStructuralTol));
        }
    } catch (const IvError& e) {
        checks.push_back(exact_check("lemma1_bias_identity", false, e.what()));
    }

    McarViolation mv = mcar_violation(pop);
    if (mv.p1.has_value() && mv.p0.has_value()) {
        checks.push_back(exact_check("theorem1_exact_dependence",
                                     (*mv.p1 - *mv.p0) == (1.0 - r) && mv.violated == (r < 1.0),
                                     "P(R+=1|A=1) - P(R+=1|A=0) = " + fmt(*mv.p1 - *mv.p0)));
    }
    checks.push_back(exact_check("remark2_mcar_retention", mar_retention_check(pop), ""));

    double vd = var_d(pop);
    double vds = var_d_star(pop);
    double vdos = var_d_os(pop);
    GapResult gap = bound_gap(pop);
    checks.push_back(delta_check("theorem2_gap_identity", (vds - vdos) - gap.value, kIdentityTol));
    checks.push_back(delta_check("strict_onesided_gap_zero", gap.value, kStructuralTol));
    checks.push_back(exact_check(
        "bound_ordering_os", vd <= vdos + kIdentityTol && vdos <= vds + kIdentityTol,
        "Var{D} = " + fmt(vd) + ", Var{D_os} = " + fmt(vdos) + ", Var{D*} = " + fmt(vds)));
    checks.push_back(delta_check("mean_zero_d_os", joint_mean_d_os(pop), kIdentityTol));
    return checks;
}

std::vector<CheckResult> check_onesided_identities(const CausalSpec& spec) {
    DiscretePopulation pop = to_population(spec);
    std::vector<CheckResult> checks = check_onesided_population_identities(pop);

    checks.push_back(delta_check("complier_ate_identification",
                                 complier_ate(spec) - psi_full(pop), kStructuralTol));
    // Halving the missing fraction must halve the closed-form bias.
    if (pop.r < 1.0) {
        try {
            BiasReport bias = cc_dagger_bias(pop);
            DiscretePopulation half =
                to_population(with_missing_rate(spec, 1.0 - (1.0 - pop.r) / 2.0));
            BiasReport half_bias = cc_dagger_bias(half);
            checks.push_back(delta_check("bias_linear_in_missingness",
                                         half_bias.bias - bias.bias / 2.0, kIdentityTol));
        } catch (const IvError& e) {
            checks.push_back(exact_check("bias_linear_in_missingness", false, e.what()));
        }
    }
    return checks;
}

IdentitySuiteReport identity_suite(std::size_t count, std::uint64_t seed) {
    if (count < 1) fail(ErrorKind::invalid_input, "identity suite needs count >= 1");
    Fuzzer fuzzer(seed);
    IdentitySuiteReport report;

    auto tally = [&report](const std::vector<CheckResult>& checks, const char* family,
                           const CausalSpec& spec) {
        for (const auto& check : checks) {
            if (check.passed) {
                ++report.checks_passed;
            } else {
                ++report.checks_failed;
                if (report.failures.size() < 10) {
                    report.failures.push_back({check.name, check.detail, family, spec});
                }
            }
        }
    };

    for (std::size_t i = 0; i < count; ++i) {
        CausalSpec one_sided = fuzzer.one_sided_spec();
        DiscretePopulation pop = to_population(one_sided);
        tally(check_population_identities(pop), "one_sided", one_sided);
        tally(check_onesided_identities(one_sided), "one_sided", one_sided);
        report.populations += 1;

        CausalSpec mar = fuzzer.mar_variant(one_sided);
        bool mar_ok = rdagger_mar_check(to_extended_joint(mar));
        tally({exact_check("remark2_mar_conditional_independence", mar_ok, "")}, "mar_variant", mar);

        CausalSpec two_sided = fuzzer.two_sided_spec();
        tally(check_population_identities(to_population(two_sided)), "two_sided", two_sided);
        report.populations += 1;
    }
    return report;
}

void validate_config(const ExperimentConfig& config) {
    validate_spec(config.spec);
    if (!config.spec.missing.mcar)
        fail(ErrorKind::invalid_input, "experiments require an MCAR mechanism");
    if (config.n < 1) fail(ErrorKind::invalid_input, "n must be at least 1");
    if (config.reps < 2) fail(ErrorKind::invalid_input, "reps must be at least 2");
    if (!(config.tolerances.identity_abs > 0.0) || !(config.tolerances.mc_sigma > 0.0) ||
        !(config.tolerances.variance_rel > 0.0))
        fail(ErrorKind::invalid_input, "tolerances must be positive");
    if (config.estimators.empty()) fail(ErrorKind::invalid_input, "no estimators requested");
    for (std::size_t i = 0; i < config.estimators.size(); ++i) {
        for (std::size_t j = i + 1; j < config.estimators.size(); ++j) {
            if (config.estimators[i] == config.estimators[j])
                fail(ErrorKind::invalid_input, "duplicate estimator requested");
        }
    }
    bool needs_one_sided = false;
    for (EstimatorId id : config.estimators) {
        if (id == EstimatorId::cc_rdagger || id == EstimatorId::efficient) needs_one_sided = true;
        if (id == EstimatorId::rho_known && (!(config.rho >= 0.0) || config.rho >= 1.0))
            fail(ErrorKind::invalid_input, "rho must lie in [0,1)");
    }
    if (needs_one_sided && config.spec.p_always_taker > 0.0)
        fail(ErrorKind::invalid_input,
             "cc_rdagger and efficient require a one-sided (no always-taker) model");
}

namespace {

struct RepOutcome {
    bool ok = false;
    double estimate = 0.0;
    double if_variance = 0.0;
    ErrorKind kind = ErrorKind::invalid_input;
};

Sample unmasked_sample(const std::vector<SampledUnit>& units) {
    Sample out;
    out.records.reserve(units.size());
    for (const auto& unit : units) {
        out.records.push_back(ObservedObservation{1, unit.z, unit.a, unit.y});
    }
    return out;
}

Sample complete_cases(const Sample& sample) {
    Sample out;
    for (const auto& rec : sample.records) {
        if (rec.r == 1) out.records.push_back(rec);
    }
    return out;
}

RepOutcome evaluate_estimator(EstimatorId id, const std::vector<SampledUnit>& units,
                              const Sample& masked, double rho) {
    RepOutcome out;
    try {
        EstimateResult res;
        switch (id) {
            case EstimatorId::wald_full: res = wald_full(unmasked_sample(units)); break;
            case EstimatorId::cc_r: res = cc_estimator(masked, CcIndicator::r); break;
            case EstimatorId::cc_rdagger: res = cc_estimator(masked, CcIndicator::r_dagger); break;
            case EstimatorId::efficient: res = efficient_estimator(masked); break;
            case EstimatorId::rho_known: res = rho_estimator(complete_cases(masked), rho); break;
        }
        out.ok = true;
        out.estimate = res.estimate;
        out.if_variance = res.if_variance_estimate;
    } catch (const IvError& e) {
        out.kind = e.kind();
    }
    return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, unsigned threads) {
    validate_config(config);
    const DiscretePopulation pop = to_population(config.spec);

    ExperimentResult result;
    result.n = config.n;
    result.reps = config.reps;
    result.seed = config.seed;
    result.rho = config.rho;
    result.psi_full_value = psi_full(pop);
    result.bounds = relative_efficiencies(pop);
    if (pop.one_sided()) {
        result.psi_dagger_value = psi_dagger(pop);
        result.bias_report = cc_dagger_bias(pop);
    }

    const std::size_t reps = config.reps;
    const std::size_t n_estimators = config.estimators.size();
    std::vector<std::vector<RepOutcome>> outcomes(n_estimators, std::vector<RepOutcome>(reps));

    auto run_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            std::vector<SampledUnit> units =
                sample_units(config.spec, config.n, derive_seed(config.seed, k));
            Sample masked = mask(units);
            for (std::size_t e = 0; e < n_estimators; ++e) {
                outcomes[e][k] = evaluate_estimator(config.estimators[e], units, masked, config.rho);
            }
        }
    };

    unsigned worker_count = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    worker_count = static_cast<unsigned>(
        std::min<std::size_t>(worker_count, reps));
    if (worker_count <= 1) {
        run_range(0, reps);
    } else {
        std::vector<std::thread> workers;
        std::size_t chunk = (reps + worker_count - 1) / worker_count;
        for (unsigned w = 0; w < worker_count; ++w) {
            std::size_t begin = static_cast<std::size_t>(w) * chunk;
            std::size_t end = std::min(reps, begin + chunk);
            if (begin >= end) break;
            workers.emplace_back(run_range, begin, end);
        }
        for (auto& worker : workers) worker.join();
    }

    const bool checks_run = reps >= kMinRepsForChecks;
    result.checks_run = checks_run;
    result.checks_note =
        checks_run ? ""
                   : "reps < " + std::to_string(kMinRepsForChecks) +
                         ": MC standard errors too wide, embedded tolerance checks skipped";
    result.all_checks_passed = true;

    for (std::size_t e = 0; e < n_estimators; ++e) {
        EstimatorSummary summary;
        summary.id = config.estimators[e];
        switch (summary.id) {
            case EstimatorId::cc_rdagger: summary.target = *result.psi_dagger_value; break;
            case EstimatorId::rho_known: summary.target = psi_rho(pop, config.rho); break;
            default: summary.target = result.psi_full_value; break;
        }
        switch (summary.id) {
            case EstimatorId::wald_full: summary.reference_avar = result.bounds.var_d; break;
            case EstimatorId::cc_r: summary.reference_avar = result.bounds.var_d / pop.r; break;
            case EstimatorId::cc_rdagger: summary.reference_avar = avar_cc_dagger(pop); break;
            case EstimatorId::efficient: summary.reference_avar = *result.bounds.var_d_os; break;
            case EstimatorId::rho_known:
                summary.reference_avar = avar_rho_complete_cases(pop, config.rho);
                break;
        }

        double sum = 0.0, if_sum = 0.0;
        std::size_t ok = 0;
        for (std::size_t k = 0; k < reps; ++k) {
            const RepOutcome& rep = outcomes[e][k];
            if (rep.ok) {
                sum += rep.estimate;
                if_sum += rep.if_variance;
                ++ok;
            } else {
                summary.failures[error_kind_name(rep.kind)] += 1;
            }
        }
        std::size_t failed = reps - ok;
        if (static_cast<double>(failed) > kAbortFailureFraction * static_cast<double>(reps)) {
            std::ostringstream msg;
            msg << estimator_id_name(summary.id) << ": " << failed << "/" << reps
                << " replications failed; n is too small for this design";
            fail(ErrorKind::experiment_aborted, msg.str());
        }
        summary.reps_ok = ok;
        summary.mean_estimate = sum / static_cast<double>(ok);
        summary.mean_if_variance = if_sum / static_cast<double>(ok);
        summary.bias = summary.mean_estimate - summary.target;

        double ss = 0.0;
        for (std::size_t k = 0; k < reps; ++k) {
            const RepOutcome& rep = outcomes[e][k];
            if (!rep.ok) continue;
            double d = rep.estimate - summary.mean_estimate;
            ss += d * d;
        }
        double variance = ok >= 2 ? ss / static_cast<double>(ok - 1) : 0.0;
        summary.mcse = std::sqrt(variance / static_cast<double>(ok));
        summary.n_times_variance = static_cast<double>(config.n) * variance;

        if (summary.id == EstimatorId::cc_rdagger) {
            summary.bias_vs_psi_full = summary.mean_estimate - result.psi_full_value;
            summary.closed_form_bias = result.bias_report->bias;
        }

        if (checks_run) {
            const std::string prefix = std::string(estimator_id_name(summary.id)) + ":";
            double bias_band = config.tolerances.mc_sigma * summary.mcse;
            summary.checks.push_back(exact_check(prefix + "bias_within_mc_error",
                                                 std::fabs(summary.bias) <= bias_band,
                                                 "bias = " + fmt(summary.bias) +
                                                     ", band = " + fmt(bias_band)));
            if (summary.id == EstimatorId::cc_rdagger) {
                double delta = *summary.bias_vs_psi_full - *summary.closed_form_bias;
                summary.checks.push_back(exact_check(prefix + "bias_matches_closed_form",
                                                     std::fabs(delta) <= bias_band,
                                                     "delta = " + fmt(delta) +
                                                         ", band = " + fmt(bias_band)));
            }
            if (summary.reference_avar > 0.0) {
                double rel = summary.n_times_variance / summary.reference_avar - 1.0;
                summary.checks.push_back(exact_check(prefix + "n_variance_within_reference",
                                                     std::fabs(rel) <= config.tolerances.variance_rel,
                                                     "relative deviation = " + fmt(rel)));
            }
            for (const auto& check : summary.checks) {
                if (!check.passed) result.all_checks_passed = false;
            }
        }
        result.estimators.push_back(std::move(summary));
    }
    return result;
}

}  // namespace ivmiss
