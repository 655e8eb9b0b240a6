#include "ivmiss/population.hpp"

#include <cmath>
#include <sstream>

namespace ivmiss {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_input: return "invalid_input";
        case ErrorKind::instrumentation_failure: return "instrumentation_failure";
        case ErrorKind::undefined_conditional: return "undefined_conditional";
        case ErrorKind::not_one_sided: return "not_one_sided";
        case ErrorKind::no_complete_cases: return "no_complete_cases";
        case ErrorKind::degenerate_sample: return "degenerate_sample";
        case ErrorKind::degenerate_denominator: return "degenerate_denominator";
        case ErrorKind::empty_cell: return "empty_cell";
        case ErrorKind::propensity_underflow: return "propensity_underflow";
        case ErrorKind::consistency_failure: return "consistency_failure";
        case ErrorKind::experiment_aborted: return "experiment_aborted";
    }
    return "unknown";
}

int OutcomeSupport::index_of(double y) const {
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (values[k] == y) return static_cast<int>(k);
    }
    return -1;
}

bool OutcomeSupport::strictly_increasing() const {
    for (std::size_t k = 1; k < values.size(); ++k) {
        if (!(values[k - 1] < values[k])) return false;
    }
    return true;
}

double DiscretePopulation::pz1() const {
    double total = 0.0;
    for (int a = 0; a < 2; ++a) {
        for (std::size_t k = 0; k < n_levels(); ++k) total += cell(1, a, k);
    }
    return total;
}

double DiscretePopulation::p_treated() const {
    double total = 0.0;
    for (int z = 0; z < 2; ++z) {
        for (std::size_t k = 0; k < n_levels(); ++k) total += cell(z, 1, k);
    }
    return total;
}

bool DiscretePopulation::one_sided() const {
    for (std::size_t k = 0; k < n_levels(); ++k) {
        if (cell(0, 1, k) != 0.0) return false;
    }
    return true;
}

DiscretePopulation make_population(OutcomeSupport support, std::vector<double> p, double r) {
    if (support.size() < 1) fail(ErrorKind::invalid_input, "outcome support is empty");
    if (!support.strictly_increasing())
        fail(ErrorKind::invalid_input, "outcome support must be strictly increasing");
    if (p.size() != 4 * support.size())
        fail(ErrorKind::invalid_input, "probability table must have 4*K entries");
    for (double v : p) {
        if (!std::isfinite(v) || v < 0.0)
            fail(ErrorKind::invalid_input, "probability entries must be finite and nonnegative");
    }
    if (!(r > 0.0) || r > 1.0)
        fail(ErrorKind::invalid_input, "observation rate r must lie in (0,1]");
    return DiscretePopulation{std::move(support), std::move(p), r};
}

bool ValidationReport::all_passed() const {
    for (const auto& check : checks) {
        if (!check.passed) return false;
    }
    return true;
}

const ValidationCheck* ValidationReport::find(const std::string& name) const {
    for (const auto& check : checks) {
        if (check.name == name) return &check;
    }
    return nullptr;
}

namespace {

std::string format_value(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

}  // namespace

ValidationReport validate(const DiscretePopulation& pop) {
    ValidationReport report;
    auto add = [&report](const std::string& name, bool passed, const std::string& detail) {
        report.checks.push_back({name, passed, detail});
    };

    bool entries_ok = pop.p.size() == 4 * pop.n_levels() && pop.n_levels() >= 1;
    bool nonneg = true;
    bool finite = true;
    double total = 0.0;
    for (double v : pop.p) {
        if (!std::isfinite(v)) finite = false;
        if (v < 0.0) nonneg = false;
        total += v;
    }
    add("table_shape", entries_ok, entries_ok ? "" : "expected 4*K entries");
    add("entries_finite", finite, finite ? "" : "non-finite probability entry");
    add("entries_nonnegative", nonneg, nonneg ? "" : "negative probability entry");
    add("support_increasing", pop.support.strictly_increasing(),
        pop.support.strictly_increasing() ? "" : "support values must be strictly increasing");

    bool normalized = finite && std::fabs(total - 1.0) <= kNormalizationTol;
    add("normalization", normalized, "sum(p) = " + format_value(total));

    bool r_ok = pop.r > 0.0 && pop.r <= 1.0;
    add("r_in_range", r_ok, "r = " + format_value(pop.r));

    if (!entries_ok) return report;

    double pz = pop.pz1();
    bool positivity = pz > 0.0 && pz < 1.0;
    add("positivity", positivity, "P(Z=1) = " + format_value(pz));

    bool instrumented = false;
    std::string detail = "conditional treatment means undefined";
    if (positivity) {
        double ea1 = 0.0, ea0 = 0.0;
        for (std::size_t k = 0; k < pop.n_levels(); ++k) {
            ea1 += pop.cell(1, 1, k);
            ea0 += pop.cell(0, 1, k);
        }
        double delta = ea1 / pz - ea0 / (1.0 - pz);
        instrumented = std::fabs(delta) > kInstrumentationTol;
        detail = "E(A|Z=1)-E(A|Z=0) = " + format_value(delta);
    }
    add("instrumentation", instrumented, detail);

    report.one_sided = pop.one_sided();
    add("one_sided", true, report.one_sided ? "true" : "false");
    return report;
}

double require_defined(const std::optional<double>& value, const std::string& what) {
    if (!value.has_value()) fail(ErrorKind::undefined_conditional, what);
    return *value;
}

MomentTable moments(const DiscretePopulation& pop) {
    const std::size_t K = pop.n_levels();
    MomentTable m;

    std::array<double, 2> pz = {0.0, 0.0};
    std::array<double, 4> pza = {0.0, 0.0, 0.0, 0.0};       // [z*2+a]
    std::array<double, 4> y_sum_za = {0.0, 0.0, 0.0, 0.0};  // sum y*p over cell
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < K; ++k) {
                double w = pop.cell(z, a, k);
                pz[z] += w;
                pza[z * 2 + a] += w;
                y_sum_za[z * 2 + a] += pop.support.values[k] * w;
            }
        }
    }

    m.e_z = pz[1];
    m.e_a = pza[1] + pza[3];
    m.e_y = y_sum_za[0] + y_sum_za[1] + y_sum_za[2] + y_sum_za[3];
    m.cov_za = pza[3] - m.e_z * m.e_a;

    for (int z = 0; z < 2; ++z) {
        if (pz[z] > 0.0) {
            m.e_a_given_z[z] = pza[z * 2 + 1] / pz[z];
            m.e_y_given_z[z] = (y_sum_za[z * 2] + y_sum_za[z * 2 + 1]) / pz[z];
        }
        for (int a = 0; a < 2; ++a) {
            if (pza[z * 2 + a] > 0.0) m.e_y_given_za[z * 2 + a] = y_sum_za[z * 2 + a] / pza[z * 2 + a];
        }
    }

    // R+ = R(1-A) + A:  P(R+=1 | Z=z, A=a, Y=y) = 1 when a=1, r when a=0.
    const double r = pop.r;
    for (int z = 0; z < 2; ++z) {
        double mass_rdag1 = pza[z * 2] * r + pza[z * 2 + 1];
        if (pz[z] > 0.0) m.p_rdag1_given_z[z] = mass_rdag1 / pz[z];
        if (z == 1) {
            if (mass_rdag1 > 0.0) {
                m.e_a_given_z1_rdag[1] = pza[3] / mass_rdag1;
                m.e_y_given_z1_rdag1 = (y_sum_za[2] * r + y_sum_za[3]) / mass_rdag1;
            }
            double mass_rdag0 = pza[2] * (1.0 - r);
            if (mass_rdag0 > 0.0) {
                // R+=0 forces A=0, so the numerator is a structural zero.
                m.e_a_given_z1_rdag[0] = 0.0 / mass_rdag0;
            }
        }
    }
    return m;
}

namespace {

double wald_ratio(double dy, double da, const char* context) {
    if (std::fabs(da) <= kInstrumentationTol)
        fail(ErrorKind::instrumentation_failure, std::string(context) + ": treatment contrast is zero");
    return dy / da;
}

}  // namespace

double psi_full(const DiscretePopulation& pop) {
    MomentTable m = moments(pop);
    double dy = require_defined(m.e_y_given_z[1], "E(Y|Z=1)") -
                require_defined(m.e_y_given_z[0], "E(Y|Z=0)");
    double da = require_defined(m.e_a_given_z[1], "E(A|Z=1)") -
                require_defined(m.e_a_given_z[0], "E(A|Z=0)");
    return wald_ratio(dy, da, "psi_full");
}

double psi_cc(const DiscretePopulation& pop) {
    if (!(pop.r > 0.0)) fail(ErrorKind::no_complete_cases, "P(R=1) = 0");
    const std::size_t K = pop.n_levels();
    const double r = pop.r;

    // Conditioning on R=1 under MCAR: every cell carries the same factor r.
    std::array<double, 2> mass = {0.0, 0.0};
    std::array<double, 2> a_sum = {0.0, 0.0};
    std::array<double, 2> y_sum = {0.0, 0.0};
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < K; ++k) {
                double w = pop.cell(z, a, k) * r;
                mass[z] += w;
                a_sum[z] += a * w;
                y_sum[z] += pop.support.values[k] * w;
            }
        }
    }
    if (!(mass[0] > 0.0) || !(mass[1] > 0.0))
        fail(ErrorKind::undefined_conditional, "psi_cc: an instrument arm has no complete cases");
    double dy = y_sum[1] / mass[1] - y_sum[0] / mass[0];
    double da = a_sum[1] / mass[1] - a_sum[0] / mass[0];
    return wald_ratio(dy, da, "psi_cc");
}

double psi_dagger(const DiscretePopulation& pop) {
    if (!pop.one_sided())
        fail(ErrorKind::not_one_sided, "psi_dagger requires one-sided noncompliance");
    const std::size_t K = pop.n_levels();
    const double r = pop.r;

    // Weight of the R+=1 event within a (z,a,y) cell: 1 for a=1, r for a=0.
    std::array<double, 2> mass = {0.0, 0.0};
    std::array<double, 2> a_sum = {0.0, 0.0};
    std::array<double, 2> y_sum = {0.0, 0.0};
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            double w_rdag = (a == 1) ? 1.0 : r;
            for (std::size_t k = 0; k < K; ++k) {
                double w = pop.cell(z, a, k) * w_rdag;
                mass[z] += w;
                a_sum[z] += a * w;
                y_sum[z] += pop.support.values[k] * w;
            }
        }
    }
    if (!(mass[0] > 0.0) || !(mass[1] > 0.0))
        fail(ErrorKind::undefined_conditional, "psi_dagger: an instrument arm has no R+=1 mass");
    double dy = y_sum[1] / mass[1] - y_sum[0] / mass[0];
    double da = a_sum[1] / mass[1] - a_sum[0] / mass[0];
    return wald_ratio(dy, da, "psi_dagger");
}

double psi_rho(const DiscretePopulation& pop, double rho) {
    if (!(rho >= 0.0) || rho >= 1.0)
        fail(ErrorKind::invalid_input, "rho must lie in [0,1)");
    MomentTable m = moments(pop);
    double dy = require_defined(m.e_y_given_z[1], "E(Y|Z=1)") -
                require_defined(m.e_y_given_z[0], "E(Y|Z=0)");
    double da = require_defined(m.e_a_given_z[1], "E(A|Z=1)") - rho;
    if (std::fabs(da) <= kInstrumentationTol)
        fail(ErrorKind::degenerate_denominator, "psi_rho: E(A|Z=1) equals rho");
    return dy / da;
}

}  // namespace ivmiss
