#include "ivmiss/influence.hpp"

#include <cmath>
#include <sstream>

namespace ivmiss {

namespace {

// Everything D needs from the population.
struct DContext {
    double psi = 0.0;
    double e_z = 0.0;
    double e_v = 0.0;  // E(Y - psi A)
    double cov_za = 0.0;

    double value(int z, int a, double y) const {
        return (static_cast<double>(z) - e_z) * ((y - psi * static_cast<double>(a)) - e_v) / cov_za;
    }
};

DContext make_context(const DiscretePopulation& pop) {
    DContext ctx;
    ctx.psi = psi_full(pop);  // throws on instrumentation failure
    MomentTable m = moments(pop);
    ctx.e_z = m.e_z;
    ctx.e_v = m.e_y - ctx.psi * m.e_a;
    ctx.cov_za = m.cov_za;
    return ctx;
}

void check_agreement(double a, double b, const char* what) {
    if (std::fabs(a - b) > kIdentityTol) {
        std::ostringstream msg;
        msg.precision(17);
        msg << what << " disagree: " << a << " vs " << b;
        fail(ErrorKind::consistency_failure, msg.str());
    }
}

// Weighted mean/variance over explicit (weight, value) terms, two-pass.
struct Accumulator {
    std::vector<double> w;
    std::vector<double> v;

    void add(double weight, double value) {
        if (weight > 0.0) {
            w.push_back(weight);
            v.push_back(value);
        }
    }
    double total() const {
        double t = 0.0;
        for (double x : w) t += x;
        return t;
    }
    double mean() const {
        double m = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) m += w[i] * v[i];
        return m / total();
    }
    double variance() const {
        double m = mean();
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            double d = v[i] - m;
            s += w[i] * d * d;
        }
        return s / total();
    }
};

double enumerate_var_d(const DiscretePopulation& pop, const DContext& ctx) {
    Accumulator acc;
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < pop.n_levels(); ++k) {
                double p = pop.cell(z, a, k);
                if (p == 0.0) continue;
                acc.add(p, ctx.value(z, a, pop.support.values[k]));
            }
        }
    }
    return acc.variance();
}

double closed_form_var_d(const DiscretePopulation& pop, const DContext& ctx) {
    // sum_z Var(Y - psi A | Z=z)/P(Z=z), over the squared treatment contrast.
    MomentTable m = moments(pop);
    double delta_a = require_defined(m.e_a_given_z[1], "E(A|Z=1)") -
                     require_defined(m.e_a_given_z[0], "E(A|Z=0)");
    double num = 0.0;
    for (int z = 0; z < 2; ++z) {
        Accumulator acc;
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < pop.n_levels(); ++k) {
                double p = pop.cell(z, a, k);
                if (p == 0.0) continue;
                acc.add(p, pop.support.values[k] - ctx.psi * static_cast<double>(a));
            }
        }
        num += acc.variance() / acc.total();
    }
    return num / (delta_a * delta_a);
}

CondTables build_cond_tables(const DiscretePopulation& pop, const DContext& ctx) {
    const std::size_t K = pop.n_levels();
    CondTables tables;
    tables.treated.resize(K);
    tables.untreated.resize(K);

    double grand_mean = 0.0;
    for (int a = 0; a < 2; ++a) {
        for (std::size_t k = 0; k < K; ++k) {
            double prob = pop.cell(0, a, k) + pop.cell(1, a, k);
            if (prob == 0.0) continue;
            Accumulator acc;
            for (int z = 0; z < 2; ++z) {
                double p = pop.cell(z, a, k);
                if (p == 0.0) continue;
                acc.add(p / prob, ctx.value(z, a, pop.support.values[k]));
            }
            CondCell cell{acc.mean(), acc.variance(), prob};
            (a == 1 ? tables.treated : tables.untreated)[k] = cell;
            grand_mean += prob * cell.mean;
        }
    }
    for (int a = 0; a < 2; ++a) {
        for (std::size_t k = 0; k < K; ++k) {
            const auto& cell = tables.at(a, k);
            if (!cell) continue;
            double dm = cell->mean - grand_mean;
            tables.var_of_cond_mean += cell->prob * dm * dm;
            tables.mean_of_cond_var += cell->prob * cell->var;
            if (a == 1) {
                tables.mean_of_cond_var_treated += cell->prob * cell->var;
            } else {
                tables.mean_of_cond_var_untreated += cell->prob * cell->var;
            }
        }
    }
    return tables;
}

// Shared arithmetic for the weighted observed-data influence values so that
// d_os on untreated records is bitwise identical to d_star.
double weighted_if_value(int indicator, double e_rate, double d, double cond_mean) {
    if (indicator == 0) return cond_mean;
    if (e_rate == 1.0) return d;
    return (d - cond_mean) / e_rate + cond_mean;
}

const CondCell& require_cell(const CondTables& tables, int a, std::size_t k) {
    const auto& cell = tables.at(a, k);
    if (!cell) fail(ErrorKind::undefined_conditional, "P(A=a, Y=y) = 0 for the requested cell");
    return *cell;
}

std::size_t require_level(const DiscretePopulation& pop, double y) {
    int k = pop.support.index_of(y);
    if (k < 0) fail(ErrorKind::invalid_input, "outcome value is not a support point");
    return static_cast<std::size_t>(k);
}

}  // namespace

double d_full(const DiscretePopulation& pop, const FullObservation& obs) {
    DContext ctx = make_context(pop);
    return ctx.value(obs.z, obs.a, obs.y);
}

double var_d(const DiscretePopulation& pop) {
    DContext ctx = make_context(pop);
    double enumerated = enumerate_var_d(pop, ctx);
    double closed = closed_form_var_d(pop, ctx);
    check_agreement(enumerated, closed, "Var{D} enumeration and per-arm closed form");
    return enumerated;
}

CondTables cond_tables(const DiscretePopulation& pop) {
    DContext ctx = make_context(pop);
    return build_cond_tables(pop, ctx);
}

double d_star(const DiscretePopulation& pop, const ObservedObservation& obs) {
    DContext ctx = make_context(pop);
    CondTables tables = build_cond_tables(pop, ctx);
    std::size_t k = require_level(pop, obs.y);
    const CondCell& cell = require_cell(tables, obs.a, k);
    if (obs.r == 0) return cell.mean;
    if (!obs.z.has_value()) fail(ErrorKind::invalid_input, "observed record (r=1) is missing z");
    double d = ctx.value(*obs.z, obs.a, obs.y);
    return weighted_if_value(1, pop.r, d, cell.mean);
}

double d_os(const DiscretePopulation& pop, const ObservedObservation& obs) {
    if (!pop.one_sided()) fail(ErrorKind::not_one_sided, "d_os requires one-sided noncompliance");
    DContext ctx = make_context(pop);
    if (obs.a == 1) {
        // R+ = 1 and E(R+|A=1) = 1; a missing instrument is filled as z = 1.
        int z = obs.z.value_or(1);
        return ctx.value(z, 1, obs.y);
    }
    CondTables tables = build_cond_tables(pop, ctx);
    std::size_t k = require_level(pop, obs.y);
    const CondCell& cell = require_cell(tables, 0, k);
    if (obs.r == 0) return cell.mean;
    if (!obs.z.has_value()) fail(ErrorKind::invalid_input, "observed record (r=1) is missing z");
    double d = ctx.value(*obs.z, 0, obs.y);
    return weighted_if_value(1, pop.r, d, cell.mean);
}

namespace {

double enumerate_var_d_star(const DiscretePopulation& pop, const DContext& ctx,
                            const CondTables& tables) {
    Accumulator acc;
    const double r = pop.r;
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < pop.n_levels(); ++k) {
                double p = pop.cell(z, a, k);
                if (p == 0.0) continue;
                double d = ctx.value(z, a, pop.support.values[k]);
                double mean = require_cell(tables, a, k).mean;
                acc.add(p * r, weighted_if_value(1, r, d, mean));
                acc.add(p * (1.0 - r), mean);
            }
        }
    }
    return acc.variance();
}

double enumerate_var_d_os(const DiscretePopulation& pop, const DContext& ctx,
                          const CondTables& tables) {
    Accumulator acc;
    const double r = pop.r;
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < pop.n_levels(); ++k) {
                double p = pop.cell(z, a, k);
                if (p == 0.0) continue;
                double d = ctx.value(z, a, pop.support.values[k]);
                if (a == 1) {
                    // R+ = 1 whichever way R falls.
                    acc.add(p * r, d);
                    acc.add(p * (1.0 - r), d);
                } else {
                    double mean = require_cell(tables, 0, k).mean;
                    acc.add(p * r, weighted_if_value(1, r, d, mean));
                    acc.add(p * (1.0 - r), mean);
                }
            }
        }
    }
    return acc.variance();
}

}  // namespace

double var_d_star(const DiscretePopulation& pop) {
    DContext ctx = make_context(pop);
    CondTables tables = build_cond_tables(pop, ctx);
    double variance_d = enumerate_var_d(pop, ctx);
    double odds = (1.0 - pop.r) / pop.r;

    double enumerated = enumerate_var_d_star(pop, ctx, tables);
    double closed_subtract = variance_d / pop.r - odds * tables.var_of_cond_mean;
    double closed_add = variance_d + odds * tables.mean_of_cond_var;
    check_agreement(enumerated, closed_subtract, "Var{D*} enumeration and Var{D}/r form");
    check_agreement(enumerated, closed_add, "Var{D*} enumeration and Var{D}+odds form");
    return enumerated;
}

double var_d_os(const DiscretePopulation& pop) {
    if (!pop.one_sided()) fail(ErrorKind::not_one_sided, "var_d_os requires one-sided noncompliance");
    DContext ctx = make_context(pop);
    CondTables tables = build_cond_tables(pop, ctx);
    double variance_d = enumerate_var_d(pop, ctx);
    double odds = (1.0 - pop.r) / pop.r;

    double enumerated = enumerate_var_d_os(pop, ctx, tables);
    double closed = variance_d + odds * tables.mean_of_cond_var_untreated;
    check_agreement(enumerated, closed, "Var{D_os} enumeration and closed form");
    return enumerated;
}

GapResult bound_gap(const DiscretePopulation& pop) {
    DContext ctx = make_context(pop);
    if (pop.p_treated() == 0.0) return {0.0, true};
    CondTables tables = build_cond_tables(pop, ctx);
    double odds = (1.0 - pop.r) / pop.r;
    return {odds * tables.mean_of_cond_var_treated, false};
}

BoundsReport relative_efficiencies(const DiscretePopulation& pop) {
    DContext ctx = make_context(pop);
    CondTables tables = build_cond_tables(pop, ctx);
    double odds = (1.0 - pop.r) / pop.r;

    BoundsReport report;
    report.one_sided = pop.one_sided();
    report.r = pop.r;
    report.var_d = var_d(pop);
    report.var_d_star = var_d_star(pop);
    report.gap = bound_gap(pop).value;
    if (report.one_sided) {
        report.var_d_os = var_d_os(pop);
        check_agreement(report.var_d_star - *report.var_d_os, report.gap,
                        "Var{D*} - Var{D_os} and the gap formula");
    }
    report.rel_eff_mcar_vs_full =
        report.var_d > 0.0 ? 1.0 + odds * tables.mean_of_cond_var / report.var_d : 1.0;
    report.rel_eff_cc_vs_full = 1.0 / pop.r;
    return report;
}

}  // namespace ivmiss
