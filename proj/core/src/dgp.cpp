#include "ivmiss/dgp.hpp"

#include <cmath>

namespace ivmiss {

namespace {

bool is_law(const std::vector<double>& q, std::size_t k_levels) {
    if (q.size() != k_levels) return false;
    double total = 0.0;
    for (double v : q) {
        if (!std::isfinite(v) || v < 0.0) return false;
        total += v;
    }
    return std::fabs(total - 1.0) <= kNormalizationTol;
}

}  // namespace

void validate_spec(const CausalSpec& spec) {
    const std::size_t K = spec.support.size();
    if (K < 1 || !spec.support.strictly_increasing())
        fail(ErrorKind::invalid_input, "spec support must be nonempty and strictly increasing");
    if (!(spec.pz1 > 0.0) || !(spec.pz1 < 1.0))
        fail(ErrorKind::invalid_input, "spec requires 0 < P(Z=1) < 1");
    double type_total = spec.p_complier + spec.p_never_taker + spec.p_always_taker;
    if (spec.p_complier < 0.0 || spec.p_never_taker < 0.0 || spec.p_always_taker < 0.0 ||
        std::fabs(type_total - 1.0) > kNormalizationTol)
        fail(ErrorKind::invalid_input, "type probabilities must be nonnegative and sum to 1");
    if (!(spec.p_complier > 0.0))
        fail(ErrorKind::invalid_input, "instrumentation requires complier mass > 0");
    if (!is_law(spec.complier_y1, K) || !is_law(spec.complier_y0, K))
        fail(ErrorKind::invalid_input, "complier outcome laws must be distributions over the support");
    if (spec.p_never_taker > 0.0 && !is_law(spec.never_taker_y0, K))
        fail(ErrorKind::invalid_input, "never-taker Y0 law must be a distribution over the support");
    // Unrealizable arms must be absent: never-takers are never treated and
    // always-takers are always treated.
    if (spec.p_always_taker > 0.0 && !is_law(spec.always_taker_y1, K))
        fail(ErrorKind::invalid_input, "always-taker Y1 law must be a distribution over the support");
    if (spec.p_always_taker == 0.0 && !spec.always_taker_y1.empty())
        fail(ErrorKind::invalid_input, "always-taker law declared without always-taker mass");
    if (spec.missing.mcar) {
        if (!(spec.missing.rate > 0.0) || spec.missing.rate > 1.0)
            fail(ErrorKind::invalid_input, "MCAR rate must lie in (0,1]");
    } else {
        for (int a = 0; a < 2; ++a) {
            const auto& row = spec.missing.rate_table[static_cast<std::size_t>(a)];
            if (row.size() != K) fail(ErrorKind::invalid_input, "MAR table must have one rate per (a,y)");
            for (double v : row) {
                if (!(v > 0.0) || v > 1.0) fail(ErrorKind::invalid_input, "MAR rates must lie in (0,1]");
            }
        }
    }
}

CausalSpec canonical_p1() {
    CausalSpec spec;
    spec.pz1 = 0.5;
    spec.p_complier = 0.6;
    spec.p_never_taker = 0.4;
    spec.p_always_taker = 0.0;
    spec.support = OutcomeSupport{{0.0, 1.0}};
    spec.complier_y1 = {0.2, 0.8};
    spec.complier_y0 = {0.7, 0.3};
    spec.never_taker_y0 = {0.5, 0.5};
    spec.missing.mcar = true;
    spec.missing.rate = 0.7;
    spec.seed = 20240501;
    return spec;
}

CausalSpec canonical_p2() {
    CausalSpec spec = canonical_p1();
    spec.never_taker_y0 = {0.7, 0.3};
    return spec;
}

CausalSpec canonical_p3() {
    CausalSpec spec = canonical_p1();
    spec.p_never_taker = 0.2;
    spec.p_always_taker = 0.2;
    spec.always_taker_y1 = {0.4, 0.6};
    return spec;
}

CausalSpec with_missing_rate(CausalSpec spec, double r) {
    spec.missing.mcar = true;
    spec.missing.rate = r;
    spec.missing.rate_table = {};
    return spec;
}

DiscretePopulation to_population(const CausalSpec& spec) {
    validate_spec(spec);
    if (!spec.missing.mcar)
        fail(ErrorKind::invalid_input,
             "MAR mechanisms enumerate to an extended joint, not a DiscretePopulation");
    const std::size_t K = spec.support.size();
    std::vector<double> p(4 * K, 0.0);
    DiscretePopulation pop{spec.support, std::move(p), spec.missing.rate};
    const double pz0 = 1.0 - spec.pz1;
    for (std::size_t k = 0; k < K; ++k) {
        double complier_y1 = spec.p_complier * spec.complier_y1[k];
        double complier_y0 = spec.p_complier * spec.complier_y0[k];
        double never_y0 = spec.p_never_taker > 0.0 ? spec.p_never_taker * spec.never_taker_y0[k] : 0.0;
        double always_y1 = spec.p_always_taker > 0.0 ? spec.p_always_taker * spec.always_taker_y1[k] : 0.0;
        pop.cell(1, 1, k) = spec.pz1 * (complier_y1 + always_y1);
        pop.cell(1, 0, k) = spec.pz1 * never_y0;
        pop.cell(0, 1, k) = pz0 * always_y1;
        pop.cell(0, 0, k) = pz0 * (complier_y0 + never_y0);
    }
    return make_population(pop.support, pop.p, pop.r);
}

ExtendedJoint to_extended_joint(const CausalSpec& spec) {
    CausalSpec base = spec;
    // Reuse the (Z,A,Y) marginalization, then attach the mechanism.
    base.missing.mcar = true;
    base.missing.rate = 1.0;
    base.missing.rate_table = {};
    DiscretePopulation pop = to_population(base);
    validate_spec(spec);

    ExtendedJoint joint{spec.support, std::vector<double>(8 * spec.support.size(), 0.0)};
    for (int z = 0; z < 2; ++z) {
        for (int a = 0; a < 2; ++a) {
            for (std::size_t k = 0; k < spec.support.size(); ++k) {
                double mass = pop.cell(z, a, k);
                double rate = spec.missing.rate_for(a, k);
                joint.cell(1, z, a, k) = mass * rate;
                joint.cell(0, z, a, k) = mass * (1.0 - rate);
            }
        }
    }
    return joint;
}

double complier_ate(const CausalSpec& spec) {
    validate_spec(spec);
    double ate = 0.0;
    for (std::size_t k = 0; k < spec.support.size(); ++k) {
        ate += spec.support.values[k] * (spec.complier_y1[k] - spec.complier_y0[k]);
    }
    return ate;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ (0x9E3779B97F4A7C15ull * (index + 1)));
}

Fuzzer::Fuzzer(std::uint64_t seed) : engine_(splitmix64(seed)) {}

namespace {

// Uniform in [0,1) from the top 53 bits; the draw path is pinned here rather
// than delegated to distribution objects so outputs are identical across
// standard libraries.
double next_uniform(std::mt19937_64& engine) {
    return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

std::size_t pick_category(const std::vector<double>& weights, double u) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return i;
    }
    return weights.size() - 1;
}

}  // namespace

std::vector<SampledUnit> sample_units(const CausalSpec& spec, std::size_t n, std::uint64_t seed) {
    validate_spec(spec);
    if (n < 1) fail(ErrorKind::invalid_input, "sample size must be at least 1");
    std::mt19937_64 engine(seed);
    const std::vector<double> type_weights = {spec.p_complier, spec.p_never_taker,
                                              spec.p_always_taker};
    std::vector<SampledUnit> units(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t type = pick_category(type_weights, next_uniform(engine));
        int z = next_uniform(engine) < spec.pz1 ? 1 : 0;
        int a = type == 0 ? z : (type == 1 ? 0 : 1);
        const std::vector<double>* law = nullptr;
        if (type == 0) law = a == 1 ? &spec.complier_y1 : &spec.complier_y0;
        if (type == 1) law = &spec.never_taker_y0;
        if (type == 2) law = &spec.always_taker_y1;
        std::size_t k = pick_category(*law, next_uniform(engine));
        double y = spec.support.values[k];
        int r = next_uniform(engine) < spec.missing.rate_for(a, k) ? 1 : 0;
        units[i] = SampledUnit{z, a, y, r};
    }
    return units;
}

Sample mask(const std::vector<SampledUnit>& units) {
    Sample out;
    out.records.reserve(units.size());
    for (const auto& unit : units) {
        ObservedObservation rec;
        rec.r = unit.r;
        rec.a = unit.a;
        rec.y = unit.y;
        if (unit.r == 1) rec.z = unit.z;
        out.records.push_back(rec);
    }
    return out;
}

Sample sample(const CausalSpec& spec, std::size_t n, std::uint64_t seed) {
    return mask(sample_units(spec, n, seed));
}

FrequencyTable empirical_joint(const Sample& sample, const OutcomeSupport& support) {
    if (sample.n() == 0) fail(ErrorKind::invalid_input, "empty sample");
    FrequencyTable table{support, std::vector<double>(4 * support.size(), 0.0)};
    const double unit = 1.0 / static_cast<double>(sample.n());
    for (const auto& rec : sample.records) {
        if (rec.r != 1 || !rec.z.has_value())
            fail(ErrorKind::invalid_input, "empirical_joint requires fully observed instruments");
        int k = support.index_of(rec.y);
        if (k < 0) fail(ErrorKind::invalid_input, "sampled outcome outside declared support");
        table.freq[(static_cast<std::size_t>(*rec.z) * 2 + static_cast<std::size_t>(rec.a)) *
                       support.size() + static_cast<std::size_t>(k)] += unit;
    }
    return table;
}

double Fuzzer::uniform() { return next_uniform(engine_); }

double Fuzzer::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::vector<double> Fuzzer::simplex(std::size_t k, double floor_mass) {
    std::vector<double> values(k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        values[i] = -std::log(1.0 - uniform());
        total += values[i];
    }
    double free_mass = 1.0 - floor_mass * static_cast<double>(k);
    double assigned = 0.0;
    for (std::size_t i = 0; i + 1 < k; ++i) {
        values[i] = floor_mass + free_mass * (values[i] / total);
        assigned += values[i];
    }
    values[k - 1] = 1.0 - assigned;  // exact normalization
    return values;
}

OutcomeSupport Fuzzer::random_support() {
    static const std::vector<std::vector<double>> grids = {
        {0.0, 1.0}, {0.0, 0.5, 1.0}, {0.0, 0.25, 0.5, 1.0}};
    std::vector<double> values = grids[static_cast<std::size_t>(uniform(0.0, 3.0))];
    if (uniform() < 0.5) {
        for (double& v : values) v -= 0.5;
    }
    return OutcomeSupport{values};
}

CausalSpec Fuzzer::one_sided_spec() {
    CausalSpec spec;
    spec.support = random_support();
    const std::size_t K = spec.support.size();
    spec.pz1 = uniform(0.2, 0.8);
    spec.p_complier = uniform(0.1, 0.9);
    spec.p_never_taker = 1.0 - spec.p_complier;
    spec.p_always_taker = 0.0;
    spec.complier_y1 = simplex(K, 0.02);
    spec.complier_y0 = simplex(K, 0.02);
    spec.never_taker_y0 = simplex(K, 0.02);
    spec.missing.mcar = true;
    spec.missing.rate = uniform(0.3, 0.95);
    spec.seed = engine_();
    return spec;
}

CausalSpec Fuzzer::two_sided_spec() {
    CausalSpec spec = one_sided_spec();
    std::vector<double> types = simplex(3, 0.1);
    spec.p_complier = types[0];
    spec.p_never_taker = types[1];
    spec.p_always_taker = types[2];
    spec.always_taker_y1 = simplex(spec.support.size(), 0.02);
    return spec;
}

CausalSpec Fuzzer::mar_variant(CausalSpec spec) {
    const std::size_t K = spec.support.size();
    spec.missing.mcar = false;
    spec.missing.rate = 0.0;
    for (int a = 0; a < 2; ++a) {
        spec.missing.rate_table[static_cast<std::size_t>(a)].resize(K);
        for (std::size_t k = 0; k < K; ++k) {
            spec.missing.rate_table[static_cast<std::size_t>(a)][k] = uniform(0.3, 0.95);
        }
    }
    return spec;
}

}  // namespace ivmiss
