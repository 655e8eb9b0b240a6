#include "ivmiss/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ivmiss {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json parse(const std::string& text) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::invalid_input, std::string("JSON parse error: ") + e.what());
    }
}

double number_at(const ordered_json& obj, const char* key) {
    if (!obj.contains(key) || !obj[key].is_number())
        fail(ErrorKind::invalid_input, std::string("missing or non-numeric field '") + key + "'");
    return obj[key].get<double>();
}

std::vector<double> number_list(const ordered_json& node, const std::string& what) {
    if (!node.is_array()) fail(ErrorKind::invalid_input, what + " must be an array of numbers");
    std::vector<double> out;
    out.reserve(node.size());
    for (const auto& v : node) {
        if (!v.is_number()) fail(ErrorKind::invalid_input, what + " must contain numbers only");
        out.push_back(v.get<double>());
    }
    return out;
}

std::string dump_number(double v) { return ordered_json(v).dump(); }

ordered_json validation_to_json(const ValidationReport& report) {
    ordered_json checks = ordered_json::array();
    for (const auto& check : report.checks) {
        checks.push_back({{"name", check.name}, {"passed", check.passed}, {"detail", check.detail}});
    }
    return checks;
}

ordered_json population_json(const DiscretePopulation& pop) {
    ordered_json out;
    out["support"] = pop.support.values;
    ordered_json table = ordered_json::array();
    for (int z = 0; z < 2; ++z) {
        ordered_json by_a = ordered_json::array();
        for (int a = 0; a < 2; ++a) {
            ordered_json row = ordered_json::array();
            for (std::size_t k = 0; k < pop.n_levels(); ++k) row.push_back(pop.cell(z, a, k));
            by_a.push_back(row);
        }
        table.push_back(by_a);
    }
    out["p"] = table;
    out["r"] = pop.r;
    return out;
}

DiscretePopulation population_from_json(const ordered_json& obj) {
    if (!obj.contains("support") || !obj.contains("p") || !obj.contains("r"))
        fail(ErrorKind::invalid_input, "population spec needs 'support', 'p', and 'r'");
    OutcomeSupport support{number_list(obj["support"], "'support'")};
    const std::size_t K = support.size();
    if (K == 0) fail(ErrorKind::invalid_input, "'support' must be nonempty");

    const auto& table = obj["p"];
    if (!table.is_array() || table.size() != 2)
        fail(ErrorKind::invalid_input, "'p' must be a [z][a][y] nested array with z in {0,1}");
    std::vector<double> p(4 * K, 0.0);
    DiscretePopulation pop{std::move(support), std::move(p), number_at(obj, "r")};
    for (int z = 0; z < 2; ++z) {
        const auto& by_a = table[static_cast<std::size_t>(z)];
        if (!by_a.is_array() || by_a.size() != 2)
            fail(ErrorKind::invalid_input, "'p' must be a [z][a][y] nested array with a in {0,1}");
        for (int a = 0; a < 2; ++a) {
            std::vector<double> row = number_list(by_a[static_cast<std::size_t>(a)], "'p' row");
            if (row.size() != K)
                fail(ErrorKind::invalid_input, "'p' rows must have one entry per support value");
            for (std::size_t k = 0; k < K; ++k) pop.cell(z, a, k) = row[k];
        }
    }
    return pop;
}

ordered_json bounds_to_json(const BoundsReport& bounds) {
    ordered_json out;
    out["var_d"] = bounds.var_d;
    out["var_d_star"] = bounds.var_d_star;
    if (bounds.var_d_os.has_value()) {
        out["var_d_os"] = *bounds.var_d_os;
    } else {
        out["var_d_os"] = nullptr;
    }
    out["gap"] = bounds.gap;
    out["rel_eff_mcar_vs_full"] = bounds.rel_eff_mcar_vs_full;
    out["rel_eff_cc_vs_full"] = bounds.rel_eff_cc_vs_full;
    out["one_sided"] = bounds.one_sided;
    out["r"] = bounds.r;
    return out;
}

ordered_json bias_to_json(const BiasReport& bias) {
    ordered_json out;
    if (bias.alpha.has_value()) {
        out["alpha"] = *bias.alpha;
    } else {
        out["alpha"] = nullptr;
    }
    out["beta"] = bias.beta;
    out["p_rdag0_given_z1"] = bias.p_rdag0_given_z1;
    out["e_a_given_z1_rdag1"] = bias.e_a_given_z1_rdag1;
    out["bias"] = bias.bias;
    out["psi_dagger_minus_psi_full"] = bias.psi_dagger_minus_psi_full;
    return out;
}

}  // namespace

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::invalid_input, "cannot open file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::invalid_input, "cannot open file for writing: " + path);
    out << text;
    if (!out) fail(ErrorKind::invalid_input, "write failed: " + path);
}

SpecFileKind detect_spec_kind(const std::string& json_text) {
    ordered_json doc = parse(json_text);
    if (!doc.is_object()) return SpecFileKind::unknown;
    if (doc.contains("spec") && doc.contains("reps")) return SpecFileKind::experiment_config;
    if (doc.contains("pz1") && doc.contains("types")) return SpecFileKind::causal_spec;
    if (doc.contains("p") && doc.contains("support")) return SpecFileKind::population;
    if (doc.contains("population")) return SpecFileKind::population;
    return SpecFileKind::unknown;
}

LoadedPopulation load_population_json(const std::string& text) {
    ordered_json doc = parse(text);
    if (doc.is_object() && doc.contains("population")) doc = doc["population"];
    DiscretePopulation pop = population_from_json(doc);
    ValidationReport report = validate(pop);
    return {std::move(pop), std::move(report)};
}

std::string population_to_json(const DiscretePopulation& pop) {
    return population_json(pop).dump(2) + "\n";
}

CausalSpec load_causal_spec_json(const std::string& text) {
    ordered_json doc = parse(text);
    if (!doc.is_object()) fail(ErrorKind::invalid_input, "causal spec must be a JSON object");
    CausalSpec spec;
    spec.pz1 = number_at(doc, "pz1");
    spec.support = OutcomeSupport{number_list(doc.contains("support") ? doc["support"] : ordered_json(),
                                              "'support'")};

    if (!doc.contains("types") || !doc["types"].is_object())
        fail(ErrorKind::invalid_input, "causal spec needs a 'types' object");
    const auto& types = doc["types"];
    spec.p_complier = types.contains("complier") ? number_at(types, "complier") : 0.0;
    spec.p_never_taker = types.contains("never_taker") ? number_at(types, "never_taker") : 0.0;
    spec.p_always_taker = types.contains("always_taker") ? number_at(types, "always_taker") : 0.0;

    if (!doc.contains("outcomes") || !doc["outcomes"].is_object())
        fail(ErrorKind::invalid_input, "causal spec needs an 'outcomes' object");
    const auto& outcomes = doc["outcomes"];
    auto law = [&outcomes](const char* type, const char* arm, bool required) -> std::vector<double> {
        if (!outcomes.contains(type)) {
            if (required) fail(ErrorKind::invalid_input, std::string("missing outcome laws for ") + type);
            return {};
        }
        const auto& node = outcomes[type];
        if (!node.contains(arm)) {
            if (required)
                fail(ErrorKind::invalid_input,
                     std::string("missing outcome law ") + type + "." + arm);
            return {};
        }
        return number_list(node[arm], std::string("outcome law ") + type + "." + arm);
    };
    spec.complier_y0 = law("complier", "a0", true);
    spec.complier_y1 = law("complier", "a1", true);
    spec.never_taker_y0 = law("never_taker", "a0", spec.p_never_taker > 0.0);
    spec.always_taker_y1 = law("always_taker", "a1", spec.p_always_taker > 0.0);
    // Unrealizable arms must stay absent: never-takers are never treated,
    // always-takers always are.
    if (outcomes.contains("never_taker") && outcomes["never_taker"].contains("a1"))
        fail(ErrorKind::invalid_input, "never_taker.a1 must be absent (never-takers are untreated)");
    if (outcomes.contains("always_taker") && outcomes["always_taker"].contains("a0"))
        fail(ErrorKind::invalid_input, "always_taker.a0 must be absent (always-takers are treated)");

    if (!doc.contains("missing") || !doc["missing"].is_object())
        fail(ErrorKind::invalid_input, "causal spec needs a 'missing' mechanism");
    const auto& missing = doc["missing"];
    if (missing.contains("mcar")) {
        spec.missing.mcar = true;
        spec.missing.rate = number_at(missing, "mcar");
    } else if (missing.contains("mar")) {
        spec.missing.mcar = false;
        const auto& table = missing["mar"];
        if (!table.is_array() || table.size() != 2)
            fail(ErrorKind::invalid_input, "'mar' must be a [a][y] array of rates");
        for (int a = 0; a < 2; ++a) {
            spec.missing.rate_table[static_cast<std::size_t>(a)] =
                number_list(table[static_cast<std::size_t>(a)], "'mar' row");
        }
    } else {
        fail(ErrorKind::invalid_input, "'missing' must contain 'mcar' or 'mar'");
    }
    if (doc.contains("seed")) spec.seed = doc["seed"].get<std::uint64_t>();
    validate_spec(spec);
    return spec;
}

std::string causal_spec_to_json(const CausalSpec& spec) {
    ordered_json doc;
    doc["pz1"] = spec.pz1;
    ordered_json types;
    types["complier"] = spec.p_complier;
    types["never_taker"] = spec.p_never_taker;
    types["always_taker"] = spec.p_always_taker;
    doc["types"] = types;
    doc["support"] = spec.support.values;
    ordered_json outcomes;
    outcomes["complier"] = {{"a0", spec.complier_y0}, {"a1", spec.complier_y1}};
    if (spec.p_never_taker > 0.0) outcomes["never_taker"] = {{"a0", spec.never_taker_y0}};
    if (spec.p_always_taker > 0.0) outcomes["always_taker"] = {{"a1", spec.always_taker_y1}};
    doc["outcomes"] = outcomes;
    if (spec.missing.mcar) {
        doc["missing"] = {{"mcar", spec.missing.rate}};
    } else {
        doc["missing"] = {{"mar", ordered_json::array({spec.missing.rate_table[0],
                                                       spec.missing.rate_table[1]})}};
    }
    doc["seed"] = spec.seed;
    return doc.dump(2) + "\n";
}

ExperimentConfig load_experiment_config_json(const std::string& text) {
    ordered_json doc = parse(text);
    if (!doc.is_object() || !doc.contains("spec"))
        fail(ErrorKind::invalid_input, "experiment config needs a 'spec' object");
    ExperimentConfig config;
    config.spec = load_causal_spec_json(doc["spec"].dump());
    config.n = static_cast<std::size_t>(number_at(doc, "n"));
    config.reps = static_cast<std::size_t>(number_at(doc, "reps"));
    if (doc.contains("seed")) config.seed = doc["seed"].get<std::uint64_t>();
    if (!doc.contains("estimators") || !doc["estimators"].is_array())
        fail(ErrorKind::invalid_input, "experiment config needs an 'estimators' array");
    for (const auto& name : doc["estimators"]) {
        auto id = estimator_id_from_name(name.get<std::string>());
        if (!id.has_value())
            fail(ErrorKind::invalid_input, "unknown estimator id: " + name.get<std::string>());
        config.estimators.push_back(*id);
    }
    if (doc.contains("rho")) config.rho = number_at(doc, "rho");
    if (doc.contains("tolerances")) {
        const auto& tol = doc["tolerances"];
        if (tol.contains("identity_abs")) config.tolerances.identity_abs = number_at(tol, "identity_abs");
        if (tol.contains("mc_sigma")) config.tolerances.mc_sigma = number_at(tol, "mc_sigma");
        if (tol.contains("variance_rel")) config.tolerances.variance_rel = number_at(tol, "variance_rel");
    }
    return config;
}

std::string experiment_config_to_json(const ExperimentConfig& config) {
    ordered_json doc;
    doc["spec"] = ordered_json::parse(causal_spec_to_json(config.spec));
    doc["n"] = config.n;
    doc["reps"] = config.reps;
    doc["seed"] = config.seed;
    ordered_json ids = ordered_json::array();
    for (EstimatorId id : config.estimators) ids.push_back(estimator_id_name(id));
    doc["estimators"] = ids;
    doc["rho"] = config.rho;
    doc["tolerances"] = {{"identity_abs", config.tolerances.identity_abs},
                         {"mc_sigma", config.tolerances.mc_sigma},
                         {"variance_rel", config.tolerances.variance_rel}};
    return doc.dump(2) + "\n";
}

namespace {

[[noreturn]] void csv_fail(std::size_t row, const std::string& message) {
    fail(ErrorKind::invalid_input, "dataset row " + std::to_string(row) + ": " + message);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    fields.push_back(field);
    return fields;
}

int parse_binary(const std::string& text, std::size_t row, const char* what) {
    if (text == "0") return 0;
    if (text == "1") return 1;
    csv_fail(row, std::string(what) + " must be 0 or 1, got '" + text + "'");
}

constexpr std::size_t kMaxCsvOutcomeLevels = 64;

}  // namespace

Sample read_dataset_csv(const std::string& text, const OutcomeSupport* declared_support) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::invalid_input, "dataset is empty");
    {
        auto header = split_csv_line(line);
        if (header.size() != 4 || header[0] != "r" || header[1] != "z" || header[2] != "a" ||
            header[3] != "y")
            fail(ErrorKind::invalid_input, "dataset header must be exactly 'r,z,a,y'");
    }
    Sample sample;
    std::vector<double> seen;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row;
        auto fields = split_csv_line(line);
        if (fields.size() != 4) csv_fail(row, "expected 4 fields");
        ObservedObservation rec;
        rec.r = parse_binary(fields[0], row, "r");
        if (rec.r == 1) {
            if (fields[1].empty()) csv_fail(row, "z must be present when r=1");
            rec.z = parse_binary(fields[1], row, "z");
        } else if (!fields[1].empty()) {
            csv_fail(row, "z must be empty when r=0");
        }
        rec.a = parse_binary(fields[2], row, "a");
        try {
            std::size_t used = 0;
            rec.y = std::stod(fields[3], &used);
            if (used != fields[3].size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            csv_fail(row, "y must be numeric, got '" + fields[3] + "'");
        }
        if (!std::isfinite(rec.y)) csv_fail(row, "y must be finite");
        if (declared_support != nullptr && declared_support->index_of(rec.y) < 0)
            csv_fail(row, "y is not in the declared support");
        bool known = false;
        for (double v : seen) known = known || v == rec.y;
        if (!known) {
            seen.push_back(rec.y);
            if (seen.size() > kMaxCsvOutcomeLevels)
                csv_fail(row, "too many distinct outcome values; discrete outcomes required");
        }
        sample.records.push_back(rec);
    }
    if (sample.n() == 0) fail(ErrorKind::invalid_input, "dataset has no data rows");
    return sample;
}

std::string write_dataset_csv(const Sample& sample) {
    std::string out = "r,z,a,y\n";
    for (const auto& rec : sample.records) {
        out += std::to_string(rec.r);
        out += ',';
        if (rec.z.has_value()) out += std::to_string(*rec.z);
        out += ',';
        out += std::to_string(rec.a);
        out += ',';
        out += dump_number(rec.y);
        out += '\n';
    }
    return out;
}

std::string write_filled_dataset_csv(const Sample& sample) {
    std::string out = "r,z,a,y,r_dagger\n";
    for (const auto& rec : sample.records) {
        DerivedRecord derived = derive_r_dagger(rec);
        out += std::to_string(rec.r);
        out += ',';
        if (derived.filled.z.has_value()) out += std::to_string(*derived.filled.z);
        out += ',';
        out += std::to_string(rec.a);
        out += ',';
        out += dump_number(rec.y);
        out += ',';
        out += std::to_string(derived.r_dagger);
        out += '\n';
    }
    return out;
}

namespace {

ordered_json analyze_report(const DiscretePopulation& pop, const ValidationReport& report,
                            const AnalyzeOptions& options) {
    ordered_json doc;
    doc["population"] = population_json(pop);
    doc["one_sided"] = report.one_sided;
    doc["validation"] = validation_to_json(report);

    ordered_json estimands;
    estimands["psi_full"] = psi_full(pop);
    estimands["psi_cc"] = psi_cc(pop);
    if (report.one_sided) {
        estimands["psi_dagger"] = psi_dagger(pop);
    } else {
        estimands["psi_dagger"] = nullptr;
        estimands["psi_dagger_note"] = "not applicable: not one-sided";
    }
    if (options.from_causal_spec) estimands["complier_ate"] = options.complier_ate_value;
    ordered_json rho_list = ordered_json::array();
    for (double rho : options.rho_values) {
        rho_list.push_back({{"rho", rho}, {"value", psi_rho(pop, rho)}});
    }
    estimands["psi_rho"] = rho_list;
    doc["estimands"] = estimands;

    doc["bounds"] = bounds_to_json(relative_efficiencies(pop));
    if (report.one_sided) {
        doc["bias"] = bias_to_json(cc_dagger_bias(pop));
    } else {
        doc["bias"] = nullptr;
        doc["bias_note"] = "not applicable: not one-sided";
    }
    return doc;
}

void flatten_csv(const ordered_json& node, const std::string& prefix, std::string& out) {
    if (node.is_object()) {
        for (const auto& item : node.items()) {
            flatten_csv(item.value(), prefix.empty() ? item.key() : prefix + "." + item.key(), out);
        }
    } else if (node.is_array()) {
        std::size_t index = 0;
        for (const auto& item : node) {
            flatten_csv(item, prefix + "[" + std::to_string(index) + "]", out);
            ++index;
        }
    } else {
        out += prefix;
        out += ',';
        out += node.is_string() ? node.get<std::string>() : node.dump();
        out += '\n';
    }
}

}  // namespace

std::string analyze_report_json(const DiscretePopulation& pop, const ValidationReport& report,
                                const AnalyzeOptions& options) {
    return analyze_report(pop, report, options).dump(2) + "\n";
}

std::string analyze_report_csv(const DiscretePopulation& pop, const ValidationReport& report,
                               const AnalyzeOptions& options) {
    ordered_json doc = analyze_report(pop, report, options);
    doc.erase("population");
    doc.erase("validation");
    std::string out = "key,value\n";
    flatten_csv(doc, "", out);
    return out;
}

std::string experiment_result_json(const ExperimentConfig& config, const ExperimentResult& result) {
    ordered_json doc;
    doc["config"] = ordered_json::parse(experiment_config_to_json(config));
    doc["psi_full"] = result.psi_full_value;
    if (result.psi_dagger_value.has_value()) {
        doc["psi_dagger"] = *result.psi_dagger_value;
    } else {
        doc["psi_dagger"] = nullptr;
    }
    doc["bounds"] = bounds_to_json(result.bounds);
    if (result.bias_report.has_value()) {
        doc["bias"] = bias_to_json(*result.bias_report);
    } else {
        doc["bias"] = nullptr;
    }

    ordered_json estimators = ordered_json::array();
    for (const auto& summary : result.estimators) {
        ordered_json entry;
        entry["id"] = estimator_id_name(summary.id);
        entry["target"] = summary.target;
        entry["reps_ok"] = summary.reps_ok;
        ordered_json failures;
        for (const auto& [kind, count] : summary.failures) failures[kind] = count;
        entry["failures"] = failures;
        entry["mean_estimate"] = summary.mean_estimate;
        entry["bias"] = summary.bias;
        entry["mcse"] = summary.mcse;
        entry["n_times_variance"] = summary.n_times_variance;
        entry["reference_avar"] = summary.reference_avar;
        entry["mean_if_variance"] = summary.mean_if_variance;
        if (summary.bias_vs_psi_full.has_value()) {
            entry["bias_vs_psi_full"] = *summary.bias_vs_psi_full;
            entry["closed_form_bias"] = *summary.closed_form_bias;
        }
        ordered_json checks = ordered_json::array();
        for (const auto& check : summary.checks) {
            checks.push_back(
                {{"name", check.name}, {"passed", check.passed}, {"detail", check.detail}});
        }
        entry["checks"] = checks;
        estimators.push_back(entry);
    }
    doc["estimators"] = estimators;
    doc["checks"] = {{"run", result.checks_run},
                     {"note", result.checks_note},
                     {"all_passed", result.checks_run ? ordered_json(result.all_checks_passed)
                                                      : ordered_json(nullptr)}};
    return doc.dump(2) + "\n";
}

std::string experiment_result_csv(const ExperimentResult& result) {
    std::string out =
        "estimator,target,reps_ok,failed,mean_estimate,bias,mcse,n_times_variance,"
        "reference_avar,mean_if_variance\n";
    for (const auto& summary : result.estimators) {
        std::size_t failed = 0;
        for (const auto& [kind, count] : summary.failures) failed += count;
        out += estimator_id_name(summary.id);
        out += ',' + dump_number(summary.target);
        out += ',' + std::to_string(summary.reps_ok);
        out += ',' + std::to_string(failed);
        out += ',' + dump_number(summary.mean_estimate);
        out += ',' + dump_number(summary.bias);
        out += ',' + dump_number(summary.mcse);
        out += ',' + dump_number(summary.n_times_variance);
        out += ',' + dump_number(summary.reference_avar);
        out += ',' + dump_number(summary.mean_if_variance);
        out += '\n';
    }
    return out;
}

std::string identity_report_json(const IdentitySuiteReport& report) {
    ordered_json doc;
    doc["populations"] = report.populations;
    doc["checks_passed"] = report.checks_passed;
    doc["checks_failed"] = report.checks_failed;
    doc["passed"] = report.passed();
    ordered_json failures = ordered_json::array();
    for (const auto& failure : report.failures) {
        failures.push_back({{"check", failure.check},
                            {"detail", failure.detail},
                            {"family", failure.family},
                            {"spec", ordered_json::parse(causal_spec_to_json(failure.spec))}});
    }
    doc["failures"] = failures;
    return doc.dump(2) + "\n";
}

std::string estimates_json(const std::vector<EstimateResult>& estimates, std::size_t n_records) {
    ordered_json doc;
    doc["n_records"] = n_records;
    ordered_json list = ordered_json::array();
    for (const auto& res : estimates) {
        list.push_back({{"id", estimator_id_name(res.estimator_id)},
                        {"estimate", res.estimate},
                        {"if_variance", res.if_variance_estimate},
                        {"n_used", res.n_used}});
    }
    doc["estimates"] = list;
    return doc.dump(2) + "\n";
}

std::string estimates_csv(const std::vector<EstimateResult>& estimates) {
    std::string out = "estimator,estimate,if_variance,n_used\n";
    for (const auto& res : estimates) {
        out += estimator_id_name(res.estimator_id);
        out += ',' + dump_number(res.estimate);
        out += ',' + dump_number(res.if_variance_estimate);
        out += ',' + std::to_string(res.n_used);
        out += '\n';
    }
    return out;
}

}  // namespace ivmiss
