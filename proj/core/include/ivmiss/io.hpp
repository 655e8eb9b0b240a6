#pragma once

#include <string>
#include <vector>

#include "ivmiss/mc.hpp"

namespace ivmiss {

// File format helpers. All writers are deterministic: fixed field order and
// shortest round-trip number formatting, so identical inputs give identical
// bytes.

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

enum class SpecFileKind { population, causal_spec, experiment_config, unknown };

// Cheap structural sniff of a parsed JSON document.
SpecFileKind detect_spec_kind(const std::string& json_text);

struct LoadedPopulation {
    DiscretePopulation pop;
    ValidationReport report;
};

// Population spec {"support": [...], "p": [[[...]]], "r": x}. Also accepts
// any object with a "population" member of that shape, so analyze reports
// re-ingest directly. Shape errors throw; assumption failures are reported.
LoadedPopulation load_population_json(const std::string& text);
std::string population_to_json(const DiscretePopulation& pop);

CausalSpec load_causal_spec_json(const std::string& text);
std::string causal_spec_to_json(const CausalSpec& spec);

// The seed must come from the file or the override; reproducibility is not
// optional, so a config without either is rejected.
ExperimentConfig load_experiment_config_json(const std::string& text,
                                             const std::uint64_t* seed_override = nullptr);
std::string experiment_config_to_json(const ExperimentConfig& config);

// Dataset CSV with header r,z,a,y; z is empty exactly when r = 0. Errors
// name the offending 1-based data row. When a declared support is given,
// every y must be one of its points.
Sample read_dataset_csv(const std::string& text, const OutcomeSupport* declared_support);
std::string write_dataset_csv(const Sample& sample);
// Adds the derived r_dagger column and writes the filled instrument.
std::string write_filled_dataset_csv(const Sample& sample);

struct AnalyzeOptions {
    std::vector<double> rho_values;
    bool from_causal_spec = false;
    double complier_ate_value = 0.0;
};

std::string analyze_report_json(const DiscretePopulation& pop, const ValidationReport& report,
                                const AnalyzeOptions& options);
std::string analyze_report_csv(const DiscretePopulation& pop, const ValidationReport& report,
                               const AnalyzeOptions& options);

std::string experiment_result_json(const ExperimentConfig& config, const ExperimentResult& result);
std::string experiment_result_csv(const ExperimentResult& result);

std::string identity_report_json(const IdentitySuiteReport& report);

std::string estimates_json(const std::vector<EstimateResult>& estimates, std::size_t n_records);
std::string estimates_csv(const std::vector<EstimateResult>& estimates);

}  // namespace ivmiss
