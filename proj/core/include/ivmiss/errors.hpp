#pragma once

#include <stdexcept>
#include <string>

namespace ivmiss {

// Typed failure taxonomy. Every throwing operation in the library uses one
// of these kinds so callers (and the Monte Carlo harness) can count and
// classify failures instead of parsing messages.
enum class ErrorKind {
    invalid_input,          // malformed population/spec/sample/config
    instrumentation_failure,// E(A|Z=1) == E(A|Z=0), Wald denominator zero
    undefined_conditional,  // conditioning event has probability zero
    not_one_sided,          // operation requires p(z=0,a=1,.) == 0
    no_complete_cases,      // no records with indicator == 1
    degenerate_sample,      // zero sample denominator / constant column
    degenerate_denominator, // known-rho denominator zero
    empty_cell,             // saturated nuisance cell unidentified in-sample
    propensity_underflow,   // fitted propensity below hard floor
    consistency_failure,    // two algebraic routes disagreed (internal check)
    experiment_aborted,     // too many failed replications for the design
};

const char* error_kind_name(ErrorKind kind);

class IvError : public std::runtime_error {
  public:
    IvError(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
          kind_(kind) {}

    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw IvError(kind, message);
}

}  // namespace ivmiss
