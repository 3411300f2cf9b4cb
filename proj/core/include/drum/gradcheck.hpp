#pragma once

#include <functional>
#include <string>
#include <vector>

#include "drum/tape.hpp"

namespace drum::diff {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;

    std::string to_string() const;
};

// Deterministic scalar loss evaluated at the current parameter values. The
// function must not mutate the parameters it reads.
using LossFn = std::function<double(ParameterSet&)>;

// Compares caller-supplied analytic gradients (one tensor per parameter, in
// set order) against central finite differences of fn.
GradCheckReport compare_gradients(const LossFn& fn, ParameterSet& params,
                                  const std::vector<Tensor>& analytic, double step, double tolerance);

// Runs fn forward+backward once to get analytic gradients, then compares.
// The tape-producing variant: fn_node builds the loss on a fresh tape.
using LossNodeFn = std::function<Node(Tape&, ParameterSet&)>;
GradCheckReport grad_check(const LossNodeFn& fn_node, ParameterSet& params, double step, double tolerance);

} // namespace drum::diff
