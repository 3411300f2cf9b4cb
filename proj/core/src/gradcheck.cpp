#include "drum/gradcheck.hpp"

#include <cmath>
#include <cstdio>

namespace drum::diff {

std::string GradCheckReport::to_string() const {
    std::string out;
    char buf[256];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof(buf), "%-32s max_rel_err=%.3e (analytic=%.6e numeric=%.6e at [%zu])\n",
                      e.name.c_str(), e.max_rel_error, e.analytic, e.numeric, e.worst_index);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "overall max_rel_err=%.3e tolerance=%.1e -> %s\n", max_rel_error,
                  tolerance, passed ? "PASS" : "FAIL");
    out += buf;
    return out;
}

GradCheckReport compare_gradients(const LossFn& fn, ParameterSet& params,
                                  const std::vector<Tensor>& analytic, double step, double tolerance) {
    if (analytic.size() != params.size())
        throw ContractError("compare_gradients: analytic gradient count mismatch");
    GradCheckReport report;
    report.tolerance = tolerance;
    // Denominator floor keeps finite-difference noise on vanishing gradients
    // from registering as relative error.
    const double floor = 1e-6;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Parameter& par = params[p];
        GradCheckEntry entry;
        entry.name = par.name;
        for (std::size_t i = 0; i < par.value.size(); ++i) {
            double saved = par.value[i];
            par.value[i] = saved + step;
            double fp = fn(params);
            par.value[i] = saved - step;
            double fm = fn(params);
            par.value[i] = saved;
            double numeric = (fp - fm) / (2.0 * step);
            double a = analytic[p][i];
            double rel = std::fabs(a - numeric) / std::max(floor, std::fabs(a) + std::fabs(numeric));
            if (rel >= entry.max_rel_error) {
                entry.max_rel_error = rel;
                entry.worst_index = i;
                entry.analytic = a;
                entry.numeric = numeric;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(std::move(entry));
    }
    report.passed = report.max_rel_error < tolerance;
    return report;
}

GradCheckReport grad_check(const LossNodeFn& fn_node, ParameterSet& params, double step, double tolerance) {
    params.zero_grad();
    {
        Tape tape;
        Node loss = fn_node(tape, params);
        tape.backward(loss);
        tape.accumulate_param_grads();
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) analytic.push_back(params[p].grad);

    LossFn value_only = [&fn_node](ParameterSet& ps) {
        Tape tape;
        Node loss = fn_node(tape, ps);
        return tape.scalar_value(loss);
    };
    return compare_gradients(value_only, params, analytic, step, tolerance);
}

} // namespace drum::diff
