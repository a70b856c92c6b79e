#pragma once

#include "crowdlearn/event_model.hpp"
#include "crowdlearn/kernel.hpp"
#include "crowdlearn/likelihood.hpp"

#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace crowdlearn {

enum class StopReason { gradient, objective, max_iter };

[[nodiscard]] std::string_view to_string(StopReason r) noexcept;

// ---------------------------------------------------------------------------
// Nonnegatively constrained limited-memory quasi-Newton minimiser

struct BoxOptions {
    int max_iterations{500};
    double grad_tolerance{1e-6};          // infinity norm of the projected gradient
    double objective_rel_tolerance{1e-9};
    int memory{10};
    double armijo_c1{1e-4};
    double backtrack_shrink{0.5};
    int max_backtracks{40};
    // When set, the gradient test divides component i by this factor first
    // (the caller optimises in rescaled variables but wants the tolerance in
    // the original ones).
    std::vector<double> gradient_unscale;
};

struct BoxResult {
    std::vector<double> x;
    double value{0.0};
    std::vector<double> trace;  // objective after each accepted iterate, starting with x0
    int iterations{0};
    StopReason reason{StopReason::max_iter};
};

/// f(x, grad) returns the objective and writes its gradient.
using Objective = std::function<double(std::span<const double>, std::span<double>)>;

/// Minimises f subject to x >= 0. Search directions come from the L-BFGS
/// two-loop recursion restricted to the variables not held at their bound;
/// steps are projected onto the box and accepted by backtracking Armijo on
/// the projected path. Falls back to projected steepest descent whenever the
/// quasi-Newton direction fails to descend.
[[nodiscard]] BoxResult minimize_nonnegative(const Objective& f, std::vector<double> x0, const BoxOptions& opts);

/// Infinity norm of the gradient projected onto the feasible directions at x.
[[nodiscard]] double projected_gradient_norm(std::span<const double> x, std::span<const double> grad);

// ---------------------------------------------------------------------------
// Maximum-likelihood fit

struct SolverOptions {
    int max_iterations{500};
    double grad_tolerance{1e-6};
    double objective_rel_tolerance{1e-9};
    int memory{10};
    double init_value{1e-3};
    unsigned threads{default_thread_count()};

    void validate() const;
};

struct FitResult {
    ParameterSet params;
    std::vector<double> theta;
    std::vector<double> objective_trace;  // log-likelihood per iterate, nondecreasing
    double log_likelihood{0.0};           // without the log(s!) constant
    double negative_log_likelihood{0.0};  // full NLL including log(s!)
    int iterations{0};
    StopReason converged_by{StopReason::max_iter};
    double wall_time{0.0};                // seconds
};

/// Maximises the log-likelihood over alpha, mu, k >= 0. Throws NoContributions.
[[nodiscard]] FitResult fit(const Dataset& d, const Kernel& kernel, const SolverOptions& opts,
                            bool with_knowledge = true);

/// Same, over a prebuilt index and design (e.g. from the binary cache).
[[nodiscard]] FitResult fit(const Dataset& d, const ParameterIndex& idx, const DesignMatrix& design,
                            const SolverOptions& opts);

struct SweepPoint {
    double half_life{0.0};
    double negative_log_likelihood{0.0};
    double relative_to_min{0.0};  // (nll - min nll) / |min nll|
    int iterations{0};
    StopReason converged_by{StopReason::max_iter};
};

/// Refits at each half-life (sorted ascending in the output).
[[nodiscard]] std::vector<SweepPoint> sweep_half_life(const Dataset& d, std::vector<double> half_lives,
                                                      const SolverOptions& opts);

} // namespace crowdlearn
