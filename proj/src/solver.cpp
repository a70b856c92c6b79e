#include "crowdlearn/solver.hpp"

#include "crowdlearn/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace crowdlearn {

std::string_view to_string(StopReason r) noexcept {
    switch (r) {
    case StopReason::gradient:
        return "gradient";
    case StopReason::objective:
        return "objective";
    case StopReason::max_iter:
        return "max_iter";
    }
    return "unknown";
}

double projected_gradient_norm(std::span<const double> x, std::span<const double> grad) {
    double norm = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        // At the bound only inward (negative) gradient components can move x.
        const double g = (x[i] <= 0.0 && grad[i] > 0.0) ? 0.0 : grad[i];
        norm = std::max(norm, std::abs(g));
    }
    return norm;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

struct Correction {
    std::vector<double> s, y;
    double rho;
};

// d = -H q via the two-loop recursion.
std::vector<double> quasi_newton_direction(const std::deque<Correction>& history, std::vector<double> q) {
    std::vector<double> alpha(history.size());
    for (std::size_t k = history.size(); k-- > 0;) {
        const auto& c = history[k];
        alpha[k] = c.rho * dot(c.s, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * c.y[i];
    }
    if (!history.empty()) {
        const auto& last = history.back();
        const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
        for (auto& v : q) v *= gamma;
    }
    for (std::size_t k = 0; k < history.size(); ++k) {
        const auto& c = history[k];
        const double beta = c.rho * dot(c.y, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[k] - beta) * c.s[i];
    }
    for (auto& v : q) v = -v;
    return q;
}

} // namespace

BoxResult minimize_nonnegative(const Objective& f, std::vector<double> x0, const BoxOptions& opts) {
    const std::size_t n = x0.size();
    BoxResult result;
    std::vector<double> x = std::move(x0);
    for (auto& v : x) v = std::max(v, 0.0);
    std::vector<double> g(n, 0.0), x_new(n), g_new(n);
    double fx = f(x, g);
    if (!std::isfinite(fx)) {
        throw std::domain_error("objective is not finite at the starting point");
    }
    result.trace.push_back(fx);

    std::deque<Correction> history;
    std::vector<double> unscaled;
    const auto stop_norm = [&]() {
        if (opts.gradient_unscale.empty()) return projected_gradient_norm(x, g);
        unscaled.resize(n);
        for (std::size_t i = 0; i < n; ++i) unscaled[i] = g[i] / opts.gradient_unscale[i];
        return projected_gradient_norm(x, unscaled);
    };
    const auto finish = [&](StopReason reason) {
        result.x = std::move(x);
        result.value = fx;
        result.reason = reason;
        return result;
    };
    if (stop_norm() <= opts.grad_tolerance) {
        return finish(StopReason::gradient);
    }

    for (int iter = 1; iter <= opts.max_iterations; ++iter) {
        result.iterations = iter;
        // Variables held at the bound by an outward gradient stay fixed this step.
        std::vector<bool> fixed(n);
        std::vector<double> masked_g(g);
        for (std::size_t i = 0; i < n; ++i) {
            fixed[i] = x[i] <= 0.0 && g[i] > 0.0;
            if (fixed[i]) masked_g[i] = 0.0;
        }

        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            const bool steepest = attempt == 1 || history.empty();
            std::vector<double> d = steepest ? masked_g : quasi_newton_direction(history, masked_g);
            if (steepest) {
                const double gmax = projected_gradient_norm(x, g);
                const double scale = history.empty() ? std::min(1.0, 1.0 / std::max(gmax, 1e-300)) : 1.0;
                for (auto& v : d) v *= -scale;
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (fixed[i] || (x[i] <= 0.0 && d[i] < 0.0)) d[i] = 0.0;
            }
            if (!(dot(g, d) < 0.0)) {
                if (steepest) break;
                continue;
            }

            double step = 1.0;
            for (int bt = 0; bt <= opts.max_backtracks; ++bt, step *= opts.backtrack_shrink) {
                for (std::size_t i = 0; i < n; ++i) x_new[i] = std::max(0.0, x[i] + step * d[i]);
                double decrease = 0.0;
                for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (x_new[i] - x[i]);
                if (!(decrease < 0.0)) continue;
                const double f_new = f(x_new, g_new);
                if (std::isfinite(f_new) && f_new <= fx + opts.armijo_c1 * decrease) {
                    accepted = true;
                    std::vector<double> s(n), y(n);
                    for (std::size_t i = 0; i < n; ++i) {
                        s[i] = x_new[i] - x[i];
                        y[i] = g_new[i] - g[i];
                    }
                    const double sy = dot(s, y);
                    if (sy > 1e-10 * dot(y, y)) {
                        history.push_back({std::move(s), std::move(y), 1.0 / sy});
                        if (static_cast<int>(history.size()) > opts.memory) history.pop_front();
                    }
                    const double rel = (fx - f_new) / std::max({std::abs(fx), std::abs(f_new), 1.0});
                    x.swap(x_new);
                    g.swap(g_new);
                    fx = f_new;
                    result.trace.push_back(fx);
                    if (stop_norm() <= opts.grad_tolerance) {
                        return finish(StopReason::gradient);
                    }
                    if (rel <= opts.objective_rel_tolerance) {
                        return finish(StopReason::objective);
                    }
                    break;
                }
            }
            if (!accepted && !steepest) {
                history.clear();
            }
        }
        if (!accepted) {
            // No feasible decrease along either direction: stationary to working precision.
            return finish(StopReason::objective);
        }
    }
    return finish(StopReason::max_iter);
}

// ---------------------------------------------------------------------------

void SolverOptions::validate() const {
    if (max_iterations < 0 || !(grad_tolerance > 0.0) || !(objective_rel_tolerance > 0.0) || memory < 1 ||
        !(init_value > 0.0)) {
        throw ConfigInvalid("solver tolerances and the initial value must be positive and memory >= 1");
    }
}

FitResult fit(const Dataset& d, const ParameterIndex& idx, const DesignMatrix& design, const SolverOptions& opts) {
    opts.validate();
    if (design.rows() == 0) {
        throw NoContributions("the dataset has no contributions to fit");
    }
    const auto start = std::chrono::steady_clock::now();
    BoxOptions box;
    box.max_iterations = opts.max_iterations;
    box.grad_tolerance = opts.grad_tolerance;
    box.objective_rel_tolerance = opts.objective_rel_tolerance;
    box.memory = opts.memory;

    const unsigned threads = opts.threads;
    // Optimise in z = theta / scale with unit column norms; columns differ by
    // orders of magnitude (mu multiplies time, k a sum of kernel values).
    std::vector<double> scale = design.column_square_norms(threads);
    for (auto& v : scale) v = v > 0.0 ? 1.0 / std::sqrt(v) : 1.0;
    box.gradient_unscale = scale;
    std::vector<double> theta(idx.size());
    const Objective negative_ll = [&](std::span<const double> z, std::span<double> grad) {
        for (std::size_t i = 0; i < z.size(); ++i) theta[i] = z[i] * scale[i];
        std::size_t floored = 0;
        const double ll = design.evaluate(theta, grad, threads, &floored);
        // A positive score at zero rate has likelihood zero; the floor only
        // keeps reported values finite, so the line search must not land there.
        if (floored > 0) return std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = -grad[i] * scale[i];
        return -ll;
    };
    std::vector<double> z0(idx.size());
    for (std::size_t i = 0; i < z0.size(); ++i) z0[i] = opts.init_value / scale[i];
    auto box_result = minimize_nonnegative(negative_ll, std::move(z0), box);
    for (std::size_t i = 0; i < box_result.x.size(); ++i) box_result.x[i] *= scale[i];

    FitResult out;
    out.params = idx.unpack(box_result.x, d, design.kernel());
    out.log_likelihood = -box_result.value;
    out.negative_log_likelihood = box_result.value + log_factorial_constant(design);
    out.objective_trace.reserve(box_result.trace.size());
    for (const double v : box_result.trace) out.objective_trace.push_back(-v);
    out.theta = std::move(box_result.x);
    out.iterations = box_result.iterations;
    out.converged_by = box_result.reason;
    out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

FitResult fit(const Dataset& d, const Kernel& kernel, const SolverOptions& opts, bool with_knowledge) {
    opts.validate();
    if (d.contributions().empty()) {
        throw NoContributions("the dataset has no contributions to fit");
    }
    const auto start = std::chrono::steady_clock::now();
    const auto idx = ParameterIndex::build(d, with_knowledge);
    const auto design = DesignMatrix::build(d, kernel, idx, opts.threads);
    auto result = fit(d, idx, design, opts);
    result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::vector<SweepPoint> sweep_half_life(const Dataset& d, std::vector<double> half_lives, const SolverOptions& opts) {
    if (half_lives.empty()) {
        throw std::invalid_argument("half-life sweep needs at least one value");
    }
    std::sort(half_lives.begin(), half_lives.end());
    half_lives.erase(std::unique(half_lives.begin(), half_lives.end()), half_lives.end());
    const auto idx = ParameterIndex::build(d, true);
    std::vector<SweepPoint> points;
    for (const double h : half_lives) {
        const auto design = DesignMatrix::build(d, Kernel::from_half_life(h), idx, opts.threads);
        const auto result = fit(d, idx, design, opts);
        points.push_back({h, result.negative_log_likelihood, 0.0, result.iterations, result.converged_by});
    }
    const double best = std::min_element(points.begin(), points.end(), [](auto& a, auto& b) {
                            return a.negative_log_likelihood < b.negative_log_likelihood;
                        })->negative_log_likelihood;
    for (auto& p : points) {
        p.relative_to_min = (p.negative_log_likelihood - best) / std::max(std::abs(best), 1e-300);
    }
    return points;
}

} // namespace crowdlearn
