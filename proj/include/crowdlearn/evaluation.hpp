#pragma once

#include "crowdlearn/event_model.hpp"
#include "crowdlearn/kernel.hpp"
#include "crowdlearn/likelihood.hpp"
#include "crowdlearn/solver.hpp"

#include <span>
#include <vector>

namespace crowdlearn {

/// Spearman rank correlation with average ranks for ties.
/// Throws LengthMismatch, DegenerateInput (fewer than 2 values or a constant vector).
[[nodiscard]] double spearman(std::span<const double> xs, std::span<const double> ys);

/// Average (fractional) ranks, 1-based.
[[nodiscard]] std::vector<double> average_ranks(std::span<const double> values);

struct FamilyRecovery {
    double spearman{0.0};
    double rmse{0.0};
    std::size_t compared{0};
    std::size_t skipped{0};  // coordinates inactive in the estimate
};

struct RecoveryReport {
    FamilyRecovery alpha, mu, knowledge;
};

/// Compares estimated to true parameters over the coordinates active in
/// `idx` (the estimate's index). Users, topics and items are matched by name;
/// a coordinate missing from the truth raises IndexMismatch.
[[nodiscard]] RecoveryReport recovery_report(const ParameterSet& truth, const ParameterSet& est,
                                             const ParameterIndex& idx);

/// Off-site-only model: the fit with every knowledge coordinate removed.
[[nodiscard]] FitResult fit_baseline(const Dataset& d, const Kernel& kernel, const SolverOptions& opts);

struct PredictionRow {
    double threshold{0.0};
    std::size_t n_pairs{0};
    double baseline_accuracy{0.0};
    double model_accuracy{0.0};
};

struct PredictionTable {
    std::vector<PredictionRow> rows;
};

/// For every unordered pair of test contributions on the same item whose
/// scores differ by at least the smallest threshold, each model predicts the
/// contribution with the larger rate. Ties in the predicted rates count as
/// wrong. Rates use the train history plus the held-out learning events.
/// Throws NoPairs.
[[nodiscard]] PredictionTable pairwise_prediction(const ParameterSet& model, const ParameterSet& baseline,
                                                  const Dataset& train, const TestSet& test,
                                                  std::vector<double> thresholds);

} // namespace crowdlearn
