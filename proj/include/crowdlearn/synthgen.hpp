#pragma once

#include "crowdlearn/event_model.hpp"
#include "crowdlearn/kernel.hpp"

#include <cstdint>
#include <vector>

namespace crowdlearn {

struct UniformRange {
    double low{0.0};
    double high{1.0};
};

struct CountRange {
    std::int64_t low{1};
    std::int64_t high{1};
};

/// Synthetic crowdlearning setup. Rates are per day, times in days.
struct SynthConfig {
    std::size_t n_users{400};
    std::size_t n_items{800};
    std::size_t n_topics{1};
    std::size_t max_topics_per_item{3};  // item topic-set size ~ U{1..min(this, n_topics)} ...
    std::vector<double> topic_count_weights;  // ... unless given: P(size = i + 1) ~ weights[i]
    double horizon{365.0};
    UniformRange mu_range{0.0, 5.0};
    UniformRange alpha_range{0.0, 1.0};
    double knowledge_scale{0.05};        // k ~ scale * LogNormal(0, knowledge_log_sigma)
    double knowledge_log_sigma{1.0};
    double omega{1.0 / 11.6};
    double learning_log_mean{3.0};       // per-user learning count ~ LogNormal(mean, sd)
    double learning_log_sd{1.0};
    CountRange contribution_count_range{50, 1000};
    double topic_propensity_decay{0.6};  // weight of the r-th ranked topic ~ decay^r
    std::size_t min_learning_events_per_item{10};
    // When nonzero, per-user counts are rescaled (largest remainder) to hit these totals.
    std::size_t target_learning_events{0};
    std::size_t target_contributions{0};
    std::uint64_t seed{0};

    /// Throws ConfigInvalid.
    void validate() const;
};

struct SyntheticData {
    Dataset dataset;
    ParameterSet truth;
};

/// Draws ground truth, event times (homogeneous Poisson conditioned on the
/// count), item assignments by per-user topic propensity, and Poisson scores
/// from the true expertise. Learning events on items below the per-item
/// minimum are dropped before scores are drawn, so the returned dataset is an
/// exact sample of the model under `truth`.
[[nodiscard]] SyntheticData generate(const SynthConfig& cfg);

/// Standard benchmark set (~800 learned-from items,
/// ~13,000 learning events, ~255,000 contributions) with rates scaled so that
/// off-site growth and on-site knowledge are of comparable size.
[[nodiscard]] SynthConfig benchmark_config(std::size_t n_topics, std::uint64_t seed = 1);

} // namespace crowdlearn
