#pragma once

#include "crowdlearn/event_model.hpp"
#include "crowdlearn/kernel.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace crowdlearn {

inline constexpr double kDefaultZeroThreshold = 1e-6;

// How mu turns into an aggregate figure over [0, T].
enum class OffsiteReading {
    integral,  // integral of mu*t over [0, T] = mu T^2 / 2
    growth,    // expertise gained by time T = mu T
};

struct UserDecomposition {
    UserId user;
    double onsite{0.0};
    double offsite{0.0};
    double total{0.0};
};

/// Per user, the integrated on-site knowledge up to T and the off-site part.
[[nodiscard]] std::vector<UserDecomposition> onsite_offsite(const ParameterSet& p, const Dataset& d, double horizon,
                                                            OffsiteReading reading = OffsiteReading::integral);

struct LogNormalFit {
    double log_mean{0.0};
    double log_sd{0.0};
    std::size_t n{0};
};

/// Method of moments on the logs of the strictly positive values.
[[nodiscard]] LogNormalFit fit_lognormal(const std::vector<double>& values);

struct PowerLawFit {
    double exponent{0.0};
    double x_min{0.0};
    std::size_t n_tail{0};
};

/// Maximum-likelihood exponent for the tail x >= x_min; x_min <= 0 picks the
/// smallest positive value.
[[nodiscard]] PowerLawFit fit_power_law(const std::vector<double>& values, double x_min = 0.0);

struct DistributionSummary {
    std::vector<double> item_totals;  // k_q per item, dataset order
    std::vector<double> bin_edges;    // log-spaced over the positive totals
    std::vector<std::size_t> bin_counts;
    double zero_fraction{0.0};
    double top_decile_share{0.0};
    LogNormalFit lognormal;
};

[[nodiscard]] DistributionSummary knowledge_distribution(const ParameterSet& p,
                                                         double zero_threshold = kDefaultZeroThreshold,
                                                         std::size_t bins = 20);

struct UsefulUpvotes {
    std::vector<std::pair<UserId, double>> fractions;
    std::size_t users_without_learning{0};
};

/// Fraction of each user's learning events on items with k_q >= zero_threshold.
[[nodiscard]] UsefulUpvotes useful_upvote_fraction(const ParameterSet& p, const Dataset& d,
                                                   double zero_threshold = kDefaultZeroThreshold);

struct ContributionKnowledge {
    std::vector<double> shares;       // aligned with d.contributions()
    std::vector<double> contributed;  // per user
    std::vector<double> learned;      // per user, k_q summed over learning events
    LogNormalFit learned_fit;
    PowerLawFit contributed_fit;
};

/// Splits each item's k_q across its contributions in proportion to score,
/// or evenly when every score on the item is zero.
[[nodiscard]] ContributionKnowledge contribution_knowledge(const ParameterSet& p, const Dataset& d);

struct TrajectoryPoint {
    double time{0.0};
    std::vector<double> expertise;
};

struct Trajectory {
    UserId user;
    std::vector<TrajectoryPoint> points;
    double onsite_share{0.0};  // onsite / (onsite + offsite) at the horizon; 0 when both vanish
};

/// Throws UnknownUser.
[[nodiscard]] Trajectory learning_trajectory(const ParameterSet& p, const Dataset& d, std::string_view user,
                                             const std::vector<double>& grid);

void write_csv(std::ostream& out, const std::vector<UserDecomposition>& rows, const Dataset& d);
void write_csv(std::ostream& out, const DistributionSummary& s, const ParameterSet& p);
void write_csv(std::ostream& out, const UsefulUpvotes& u, const Dataset& d);
void write_csv(std::ostream& out, const ContributionKnowledge& c, const Dataset& d);
void write_csv(std::ostream& out, const Trajectory& t, const Dataset& d);

} // namespace crowdlearn
