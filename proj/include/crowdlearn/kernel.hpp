#pragma once

#include "crowdlearn/event_model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace crowdlearn {

/// Lower bound applied to a Poisson rate inside log terms.
inline constexpr double kRateFloor = 1e-12;

[[nodiscard]] inline double half_life_to_omega(double half_life_days) {
    if (!(half_life_days > 0.0) || !std::isfinite(half_life_days)) {
        throw std::invalid_argument("half-life must be positive and finite");
    }
    return std::numbers::ln2 / half_life_days;
}

[[nodiscard]] inline double omega_to_half_life(double omega) {
    if (!(omega > 0.0) || !std::isfinite(omega)) {
        throw std::invalid_argument("decay rate must be positive and finite");
    }
    return std::numbers::ln2 / omega;
}

/// Exponential forgetting kernel exp(-omega t) for t >= 0, zero before.
class Kernel {
public:
    explicit Kernel(double omega) : omega_(omega) {
        if (!(omega > 0.0) || !std::isfinite(omega)) {
            throw std::invalid_argument("kernel decay rate must be positive and finite");
        }
    }
    [[nodiscard]] static Kernel from_half_life(double days) { return Kernel(half_life_to_omega(days)); }

    [[nodiscard]] double omega() const noexcept { return omega_; }
    [[nodiscard]] double half_life() const noexcept { return std::numbers::ln2 / omega_; }
    [[nodiscard]] double operator()(double dt) const noexcept { return dt >= 0.0 ? std::exp(-omega_ * dt) : 0.0; }

    bool operator==(const Kernel&) const = default;

private:
    double omega_;
};

[[nodiscard]] inline double kernel_eval(const Kernel& kernel, double dt) noexcept { return kernel(dt); }

struct KnowledgeCell {
    TopicId topic;
    double value{0.0};
};

/// Row-major dense |rows| x |cols| matrix.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    [[nodiscard]] double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t rows_{0}, cols_{0};
    std::vector<double> data_;
};

/// Model parameters laid out over a dataset's user/topic/item tables.
/// alpha, mu: |U| x |A|. knowledge: one cell per topic of each item, in the
/// item's topic order; cells outside an item's topics do not exist.
struct ParameterSet {
    std::vector<std::string> users;
    std::vector<std::string> topics;
    std::vector<std::string> items;
    DenseMatrix alpha;
    DenseMatrix mu;
    std::vector<std::vector<KnowledgeCell>> knowledge;
    Kernel kernel{std::numbers::ln2 / 7.0};

    /// Zero parameters whose knowledge support follows the dataset's item topics.
    [[nodiscard]] static ParameterSet zeros(const Dataset& d, Kernel kernel);

    [[nodiscard]] double knowledge_of(ItemId item, TopicId topic) const noexcept;
    /// k_q = sum over topics of k_qa.
    [[nodiscard]] double item_knowledge(ItemId item) const;
    /// Throws std::invalid_argument on negative or non-finite entries or shape errors.
    void check_invariants() const;
};

/// Expertise vector e*_u(t) over all topics, summing learning events
/// strictly before t. Throws UnknownUser.
[[nodiscard]] std::vector<double> expertise(const ParameterSet& p, UserId user, const Dataset& d, double t);
[[nodiscard]] std::vector<double> expertise(const ParameterSet& p, std::string_view user, const Dataset& d, double t);

/// Topic-weighted average expertise over the contribution item's topics.
[[nodiscard]] double contribution_rate(const ParameterSet& p, const Contribution& c, const Dataset& d);

/// Poisson log-pmf with the rate floored inside the log; s may be real
/// (detrended scores) in which case log(s!) is lgamma(s + 1).
[[nodiscard]] double score_log_pmf(double rate, double score);

[[nodiscard]] std::int64_t sample_score(double rate, std::mt19937_64& rng);

} // namespace crowdlearn
