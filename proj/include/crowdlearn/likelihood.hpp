#pragma once

#include "crowdlearn/event_model.hpp"
#include "crowdlearn/kernel.hpp"
#include "crowdlearn/parallel.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace crowdlearn {

enum class Family : std::uint8_t { alpha, mu, knowledge };

/// What a flat coordinate stands for: (family, user-or-item row, topic).
struct CoordinateCell {
    Family family{Family::alpha};
    std::uint32_t row{0};
    TopicId topic;
};

/// Packing of the identifiable parameter cells into one flat vector.
///
/// alpha(u, a) is active when u contributes to an item on topic a; mu(u, a)
/// additionally needs such a contribution after t = 0; k(q, a) is active when
/// some user learns from q and later contributes on topic a. Every other cell
/// has a zero column in the design and is pinned at 0.
class ParameterIndex {
public:
    static constexpr std::uint32_t kAbsent = 0xFFFFFFFFu;

    [[nodiscard]] static ParameterIndex build(const Dataset& d, bool with_knowledge = true);

    [[nodiscard]] std::size_t size() const noexcept { return cells_.size(); }
    [[nodiscard]] std::size_t alpha_count() const noexcept { return n_alpha_; }
    [[nodiscard]] std::size_t mu_count() const noexcept { return n_mu_; }
    [[nodiscard]] std::size_t knowledge_count() const noexcept { return size() - n_alpha_ - n_mu_; }
    [[nodiscard]] bool with_knowledge() const noexcept { return with_knowledge_; }

    [[nodiscard]] std::uint32_t alpha_coord(UserId u, TopicId a) const { return alpha_.at(u.get() * n_topics_ + a.get()); }
    [[nodiscard]] std::uint32_t mu_coord(UserId u, TopicId a) const { return mu_.at(u.get() * n_topics_ + a.get()); }
    [[nodiscard]] std::uint32_t knowledge_coord(ItemId q, TopicId a) const;
    /// Coordinate of the j-th topic cell of item q (ParameterSet::knowledge order).
    [[nodiscard]] std::uint32_t knowledge_cell_coord(ItemId q, std::size_t j) const {
        return knowledge_.at(knowledge_offsets_.at(q.get()) + j);
    }
    [[nodiscard]] const CoordinateCell& cell(std::size_t coord) const { return cells_.at(coord); }

    [[nodiscard]] std::vector<double> pack(const ParameterSet& p) const;
    /// Parameters over d's tables; inactive cells are zero.
    [[nodiscard]] ParameterSet unpack(std::span<const double> theta, const Dataset& d, Kernel kernel) const;

    bool operator==(const ParameterIndex&) const = default;

private:
    std::size_t n_users_{0}, n_topics_{0}, n_items_{0};
    std::size_t n_alpha_{0}, n_mu_{0};
    bool with_knowledge_{true};
    std::vector<std::uint32_t> alpha_, mu_;
    std::vector<std::uint32_t> knowledge_offsets_, knowledge_;
    std::vector<CoordinateCell> cells_;
};

struct SparseEntry {
    std::uint32_t coord;
    double value;
    bool operator==(const SparseEntry&) const = default;
};

/// Linear map theta -> per-contribution Poisson rates.
///
/// Rows are not stored explicitly: the kernel part of a row couples a
/// contribution to every item its author learned from earlier, so the design
/// keeps each user's merged timeline instead and evaluates rates and
/// gradients by forward/backward exponential recursions, O(events) per pass.
/// row() materialises a single row on demand.
class DesignMatrix {
public:
    [[nodiscard]] static DesignMatrix build(const Dataset& d, const Kernel& kernel, const ParameterIndex& idx,
                                            unsigned threads = default_thread_count());

    [[nodiscard]] std::size_t rows() const noexcept { return scores_.size(); }
    [[nodiscard]] std::size_t cols() const noexcept { return n_coords_; }
    [[nodiscard]] std::span<const double> scores() const noexcept { return scores_; }
    [[nodiscard]] const Kernel& kernel() const noexcept { return kernel_; }

    /// Explicit coefficients of row c (contribution c in dataset order), sorted by coordinate.
    [[nodiscard]] std::vector<SparseEntry> row(std::size_t c) const;

    [[nodiscard]] std::vector<double> rates(std::span<const double> theta,
                                            unsigned threads = default_thread_count()) const;

    /// Log-likelihood without the log(s!) constant; fills grad when it is non-empty.
    /// When `floored_rows` is given it receives the number of rows with a
    /// positive score whose rate fell below kRateFloor.
    double evaluate(std::span<const double> theta, std::span<double> grad,
                    unsigned threads = default_thread_count(), std::size_t* floored_rows = nullptr) const;

    /// Sum over rows of the squared coefficient of each column, without
    /// materialising rows.
    [[nodiscard]] std::vector<double> column_square_norms(unsigned threads = default_thread_count()) const;

    /// Binary cache: little-endian arrays behind a magic/version header.
    void save(std::ostream& out, std::uint64_t dataset_hash) const;
    /// Returns nullopt when the header, hash or decay rate does not match.
    [[nodiscard]] static std::optional<DesignMatrix> load(std::istream& in, std::uint64_t dataset_hash, double omega);

    bool operator==(const DesignMatrix&) const = default;

private:
    struct Entry {
        double time;
        std::uint32_t first_term;
        std::uint32_t term_count;
        std::uint32_t row;  // contribution row, or learning-event index
        std::uint32_t is_contribution;
        bool operator==(const Entry&) const = default;
    };
    struct ContribTerm {
        std::uint32_t slot;
        std::uint32_t alpha;
        std::uint32_t mu;
        double coef;  // w_qa / (w_q . 1)
        bool operator==(const ContribTerm&) const = default;
    };
    struct LearnTerm {
        std::uint32_t slot;
        std::uint32_t coord;
        bool operator==(const LearnTerm&) const = default;
    };

    explicit DesignMatrix(Kernel kernel) : kernel_(kernel) {}
    // Fills entry_scores_; false when an entry names a row that does not exist.
    bool index_entry_scores();
    void run_chunk(std::size_t chunk, std::span<const double> theta, std::span<double> entry_rates,
                   std::span<double> grad, std::span<double> knowledge_partial, double& log_lik,
                   std::size_t& floored) const;

    Kernel kernel_;
    std::size_t n_coords_{0};
    std::vector<double> scores_;
    std::vector<std::uint32_t> user_entry_offsets_;   // per design user, into entries_
    std::vector<std::uint32_t> user_slot_counts_;
    std::vector<std::uint32_t> chunk_user_offsets_;   // per chunk, into design users
    std::vector<Entry> entries_;
    std::vector<ContribTerm> contrib_terms_;
    std::vector<LearnTerm> learn_terms_;
    std::vector<std::uint32_t> row_user_;              // design user of each row
    // Scores in timeline order, so evaluation streams through memory instead
    // of jumping between rows.
    std::vector<double> entry_scores_;
};

[[nodiscard]] double log_likelihood(const DesignMatrix& x, std::span<const double> theta,
                                    unsigned threads = default_thread_count());
[[nodiscard]] std::vector<double> gradient(const DesignMatrix& x, std::span<const double> theta,
                                           unsigned threads = default_thread_count());

/// Sum of log(s!) over contributions; add to -log_likelihood for the full NLL.
[[nodiscard]] double log_factorial_constant(const DesignMatrix& x);

} // namespace crowdlearn
