#pragma once

#include "crowdlearn/ids.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace crowdlearn {

struct TopicWeight {
    TopicId topic;
    double weight{1.0};
};

/// Topic membership of one knowledge item. Entries are sorted by topic and
/// only nonzero weights are stored.
class TopicSet {
public:
    TopicSet() = default;
    explicit TopicSet(std::vector<TopicWeight> weights);

    [[nodiscard]] std::span<const TopicWeight> entries() const noexcept { return weights_; }
    [[nodiscard]] std::size_t active_count() const noexcept { return weights_.size(); }
    [[nodiscard]] bool empty() const noexcept { return weights_.empty(); }
    /// w_q . 1
    [[nodiscard]] double total_weight() const noexcept { return total_; }
    [[nodiscard]] double weight(TopicId topic) const noexcept;
    [[nodiscard]] bool contains(TopicId topic) const noexcept { return weight(topic) > 0.0; }

private:
    std::vector<TopicWeight> weights_;
    double total_{0.0};
};

struct Item {
    std::string id;
    TopicSet topics;
};

struct LearningEvent {
    UserId user;
    double time{0.0};  // days
    ItemId item;
};

struct Contribution {
    UserId user;
    double time{0.0};  // days
    ItemId item;
    double score{0.0};
};

/// Immutable event log over fixed user/topic/item tables. Event lists are
/// kept sorted by time (stable with respect to input order) and indexed per
/// user.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<std::string> users,
            std::vector<std::string> topics,
            std::vector<Item> items,
            std::vector<LearningEvent> learning_events,
            std::vector<Contribution> contributions,
            double horizon);

    [[nodiscard]] std::span<const std::string> users() const noexcept { return users_; }
    [[nodiscard]] std::span<const std::string> topics() const noexcept { return topics_; }
    [[nodiscard]] std::span<const Item> items() const noexcept { return items_; }
    [[nodiscard]] std::span<const LearningEvent> learning_events() const noexcept { return learning_; }
    [[nodiscard]] std::span<const Contribution> contributions() const noexcept { return contributions_; }
    [[nodiscard]] double horizon() const noexcept { return horizon_; }

    [[nodiscard]] std::size_t user_count() const noexcept { return users_.size(); }
    [[nodiscard]] std::size_t topic_count() const noexcept { return topics_.size(); }
    [[nodiscard]] std::size_t item_count() const noexcept { return items_.size(); }

    [[nodiscard]] const Item& item(ItemId id) const { return items_.at(id.get()); }
    [[nodiscard]] const std::string& user_name(UserId id) const { return users_.at(id.get()); }

    /// Time of the user's earliest event; the horizon for users without events.
    [[nodiscard]] double join_time(UserId user) const { return join_time_.at(user.get()); }

    /// Indices into learning_events() / contributions() for one user, in time order.
    [[nodiscard]] std::span<const std::uint32_t> learning_of(UserId user) const;
    [[nodiscard]] std::span<const std::uint32_t> contributions_of(UserId user) const;

    [[nodiscard]] std::optional<UserId> find_user(std::string_view name) const;
    [[nodiscard]] std::optional<ItemId> find_item(std::string_view name) const;
    [[nodiscard]] std::optional<TopicId> find_topic(std::string_view name) const;

private:
    std::vector<std::string> users_;
    std::vector<std::string> topics_;
    std::vector<Item> items_;
    std::vector<LearningEvent> learning_;
    std::vector<Contribution> contributions_;
    double horizon_{0.0};

    std::vector<double> join_time_;
    std::vector<std::uint32_t> learning_offsets_, learning_index_;
    std::vector<std::uint32_t> contribution_offsets_, contribution_index_;
    std::unordered_map<std::string, std::uint32_t> user_lookup_, item_lookup_, topic_lookup_;
};

/// Stable 64-bit fingerprint of a dataset's content (FNV-1a over ids, times,
/// scores and topic weights).
[[nodiscard]] std::uint64_t fingerprint(const Dataset& d);

// ---------------------------------------------------------------------------
// Raw logs and validation

struct RawItem {
    std::string id;
    std::vector<std::string> topics;
};

enum class EventKind { learn, contribute };

struct RawEvent {
    EventKind kind{EventKind::learn};
    std::string user;
    double time{0.0};
    std::string item;
    double score{0.0};
};

/// Event log as read from disk, before ids are resolved.
struct RawEventLog {
    std::vector<RawItem> catalog;
    std::vector<RawEvent> events;
    std::optional<double> horizon;
    // Optional table orders. Listed names come first, in this order; anything
    // else is appended on first appearance. Users listed here are kept even
    // without events.
    std::vector<std::string> users;
    std::vector<std::string> topics;
};

struct ValidationReport {
    std::vector<std::string> dangling_ids;
    std::vector<std::string> unsorted_events;
    std::vector<std::string> negative_scores;
    std::vector<std::string> empty_topic_sets;
    std::vector<std::string> out_of_window;

    [[nodiscard]] bool ok() const noexcept;
    [[nodiscard]] std::size_t error_count() const noexcept;
};

[[nodiscard]] ValidationReport validate_dataset(const RawEventLog& raw);

/// Resolves ids and builds the dataset. Throws Error (FormatError) carrying
/// the first few validation messages when the log is not valid.
[[nodiscard]] Dataset build_dataset(const RawEventLog& raw);

/// Inverse of build_dataset.
[[nodiscard]] RawEventLog to_raw(const Dataset& d);

// ---------------------------------------------------------------------------
// Preprocessing

struct FilterConfig {
    std::size_t min_learning_events{10};  // item kept as a learning target iff count > this
    std::size_t min_contributions{20};    // user kept iff count > this ...
    std::size_t min_active_months{10};    // ... over at least this many calendar months
    std::size_t top_topics{10};           // 0 keeps every topic
};

/// Restricts the dataset per the preprocessing rules, applied as
/// topics -> items -> users and repeated until nothing changes.
/// Throws EmptyResult when no events survive.
[[nodiscard]] Dataset filter_dataset(const Dataset& d, const FilterConfig& rules);

/// UTC calendar month (year * 12 + month - 1) of a time in days since 1970-01-01.
[[nodiscard]] std::int64_t calendar_month(double days_since_epoch);

/// Multiplies every score by mean / bin_mean for its time bin. The mean is taken
/// over bins with a positive mean (all-zero bins stay as they are), which keeps
/// the score total unchanged.
[[nodiscard]] Dataset detrend_scores(const Dataset& d, double bin_width_days = 30.0);

/// Held-out part of a chronological split. Indices refer to the train
/// dataset's tables.
struct TestSet {
    std::vector<Contribution> contributions;
    std::vector<LearningEvent> learning_events;
};

[[nodiscard]] std::pair<Dataset, TestSet> split_train_test(const Dataset& d, double train_fraction);

/// Dataset with the train tables and all learning events of train and test;
/// used to evaluate expertise at test time.
[[nodiscard]] Dataset merge_history(const Dataset& train, const TestSet& test);

} // namespace crowdlearn
