#include "crowdlearn/event_model.hpp"

#include "crowdlearn/errors.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

namespace crowdlearn {

// ---------------------------------------------------------------------------
// TopicSet

TopicSet::TopicSet(std::vector<TopicWeight> weights) {
    std::erase_if(weights, [](const TopicWeight& w) { return !(w.weight > 0.0); });
    std::stable_sort(weights.begin(), weights.end(),
                     [](const TopicWeight& a, const TopicWeight& b) { return a.topic < b.topic; });
    for (const auto& w : weights) {
        if (!weights_.empty() && weights_.back().topic == w.topic) {
            weights_.back().weight += w.weight;
        } else {
            weights_.push_back(w);
        }
    }
    for (const auto& w : weights_) {
        total_ += w.weight;
    }
}

double TopicSet::weight(TopicId topic) const noexcept {
    const auto it = std::lower_bound(weights_.begin(), weights_.end(), topic,
                                     [](const TopicWeight& w, TopicId t) { return w.topic < t; });
    return (it != weights_.end() && it->topic == topic) ? it->weight : 0.0;
}

// ---------------------------------------------------------------------------
// Dataset

namespace {

template <class Event>
void build_user_index(const std::vector<Event>& events, std::size_t n_users,
                      std::vector<std::uint32_t>& offsets, std::vector<std::uint32_t>& index) {
    offsets.assign(n_users + 1, 0);
    for (const auto& e : events) {
        ++offsets[e.user.get() + 1];
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    index.assign(events.size(), 0);
    std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
    for (std::size_t i = 0; i < events.size(); ++i) {
        index[cursor[events[i].user.get()]++] = static_cast<std::uint32_t>(i);
    }
}

template <class Event>
void sort_by_time(std::vector<Event>& events) {
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.time < b.time; });
}

} // namespace

Dataset::Dataset(std::vector<std::string> users,
                 std::vector<std::string> topics,
                 std::vector<Item> items,
                 std::vector<LearningEvent> learning_events,
                 std::vector<Contribution> contributions,
                 double horizon)
    : users_(std::move(users)),
      topics_(std::move(topics)),
      items_(std::move(items)),
      learning_(std::move(learning_events)),
      contributions_(std::move(contributions)),
      horizon_(horizon) {
    if (!std::isfinite(horizon_) || horizon_ < 0.0) {
        throw std::invalid_argument("dataset horizon must be finite and nonnegative");
    }
    for (const auto& item : items_) {
        for (const auto& w : item.topics.entries()) {
            if (w.topic.get() >= topics_.size()) {
                throw std::invalid_argument("item '" + item.id + "' references an unknown topic");
            }
        }
    }
    const auto check = [&](auto user, auto item, double time) {
        if (user.get() >= users_.size() || item.get() >= items_.size()) {
            throw std::invalid_argument("event references an unknown user or item");
        }
        if (!std::isfinite(time)) {
            throw std::invalid_argument("event time must be finite");
        }
    };
    for (const auto& e : learning_) {
        check(e.user, e.item, e.time);
    }
    for (const auto& c : contributions_) {
        check(c.user, c.item, c.time);
        if (!(c.score >= 0.0)) {
            throw std::invalid_argument("contribution scores must be nonnegative");
        }
    }
    sort_by_time(learning_);
    sort_by_time(contributions_);

    build_user_index(learning_, users_.size(), learning_offsets_, learning_index_);
    build_user_index(contributions_, users_.size(), contribution_offsets_, contribution_index_);

    join_time_.assign(users_.size(), horizon_);
    for (const auto& e : learning_) {
        join_time_[e.user.get()] = std::min(join_time_[e.user.get()], e.time);
    }
    for (const auto& c : contributions_) {
        join_time_[c.user.get()] = std::min(join_time_[c.user.get()], c.time);
    }

    for (std::size_t i = 0; i < users_.size(); ++i) {
        user_lookup_.emplace(users_[i], static_cast<std::uint32_t>(i));
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
        item_lookup_.emplace(items_[i].id, static_cast<std::uint32_t>(i));
    }
    for (std::size_t i = 0; i < topics_.size(); ++i) {
        topic_lookup_.emplace(topics_[i], static_cast<std::uint32_t>(i));
    }
}

std::span<const std::uint32_t> Dataset::learning_of(UserId user) const {
    if (user.get() >= users_.size()) {
        throw UnknownUser("user index " + std::to_string(user.get()));
    }
    const auto b = learning_offsets_[user.get()];
    const auto e = learning_offsets_[user.get() + 1];
    return {learning_index_.data() + b, e - b};
}

std::span<const std::uint32_t> Dataset::contributions_of(UserId user) const {
    if (user.get() >= users_.size()) {
        throw UnknownUser("user index " + std::to_string(user.get()));
    }
    const auto b = contribution_offsets_[user.get()];
    const auto e = contribution_offsets_[user.get() + 1];
    return {contribution_index_.data() + b, e - b};
}

std::optional<UserId> Dataset::find_user(std::string_view name) const {
    const auto it = user_lookup_.find(std::string(name));
    if (it == user_lookup_.end()) {
        return std::nullopt;
    }
    return UserId{it->second};
}

std::optional<ItemId> Dataset::find_item(std::string_view name) const {
    const auto it = item_lookup_.find(std::string(name));
    if (it == item_lookup_.end()) {
        return std::nullopt;
    }
    return ItemId{it->second};
}

std::optional<TopicId> Dataset::find_topic(std::string_view name) const {
    const auto it = topic_lookup_.find(std::string(name));
    if (it == topic_lookup_.end()) {
        return std::nullopt;
    }
    return TopicId{it->second};
}

namespace {

class Fnv1a {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 1099511628211ULL;
        }
    }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            const auto b = static_cast<unsigned char>(v >> (8 * i));
            bytes(&b, 1);
        }
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    [[nodiscard]] std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_{14695981039346656037ULL};
};

} // namespace

std::uint64_t fingerprint(const Dataset& d) {
    Fnv1a h;
    h.u64(d.user_count());
    for (const auto& u : d.users()) h.str(u);
    h.u64(d.topic_count());
    for (const auto& t : d.topics()) h.str(t);
    h.u64(d.item_count());
    for (const auto& item : d.items()) {
        h.str(item.id);
        h.u64(item.topics.active_count());
        for (const auto& w : item.topics.entries()) {
            h.u64(w.topic.get());
            h.f64(w.weight);
        }
    }
    h.u64(d.learning_events().size());
    for (const auto& e : d.learning_events()) {
        h.u64(e.user.get());
        h.f64(e.time);
        h.u64(e.item.get());
    }
    h.u64(d.contributions().size());
    for (const auto& c : d.contributions()) {
        h.u64(c.user.get());
        h.f64(c.time);
        h.u64(c.item.get());
        h.f64(c.score);
    }
    h.f64(d.horizon());
    return h.value();
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::ok() const noexcept { return error_count() == 0; }

std::size_t ValidationReport::error_count() const noexcept {
    return dangling_ids.size() + unsorted_events.size() + negative_scores.size() +
           empty_topic_sets.size() + out_of_window.size();
}

ValidationReport validate_dataset(const RawEventLog& raw) {
    ValidationReport report;
    std::unordered_set<std::string> known_items;
    for (const auto& item : raw.catalog) {
        if (item.topics.empty()) {
            report.empty_topic_sets.push_back("item '" + item.id + "' has no topics");
        }
        known_items.insert(item.id);
    }

    double last_learn = -std::numeric_limits<double>::infinity();
    double last_contrib = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < raw.events.size(); ++i) {
        const auto& e = raw.events[i];
        const std::string where = "event " + std::to_string(i);
        if (!known_items.contains(e.item)) {
            report.dangling_ids.push_back(where + " references unknown item '" + e.item + "'");
        }
        if (e.user.empty()) {
            report.dangling_ids.push_back(where + " has an empty user id");
        }
        const bool in_window = std::isfinite(e.time) && e.time >= 0.0 &&
                               (!raw.horizon || e.time < *raw.horizon);
        if (!in_window) {
            std::ostringstream os;
            os << where << " time " << e.time << " outside the observation window";
            report.out_of_window.push_back(os.str());
        }
        double& last = e.kind == EventKind::learn ? last_learn : last_contrib;
        if (e.time < last) {
            report.unsorted_events.push_back(where + " is earlier than the preceding event of its kind");
        }
        last = std::max(last, e.time);
        if (e.kind == EventKind::contribute && !(e.score >= 0.0)) {
            report.negative_scores.push_back(where + " has a negative score");
        }
    }
    return report;
}

Dataset build_dataset(const RawEventLog& raw) {
    const auto report = validate_dataset(raw);
    if (!report.ok()) {
        std::string msg = std::to_string(report.error_count()) + " validation error(s)";
        for (const auto* list : {&report.dangling_ids, &report.unsorted_events, &report.negative_scores,
                                 &report.empty_topic_sets, &report.out_of_window}) {
            if (!list->empty()) {
                msg += "; " + list->front();
            }
        }
        throw FormatError(msg);
    }

    std::vector<std::string> topics;
    std::unordered_map<std::string, std::uint32_t> topic_ids;
    std::vector<Item> items;
    std::unordered_map<std::string, std::uint32_t> item_ids;
    for (const auto& name : raw.topics) {
        if (topic_ids.emplace(name, static_cast<std::uint32_t>(topics.size())).second) topics.push_back(name);
    }
    for (const auto& raw_item : raw.catalog) {
        std::vector<TopicWeight> weights;
        for (const auto& name : raw_item.topics) {
            auto [it, inserted] = topic_ids.emplace(name, static_cast<std::uint32_t>(topics.size()));
            if (inserted) {
                topics.push_back(name);
            }
            weights.push_back({TopicId{it->second}, 1.0});
        }
        item_ids.emplace(raw_item.id, static_cast<std::uint32_t>(items.size()));
        // Repeated tags collapse to a single binary membership.
        std::sort(weights.begin(), weights.end(), [](auto& a, auto& b) { return a.topic < b.topic; });
        weights.erase(std::unique(weights.begin(), weights.end(),
                                  [](auto& a, auto& b) { return a.topic == b.topic; }),
                      weights.end());
        items.push_back({raw_item.id, TopicSet(std::move(weights))});
    }

    std::vector<std::string> users;
    std::unordered_map<std::string, std::uint32_t> user_ids;
    std::vector<LearningEvent> learning;
    std::vector<Contribution> contributions;
    double max_time = 0.0;
    for (const auto& name : raw.users) {
        if (user_ids.emplace(name, static_cast<std::uint32_t>(users.size())).second) users.push_back(name);
    }
    for (const auto& e : raw.events) {
        auto [it, inserted] = user_ids.emplace(e.user, static_cast<std::uint32_t>(users.size()));
        if (inserted) {
            users.push_back(e.user);
        }
        const UserId user{it->second};
        const ItemId item{item_ids.at(e.item)};
        if (e.kind == EventKind::learn) {
            learning.push_back({user, e.time, item});
        } else {
            contributions.push_back({user, e.time, item, e.score});
        }
        max_time = std::max(max_time, e.time);
    }
    // Without an explicit horizon the window closes at the next whole day.
    const double horizon = raw.horizon ? *raw.horizon : std::floor(max_time) + 1.0;
    return Dataset(std::move(users), std::move(topics), std::move(items), std::move(learning),
                   std::move(contributions), horizon);
}

RawEventLog to_raw(const Dataset& d) {
    RawEventLog raw;
    raw.horizon = d.horizon();
    raw.users.assign(d.users().begin(), d.users().end());
    raw.topics.assign(d.topics().begin(), d.topics().end());
    for (const auto& item : d.items()) {
        RawItem r{item.id, {}};
        for (const auto& w : item.topics.entries()) {
            r.topics.push_back(d.topics()[w.topic.get()]);
        }
        raw.catalog.push_back(std::move(r));
    }
    // Merge both kinds by time; learning first on ties keeps the file stable.
    const auto learning = d.learning_events();
    const auto contributions = d.contributions();
    std::size_t i = 0, j = 0;
    while (i < learning.size() || j < contributions.size()) {
        const bool take_learn = j >= contributions.size() ||
                                (i < learning.size() && learning[i].time <= contributions[j].time);
        if (take_learn) {
            const auto& e = learning[i++];
            raw.events.push_back({EventKind::learn, d.user_name(e.user), e.time, d.item(e.item).id, 0.0});
        } else {
            const auto& c = contributions[j++];
            raw.events.push_back({EventKind::contribute, d.user_name(c.user), c.time, d.item(c.item).id, c.score});
        }
    }
    return raw;
}

// ---------------------------------------------------------------------------
// Filtering

std::int64_t calendar_month(double days_since_epoch) {
    using namespace std::chrono;
    const sys_days day{days{static_cast<int>(std::floor(days_since_epoch))}};
    const year_month_day ymd{day};
    return static_cast<std::int64_t>(static_cast<int>(ymd.year())) * 12 +
           static_cast<std::int64_t>(static_cast<unsigned>(ymd.month())) - 1;
}

namespace {

struct FilterState {
    std::vector<bool> topic_kept;
    std::vector<LearningEvent> learning;
    std::vector<Contribution> contributions;
};

// Items restricted to kept topics; items left without topics become unusable.
std::vector<TopicSet> restricted_topic_sets(const Dataset& d, const std::vector<bool>& kept) {
    std::vector<TopicSet> sets;
    sets.reserve(d.item_count());
    for (const auto& item : d.items()) {
        std::vector<TopicWeight> w;
        for (const auto& tw : item.topics.entries()) {
            if (kept[tw.topic.get()]) {
                w.push_back(tw);
            }
        }
        sets.emplace_back(std::move(w));
    }
    return sets;
}

} // namespace

Dataset filter_dataset(const Dataset& d, const FilterConfig& rules) {
    FilterState state;
    state.topic_kept.assign(d.topic_count(), true);
    state.learning.assign(d.learning_events().begin(), d.learning_events().end());
    state.contributions.assign(d.contributions().begin(), d.contributions().end());

    const bool user_rule = rules.min_contributions > 0 || rules.min_active_months > 0;
    std::vector<TopicSet> topic_sets = restricted_topic_sets(d, state.topic_kept);

    for (;;) {
        const std::size_t before_learn = state.learning.size();
        const std::size_t before_contrib = state.contributions.size();
        const std::size_t before_topics = std::count(state.topic_kept.begin(), state.topic_kept.end(), true);

        // (iii) top topics by learning-event count
        if (rules.top_topics > 0 && before_topics > rules.top_topics) {
            std::vector<std::size_t> counts(d.topic_count(), 0);
            for (const auto& e : state.learning) {
                for (const auto& w : topic_sets[e.item.get()].entries()) {
                    ++counts[w.topic.get()];
                }
            }
            std::vector<std::size_t> order;
            for (std::size_t a = 0; a < d.topic_count(); ++a) {
                if (state.topic_kept[a]) order.push_back(a);
            }
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
            std::fill(state.topic_kept.begin(), state.topic_kept.end(), false);
            for (std::size_t r = 0; r < rules.top_topics && r < order.size(); ++r) {
                state.topic_kept[order[r]] = true;
            }
            topic_sets = restricted_topic_sets(d, state.topic_kept);
        }
        const auto usable = [&](ItemId q) { return !topic_sets[q.get()].empty(); };
        std::erase_if(state.learning, [&](const LearningEvent& e) { return !usable(e.item); });
        std::erase_if(state.contributions, [&](const Contribution& c) { return !usable(c.item); });

        // (i) items as learning targets need more than min_learning_events events
        {
            std::vector<std::size_t> counts(d.item_count(), 0);
            for (const auto& e : state.learning) ++counts[e.item.get()];
            std::erase_if(state.learning, [&](const LearningEvent& e) {
                return counts[e.item.get()] <= rules.min_learning_events;
            });
        }

        // (ii) users with enough contributions spread over enough months
        if (user_rule) {
            std::vector<std::size_t> counts(d.user_count(), 0);
            std::vector<std::set<std::int64_t>> months(d.user_count());
            for (const auto& c : state.contributions) {
                ++counts[c.user.get()];
                months[c.user.get()].insert(calendar_month(c.time));
            }
            const auto keep = [&](UserId u) {
                return counts[u.get()] > rules.min_contributions &&
                       months[u.get()].size() >= rules.min_active_months;
            };
            std::erase_if(state.learning, [&](const LearningEvent& e) { return !keep(e.user); });
            std::erase_if(state.contributions, [&](const Contribution& c) { return !keep(c.user); });
        }

        const std::size_t after_topics = std::count(state.topic_kept.begin(), state.topic_kept.end(), true);
        if (state.learning.size() == before_learn && state.contributions.size() == before_contrib &&
            after_topics == before_topics) {
            break;
        }
    }

    if (state.learning.empty() && state.contributions.empty()) {
        throw EmptyResult("no events survive filtering");
    }

    // Compact the tables: kept topics, items with a topic left, users with events.
    std::vector<std::int64_t> topic_map(d.topic_count(), -1);
    std::vector<std::string> topics;
    for (std::size_t a = 0; a < d.topic_count(); ++a) {
        if (state.topic_kept[a]) {
            topic_map[a] = static_cast<std::int64_t>(topics.size());
            topics.push_back(d.topics()[a]);
        }
    }
    std::vector<std::int64_t> item_map(d.item_count(), -1);
    std::vector<Item> items;
    for (std::size_t q = 0; q < d.item_count(); ++q) {
        if (topic_sets[q].empty()) continue;
        std::vector<TopicWeight> w;
        for (const auto& tw : topic_sets[q].entries()) {
            w.push_back({TopicId{static_cast<std::uint32_t>(topic_map[tw.topic.get()])}, tw.weight});
        }
        item_map[q] = static_cast<std::int64_t>(items.size());
        items.push_back({d.items()[q].id, TopicSet(std::move(w))});
    }
    std::vector<bool> user_seen(d.user_count(), false);
    for (const auto& e : state.learning) user_seen[e.user.get()] = true;
    for (const auto& c : state.contributions) user_seen[c.user.get()] = true;
    std::vector<std::int64_t> user_map(d.user_count(), -1);
    std::vector<std::string> users;
    for (std::size_t u = 0; u < d.user_count(); ++u) {
        if (user_seen[u]) {
            user_map[u] = static_cast<std::int64_t>(users.size());
            users.push_back(d.users()[u]);
        }
    }
    for (auto& e : state.learning) {
        e.user = UserId{static_cast<std::uint32_t>(user_map[e.user.get()])};
        e.item = ItemId{static_cast<std::uint32_t>(item_map[e.item.get()])};
    }
    for (auto& c : state.contributions) {
        c.user = UserId{static_cast<std::uint32_t>(user_map[c.user.get()])};
        c.item = ItemId{static_cast<std::uint32_t>(item_map[c.item.get()])};
    }
    return Dataset(std::move(users), std::move(topics), std::move(items), std::move(state.learning),
                   std::move(state.contributions), d.horizon());
}

// ---------------------------------------------------------------------------
// Detrending

Dataset detrend_scores(const Dataset& d, double bin_width_days) {
    if (!(bin_width_days > 0.0)) {
        throw std::invalid_argument("detrend bin width must be positive");
    }
    const auto contributions = d.contributions();
    if (contributions.empty()) {
        return d;
    }
    std::map<std::int64_t, std::pair<double, std::size_t>> bins;
    double total = 0.0;
    for (const auto& c : contributions) {
        auto& [sum, n] = bins[static_cast<std::int64_t>(std::floor(c.time / bin_width_days))];
        sum += c.score;
        ++n;
        total += c.score;
    }
    // Bins whose scores are all zero cannot be rescaled; the others aim at the
    // mean over their own contributions so the score total is preserved.
    std::size_t rescalable = 0;
    for (const auto& [bin, sum_n] : bins) {
        if (sum_n.first > 0.0) rescalable += sum_n.second;
    }
    const double global_mean = rescalable > 0 ? total / static_cast<double>(rescalable) : 0.0;

    std::vector<Contribution> rescaled(contributions.begin(), contributions.end());
    for (auto& c : rescaled) {
        const auto& [sum, n] = bins.at(static_cast<std::int64_t>(std::floor(c.time / bin_width_days)));
        const double bin_mean = sum / static_cast<double>(n);
        if (bin_mean > 0.0) {
            c.score *= global_mean / bin_mean;
        }
    }
    std::vector<Item> items(d.items().begin(), d.items().end());
    return Dataset({d.users().begin(), d.users().end()}, {d.topics().begin(), d.topics().end()},
                   std::move(items), {d.learning_events().begin(), d.learning_events().end()},
                   std::move(rescaled), d.horizon());
}

// ---------------------------------------------------------------------------
// Chronological split

std::pair<Dataset, TestSet> split_train_test(const Dataset& d, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("train fraction must lie strictly between 0 and 1");
    }
    std::vector<bool> contribution_in_train(d.contributions().size(), false);
    std::vector<double> cutoff(d.user_count(), -std::numeric_limits<double>::infinity());
    for (std::size_t u = 0; u < d.user_count(); ++u) {
        const auto mine = d.contributions_of(UserId{u});
        const auto n = mine.size();
        const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n)));
        for (std::size_t j = 0; j < n_train && j < n; ++j) {
            contribution_in_train[mine[j]] = true;
        }
        if (n_train > 0) {
            cutoff[u] = d.contributions()[mine[std::min(n_train, n) - 1]].time;
        }
    }

    std::vector<Contribution> train_contrib;
    TestSet test;
    for (std::size_t i = 0; i < d.contributions().size(); ++i) {
        (contribution_in_train[i] ? train_contrib : test.contributions).push_back(d.contributions()[i]);
    }
    std::vector<LearningEvent> train_learn;
    for (const auto& e : d.learning_events()) {
        (e.time < cutoff[e.user.get()] ? train_learn : test.learning_events).push_back(e);
    }
    std::vector<Item> items(d.items().begin(), d.items().end());
    Dataset train({d.users().begin(), d.users().end()}, {d.topics().begin(), d.topics().end()},
                  std::move(items), std::move(train_learn), std::move(train_contrib), d.horizon());
    return {std::move(train), std::move(test)};
}

Dataset merge_history(const Dataset& train, const TestSet& test) {
    std::vector<LearningEvent> learning(train.learning_events().begin(), train.learning_events().end());
    learning.insert(learning.end(), test.learning_events.begin(), test.learning_events.end());
    std::vector<Contribution> contributions(train.contributions().begin(), train.contributions().end());
    contributions.insert(contributions.end(), test.contributions.begin(), test.contributions.end());
    std::vector<Item> items(train.items().begin(), train.items().end());
    double horizon = train.horizon();
    for (const auto& c : test.contributions) horizon = std::max(horizon, std::nextafter(c.time, INFINITY));
    return Dataset({train.users().begin(), train.users().end()}, {train.topics().begin(), train.topics().end()},
                   std::move(items), std::move(learning), std::move(contributions), horizon);
}

} // namespace crowdlearn
