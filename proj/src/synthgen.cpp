#include "crowdlearn/synthgen.hpp"

#include "crowdlearn/errors.hpp"
#include "crowdlearn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace crowdlearn {

void SynthConfig::validate() const {
    const auto range_ok = [](const UniformRange& r) { return r.low >= 0.0 && r.high >= r.low && std::isfinite(r.high); };
    if (n_users == 0 || n_items == 0 || n_topics == 0 || max_topics_per_item == 0) {
        throw ConfigInvalid("users, items, topics and topics per item must be positive");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw ConfigInvalid("horizon must be positive");
    }
    if (!range_ok(mu_range) || !range_ok(alpha_range)) {
        throw ConfigInvalid("parameter ranges must be nonnegative and ordered");
    }
    if (!(knowledge_scale >= 0.0) || !(knowledge_log_sigma >= 0.0)) {
        throw ConfigInvalid("knowledge scale and shape must be nonnegative");
    }
    if (!(omega > 0.0) || !std::isfinite(omega)) {
        throw ConfigInvalid("omega must be positive");
    }
    if (!(learning_log_sd >= 0.0) || !std::isfinite(learning_log_mean)) {
        throw ConfigInvalid("learning-count log-normal parameters are invalid");
    }
    if (contribution_count_range.low < 0 || contribution_count_range.high < contribution_count_range.low) {
        throw ConfigInvalid("contribution count range must be nonnegative and ordered");
    }
    if (!topic_count_weights.empty()) {
        double within = 0.0;
        for (std::size_t i = 0; i < topic_count_weights.size(); ++i) {
            if (!(topic_count_weights[i] >= 0.0) || !std::isfinite(topic_count_weights[i])) {
                throw ConfigInvalid("topic-count weights must be finite and nonnegative");
            }
            if (i < std::min(max_topics_per_item, n_topics)) within += topic_count_weights[i];
        }
        if (!(within > 0.0)) {
            throw ConfigInvalid("topic-count weights put no mass on a feasible size");
        }
    }
    if (!(topic_propensity_decay > 0.0 && topic_propensity_decay <= 1.0)) {
        throw ConfigInvalid("topic propensity decay must lie in (0, 1]");
    }
}

SynthConfig benchmark_config(std::size_t n_topics, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_users = 100;
    cfg.n_items = 850;
    cfg.n_topics = n_topics;
    cfg.max_topics_per_item = 3;
    cfg.horizon = 100.0;
    cfg.mu_range = {0.0, 5.0 / 365.0};  // U(0, 5) per year
    cfg.alpha_range = {0.0, 1.0};
    cfg.knowledge_scale = 0.05;
    cfg.knowledge_log_sigma = 1.0;
    cfg.omega = 1.0 / 11.6;
    cfg.learning_log_mean = 4.4;
    cfg.learning_log_sd = 1.0;
    cfg.contribution_count_range = {1500, 3600};
    cfg.topic_count_weights = {0.9, 0.08, 0.02};
    cfg.topic_propensity_decay = 0.7;
    cfg.min_learning_events_per_item = 10;
    cfg.target_learning_events = 13500;
    cfg.target_contributions = 255000;
    cfg.seed = seed;
    return cfg;
}

namespace {

// Splits `total` proportionally to `weights`, largest remainder first.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> counts(weights.size(), 0);
    if (!(sum > 0.0)) {
        return counts;
    }
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(total) * weights[i] / sum;
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[i];
        remainders.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < total && r < remainders.size(); ++r, ++assigned) {
        ++counts[remainders[r].second];
    }
    return counts;
}

std::vector<double> sorted_uniform_times(std::size_t n, double horizon, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> when(0.0, horizon);
    std::vector<double> times(n);
    for (auto& t : times) t = when(rng);
    std::sort(times.begin(), times.end());
    return times;
}

} // namespace

SyntheticData generate(const SynthConfig& cfg) {
    cfg.validate();
    const Kernel kernel(cfg.omega);
    const std::size_t n_topics = cfg.n_topics;

    std::vector<std::string> users, topics;
    for (std::size_t u = 0; u < cfg.n_users; ++u) users.push_back("u" + std::to_string(u));
    for (std::size_t a = 0; a < n_topics; ++a) topics.push_back("tag" + std::to_string(a));

    // Item topic sets, uniformly without replacement.
    std::vector<Item> items;
    std::vector<std::vector<std::size_t>> items_with_topic(n_topics);
    {
        auto rng = substream(cfg.seed, "items");
        const std::size_t max_size = std::min(cfg.max_topics_per_item, n_topics);
        std::vector<double> size_weights(max_size, 1.0);
        if (!cfg.topic_count_weights.empty()) {
            size_weights.assign(max_size, 0.0);
            for (std::size_t i = 0; i < std::min(max_size, cfg.topic_count_weights.size()); ++i) {
                size_weights[i] = cfg.topic_count_weights[i];
            }
        }
        std::discrete_distribution<std::size_t> size_dist(size_weights.begin(), size_weights.end());
        std::vector<std::size_t> pool(n_topics);
        for (std::size_t q = 0; q < cfg.n_items; ++q) {
            std::iota(pool.begin(), pool.end(), std::size_t{0});
            const std::size_t k = size_dist(rng) + 1;
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, n_topics - 1);
                std::swap(pool[i], pool[pick(rng)]);
            }
            std::vector<TopicWeight> w;
            for (std::size_t i = 0; i < k; ++i) {
                w.push_back({TopicId{pool[i]}, 1.0});
                items_with_topic[pool[i]].push_back(q);
            }
            items.push_back({"q" + std::to_string(q), TopicSet(std::move(w))});
        }
    }

    // Per-user event counts.
    std::vector<std::size_t> n_learn(cfg.n_users), n_contrib(cfg.n_users);
    {
        auto rng = substream(cfg.seed, "counts");
        std::lognormal_distribution<double> learn_dist(cfg.learning_log_mean, cfg.learning_log_sd);
        std::uniform_int_distribution<std::int64_t> contrib_dist(cfg.contribution_count_range.low,
                                                                 cfg.contribution_count_range.high);
        std::vector<double> lw(cfg.n_users), cw(cfg.n_users);
        for (std::size_t u = 0; u < cfg.n_users; ++u) {
            lw[u] = learn_dist(rng);
            cw[u] = static_cast<double>(contrib_dist(rng));
        }
        if (cfg.target_learning_events > 0) {
            n_learn = apportion(cfg.target_learning_events, lw);
        } else {
            for (std::size_t u = 0; u < cfg.n_users; ++u) n_learn[u] = static_cast<std::size_t>(std::llround(lw[u]));
        }
        if (cfg.target_contributions > 0) {
            n_contrib = apportion(cfg.target_contributions, cw);
        } else {
            for (std::size_t u = 0; u < cfg.n_users; ++u) n_contrib[u] = static_cast<std::size_t>(cw[u]);
        }
    }

    // Per-user topic propensity over a shuffled ranking; topics without items get no mass.
    std::vector<std::discrete_distribution<std::size_t>> propensity;
    {
        auto rng = substream(cfg.seed, "propensity");
        std::vector<std::size_t> ranking(n_topics);
        for (std::size_t u = 0; u < cfg.n_users; ++u) {
            std::iota(ranking.begin(), ranking.end(), std::size_t{0});
            std::shuffle(ranking.begin(), ranking.end(), rng);
            std::vector<double> weight(n_topics, 0.0);
            for (std::size_t r = 0; r < n_topics; ++r) {
                if (!items_with_topic[ranking[r]].empty()) {
                    weight[ranking[r]] = std::pow(cfg.topic_propensity_decay, static_cast<double>(r));
                }
            }
            propensity.emplace_back(weight.begin(), weight.end());
        }
    }
    const auto pick_item = [&](std::size_t u, std::mt19937_64& rng) {
        const std::size_t topic = propensity[u](rng);
        const auto& pool = items_with_topic[topic];
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        return pool[pick(rng)];
    };

    // Learning events, then the per-item minimum.
    std::vector<LearningEvent> learning;
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        auto rng = substream(cfg.seed, "learn/" + users[u]);
        for (const double t : sorted_uniform_times(n_learn[u], cfg.horizon, rng)) {
            learning.push_back({UserId{u}, t, ItemId{pick_item(u, rng)}});
        }
    }
    {
        std::vector<std::size_t> per_item(cfg.n_items, 0);
        for (const auto& e : learning) ++per_item[e.item.get()];
        std::erase_if(learning, [&](const LearningEvent& e) {
            return per_item[e.item.get()] < cfg.min_learning_events_per_item;
        });
    }

    // Ground truth.
    Dataset skeleton(users, topics, items, {}, {}, cfg.horizon);
    auto truth = ParameterSet::zeros(skeleton, kernel);
    {
        auto rng = substream(cfg.seed, "truth");
        std::uniform_real_distribution<double> alpha_dist(cfg.alpha_range.low, cfg.alpha_range.high);
        std::uniform_real_distribution<double> mu_dist(cfg.mu_range.low, cfg.mu_range.high);
        std::lognormal_distribution<double> k_dist(0.0, cfg.knowledge_log_sigma);
        for (std::size_t u = 0; u < cfg.n_users; ++u) {
            for (std::size_t a = 0; a < n_topics; ++a) {
                truth.alpha(u, a) = alpha_dist(rng);
                truth.mu(u, a) = mu_dist(rng);
            }
        }
        for (auto& cells : truth.knowledge) {
            for (auto& cell : cells) cell.value = cfg.knowledge_scale * k_dist(rng);
        }
    }

    // Contributions with Poisson scores from the true expertise.
    std::vector<std::vector<const LearningEvent*>> learning_by_user(cfg.n_users);
    for (const auto& e : learning) learning_by_user[e.user.get()].push_back(&e);
    std::vector<Contribution> contributions;
    contributions.reserve(std::accumulate(n_contrib.begin(), n_contrib.end(), std::size_t{0}));
    std::vector<double> onsite(n_topics);
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        auto rng = substream(cfg.seed, "contribute/" + users[u]);
        const auto times = sorted_uniform_times(n_contrib[u], cfg.horizon, rng);
        std::vector<ItemId> chosen;
        chosen.reserve(times.size());
        for (std::size_t j = 0; j < times.size(); ++j) chosen.push_back(ItemId{pick_item(u, rng)});

        std::fill(onsite.begin(), onsite.end(), 0.0);
        double onsite_time = 0.0;
        std::size_t next_learn = 0;
        const auto& history = learning_by_user[u];
        for (std::size_t j = 0; j < times.size(); ++j) {
            const double t = times[j];
            while (next_learn < history.size() && history[next_learn]->time < t) {
                const auto* e = history[next_learn++];
                const double decay = std::exp(-cfg.omega * (e->time - onsite_time));
                for (auto& v : onsite) v *= decay;
                onsite_time = e->time;
                for (const auto& cell : truth.knowledge[e->item.get()]) onsite[cell.topic.get()] += cell.value;
            }
            const double decay = std::exp(-cfg.omega * (t - onsite_time));
            const auto& topic_set = items[chosen[j].get()].topics;
            double rate = 0.0;
            for (const auto& w : topic_set.entries()) {
                const auto a = w.topic.get();
                rate += w.weight * (truth.alpha(u, a) + truth.mu(u, a) * t + onsite[a] * decay);
            }
            rate /= topic_set.total_weight();
            contributions.push_back({UserId{u}, t, chosen[j], static_cast<double>(sample_score(rate, rng))});
        }
    }

    Dataset dataset(std::move(users), std::move(topics), std::move(items), std::move(learning),
                    std::move(contributions), cfg.horizon);
    return {std::move(dataset), std::move(truth)};
}

} // namespace crowdlearn
