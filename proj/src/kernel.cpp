#include "crowdlearn/kernel.hpp"

#include "crowdlearn/errors.hpp"

#include <algorithm>

namespace crowdlearn {

ParameterSet ParameterSet::zeros(const Dataset& d, Kernel kernel) {
    ParameterSet p;
    p.users.assign(d.users().begin(), d.users().end());
    p.topics.assign(d.topics().begin(), d.topics().end());
    p.alpha = DenseMatrix(d.user_count(), d.topic_count());
    p.mu = DenseMatrix(d.user_count(), d.topic_count());
    p.items.reserve(d.item_count());
    p.knowledge.reserve(d.item_count());
    for (const auto& item : d.items()) {
        p.items.push_back(item.id);
        std::vector<KnowledgeCell> cells;
        for (const auto& w : item.topics.entries()) {
            cells.push_back({w.topic, 0.0});
        }
        p.knowledge.push_back(std::move(cells));
    }
    p.kernel = kernel;
    return p;
}

double ParameterSet::knowledge_of(ItemId item, TopicId topic) const noexcept {
    if (item.get() >= knowledge.size()) {
        return 0.0;
    }
    for (const auto& cell : knowledge[item.get()]) {
        if (cell.topic == topic) {
            return cell.value;
        }
    }
    return 0.0;
}

double ParameterSet::item_knowledge(ItemId item) const {
    double total = 0.0;
    for (const auto& cell : knowledge.at(item.get())) {
        total += cell.value;
    }
    return total;
}

void ParameterSet::check_invariants() const {
    if (alpha.rows() != users.size() || alpha.cols() != topics.size() || mu.rows() != users.size() ||
        mu.cols() != topics.size() || knowledge.size() != items.size()) {
        throw std::invalid_argument("parameter set shapes disagree with its tables");
    }
    const auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!std::all_of(alpha.data().begin(), alpha.data().end(), nonneg) ||
        !std::all_of(mu.data().begin(), mu.data().end(), nonneg)) {
        throw std::invalid_argument("alpha and mu must be finite and nonnegative");
    }
    for (const auto& cells : knowledge) {
        for (const auto& cell : cells) {
            if (!nonneg(cell.value) || cell.topic.get() >= topics.size()) {
                throw std::invalid_argument("knowledge values must be finite, nonnegative and on known topics");
            }
        }
    }
}

std::vector<double> expertise(const ParameterSet& p, UserId user, const Dataset& d, double t) {
    if (user.get() >= d.user_count() || user.get() >= p.alpha.rows()) {
        throw UnknownUser("user index " + std::to_string(user.get()));
    }
    const std::size_t n_topics = p.topics.size();
    std::vector<double> e(n_topics);
    for (std::size_t a = 0; a < n_topics; ++a) {
        e[a] = p.alpha(user.get(), a) + p.mu(user.get(), a) * t;
    }
    const auto events = d.learning_events();
    for (const auto idx : d.learning_of(user)) {
        const auto& ev = events[idx];
        if (!(ev.time < t)) {
            break;  // per-user lists are time-sorted
        }
        const double decay = p.kernel(t - ev.time);
        for (const auto& cell : p.knowledge.at(ev.item.get())) {
            e[cell.topic.get()] += cell.value * decay;
        }
    }
    return e;
}

std::vector<double> expertise(const ParameterSet& p, std::string_view user, const Dataset& d, double t) {
    const auto id = d.find_user(user);
    if (!id) {
        throw UnknownUser(std::string(user));
    }
    return expertise(p, *id, d, t);
}

double contribution_rate(const ParameterSet& p, const Contribution& c, const Dataset& d) {
    const auto& topics = d.item(c.item).topics;
    if (topics.empty()) {
        throw std::invalid_argument("contribution item has no topics");
    }
    const auto e = expertise(p, c.user, d, c.time);
    double weighted = 0.0;
    for (const auto& w : topics.entries()) {
        weighted += w.weight * e[w.topic.get()];
    }
    return weighted / topics.total_weight();
}

double score_log_pmf(double rate, double score) {
    if (!(rate >= 0.0) || !(score >= 0.0)) {
        throw std::invalid_argument("rate and score must be nonnegative");
    }
    const double log_term = score > 0.0 ? score * std::log(std::max(rate, kRateFloor)) : 0.0;
    return log_term - rate - std::lgamma(score + 1.0);
}

std::int64_t sample_score(double rate, std::mt19937_64& rng) {
    if (!(rate >= 0.0) || !std::isfinite(rate)) {
        throw std::invalid_argument("Poisson rate must be finite and nonnegative");
    }
    if (rate == 0.0) {
        return 0;
    }
    std::poisson_distribution<std::int64_t> dist(rate);
    return dist(rng);
}

} // namespace crowdlearn
