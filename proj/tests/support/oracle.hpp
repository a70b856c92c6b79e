#pragma once

// Reference implementations used to cross-check the library. Everything here
// is written the slow, obvious way on purpose.

#include "crowdlearn/event_model.hpp"
#include "crowdlearn/kernel.hpp"
#include "crowdlearn/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using namespace crowdlearn;

struct RandomShape {
    std::size_t max_users{4};
    std::size_t max_topics{3};
    std::size_t max_items{5};
    std::size_t max_events{100};  // learning + contributions
    double horizon{30.0};
    bool weighted_topics{false};
};

// Times sit on a quarter-day grid so learning and contributing at the same
// instant happens regularly.
inline Dataset random_dataset(std::mt19937_64& rng, const RandomShape& shape = {}) {
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    const std::size_t n_users = pick(1, shape.max_users);
    const std::size_t n_topics = pick(1, shape.max_topics);
    const std::size_t n_items = pick(1, shape.max_items);

    std::vector<std::string> users, topics;
    for (std::size_t u = 0; u < n_users; ++u) users.push_back("u" + std::to_string(u));
    for (std::size_t a = 0; a < n_topics; ++a) topics.push_back("t" + std::to_string(a));

    std::uniform_real_distribution<double> weight(0.2, 2.0);
    std::vector<Item> items;
    for (std::size_t q = 0; q < n_items; ++q) {
        std::vector<TopicWeight> ws;
        for (std::size_t a = 0; a < n_topics; ++a) {
            if (std::bernoulli_distribution(0.5)(rng)) ws.push_back({TopicId{a}, shape.weighted_topics ? weight(rng) : 1.0});
        }
        if (ws.empty()) ws.push_back({TopicId{pick(0, n_topics - 1)}, 1.0});
        items.push_back({"q" + std::to_string(q), TopicSet(std::move(ws))});
    }

    const std::size_t n_events = pick(2, shape.max_events);
    const auto steps = static_cast<std::size_t>(shape.horizon * 4.0);
    std::vector<LearningEvent> learning;
    std::vector<Contribution> contributions;
    for (std::size_t e = 0; e < n_events; ++e) {
        const UserId u{pick(0, n_users - 1)};
        const ItemId q{pick(0, n_items - 1)};
        const double t = static_cast<double>(pick(0, steps)) / 4.0;
        if (e == 0 || (e > 1 && std::bernoulli_distribution(0.4)(rng))) {
            learning.push_back({u, t, q});
        } else {
            contributions.push_back({u, t, q, static_cast<double>(pick(0, 6))});
        }
    }
    return Dataset(users, topics, items, learning, contributions, shape.horizon);
}

// Every cell of the parameter set filled, including cells the estimator
// would prune.
inline ParameterSet random_parameters(const Dataset& d, std::mt19937_64& rng, double lo, double hi,
                                      double omega) {
    std::uniform_real_distribution<double> v(lo, hi);
    auto p = ParameterSet::zeros(d, Kernel(omega));
    for (std::size_t u = 0; u < d.user_count(); ++u) {
        for (std::size_t a = 0; a < d.topic_count(); ++a) {
            p.alpha(u, a) = v(rng);
            p.mu(u, a) = v(rng) / 10.0;
        }
    }
    for (auto& cells : p.knowledge) {
        for (auto& c : cells) c.value = v(rng);
    }
    return p;
}

// Scans the whole learning log rather than the per-user index. Real may be
// long double when the result feeds a finite difference.
template <class Real = double>
std::vector<Real> expertise(const ParameterSet& p, const Dataset& d, UserId u, double t) {
    std::vector<Real> e(d.topic_count());
    for (std::size_t a = 0; a < e.size(); ++a) e[a] = Real(p.alpha(u.get(), a)) + Real(p.mu(u.get(), a)) * Real(t);
    const Real omega = p.kernel.omega();
    for (const auto& ev : d.learning_events()) {
        if (ev.user != u || !(ev.time < t)) continue;
        for (const auto& cell : p.knowledge[ev.item.get()]) {
            e[cell.topic.get()] += Real(cell.value) * std::exp(-omega * (Real(t) - Real(ev.time)));
        }
    }
    return e;
}

template <class Real = double>
Real rate(const ParameterSet& p, const Dataset& d, const Contribution& c) {
    const auto e = expertise<Real>(p, d, c.user, c.time);
    Real num = 0, den = 0;
    for (const auto& w : d.item(c.item).topics.entries()) {
        num += Real(w.weight) * e[w.topic.get()];
        den += Real(w.weight);
    }
    return num / den;
}

// Log-likelihood without the log(s!) constant.
template <class Real = double>
Real log_likelihood(const ParameterSet& p, const Dataset& d) {
    Real ll = 0;
    for (const auto& c : d.contributions()) {
        const Real lambda = rate<Real>(p, d, c);
        ll += Real(c.score) * std::log(std::max(lambda, Real(kRateFloor))) - lambda;
    }
    return ll;
}

// d/d theta_j of the brute-force log-likelihood, five-point stencil in long
// double so rounding stays far below the truncation error.
inline double numeric_partial(const ParameterIndex& idx, const Dataset& d, const Kernel& kernel,
                              std::vector<double> theta, std::size_t j) {
    const double x = theta[j];
    const double h = 1e-3 * std::max(1.0, std::abs(x));
    const auto at = [&](double v) {
        theta[j] = v;
        return log_likelihood<long double>(idx.unpack(theta, d, kernel), d);
    };
    const long double num = -at(x + 2 * h) + 8 * at(x + h) - 8 * at(x - h) + at(x - 2 * h);
    return static_cast<double>(num / (12.0L * h));
}

inline double relative_error(double got, double want) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-300});
}

} // namespace oracle
