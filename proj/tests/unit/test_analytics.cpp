#include "../support/builder.hpp"

#include "crowdlearn/analytics.hpp"
#include "crowdlearn/errors.hpp"
#include "crowdlearn/synthgen.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

using namespace crowdlearn;
using fixture::Builder;

namespace {

const Kernel week = Kernel::from_half_life(7.0);

// u learns q at 3 and r at 6 and contributes; v only contributes.
Dataset two_users() {
    Builder b;
    b.item("q", {"a"}).item("r", {"a", "b"}).item("s", {"b"});
    b.learn("u", 3.0, "q").learn("u", 6.0, "r");
    b.contribute("u", 8.0, "s", 1).contribute("v", 9.0, "s", 3).contribute("v", 9.5, "q", 0);
    b.horizon(20.0);
    return b.build();
}

} // namespace

TEST_SUITE("analytics") {

TEST_CASE("nothing learned, nothing drifted") {
    const auto d = two_users();
    const auto rows = onsite_offsite(ParameterSet::zeros(d, week), d, 20.0);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        CHECK(r.onsite == 0.0);
        CHECK(r.offsite == 0.0);
        CHECK(r.total == 0.0);
    }
}

TEST_CASE("on-site part of a single event integrates the kernel") {
    Builder b;
    b.item("q", {"a"}).learn("u", 3.0, "q").horizon(20.0);
    const auto d = b.build();
    auto p = ParameterSet::zeros(d, week);
    p.knowledge[0][0].value = 2.0;
    const double w = week.omega();
    const auto rows = onsite_offsite(p, d, 20.0);
    CHECK(rows[0].onsite == doctest::Approx(2.0 * (1.0 - std::exp(-w * 17.0)) / w).epsilon(1e-14));
    // full kernel mass
    CHECK(onsite_offsite(p, d, 1e6)[0].onsite == doctest::Approx(2.0 / w).epsilon(1e-14));
    // events at or after the horizon have not happened yet
    CHECK(onsite_offsite(p, d, 3.0)[0].onsite == 0.0);
}

TEST_CASE("off-site readings") {
    const auto d = two_users();
    auto p = ParameterSet::zeros(d, week);
    p.mu(0, 0) = 0.01;
    p.mu(0, 1) = 0.03;
    p.knowledge[0][0].value = 1.5;
    CHECK(onsite_offsite(p, d, 20.0)[0].offsite == doctest::Approx(0.04 * 200.0));
    CHECK(onsite_offsite(p, d, 20.0, OffsiteReading::growth)[0].offsite == doctest::Approx(0.04 * 20.0));
    for (const auto& r : onsite_offsite(p, d, 20.0)) {
        CHECK(r.onsite >= 0.0);
        CHECK(r.offsite >= 0.0);
        CHECK(r.total == r.onsite + r.offsite);
    }
}

TEST_CASE("knowledge distribution of all-zero parameters") {
    const auto d = two_users();
    const auto s = knowledge_distribution(ParameterSet::zeros(d, week));
    CHECK(s.zero_fraction == 1.0);
    CHECK(s.top_decile_share == 0.0);
    CHECK(s.bin_counts.empty());
}

TEST_CASE("top decile share and zero fraction") {
    Builder b;
    for (int q = 0; q < 10; ++q) b.item("q" + std::to_string(q), {"a"});
    b.learn("u", 0.0, "q0").horizon(1.0);
    const auto d = b.build();
    auto p = ParameterSet::zeros(d, week);
    p.knowledge[0][0].value = 9.0;
    for (int q = 1; q < 7; ++q) p.knowledge[static_cast<std::size_t>(q)][0].value = 1.0 / 6.0;
    const auto s = knowledge_distribution(p, kDefaultZeroThreshold, 4);
    CHECK(s.top_decile_share == doctest::Approx(0.9));
    CHECK(s.zero_fraction == doctest::Approx(0.3));
    REQUIRE(s.bin_counts.size() == 4);
    CHECK(s.bin_edges.size() == 5);
    std::size_t binned = 0;
    for (const auto c : s.bin_counts) binned += c;
    CHECK(binned == 7);
    CHECK(s.bin_counts.front() == 6);
    CHECK(s.bin_counts.back() == 1);
}

TEST_CASE("log-normal shape of generated knowledge values") {
    SynthConfig cfg;
    cfg.n_users = 50;
    cfg.n_items = 10000;
    cfg.n_topics = 1;
    cfg.max_topics_per_item = 1;
    cfg.horizon = 100.0;
    cfg.contribution_count_range = {5, 10};
    cfg.learning_log_mean = 2.0;
    cfg.min_learning_events_per_item = 0;
    cfg.seed = 12;
    const auto g = generate(cfg);
    const auto s = knowledge_distribution(g.truth, 0.0);
    CHECK(s.lognormal.n == 10000);
    CHECK(std::abs(s.lognormal.log_sd - 1.0) <= 0.15);
    CHECK(std::abs(s.lognormal.log_mean - std::log(0.05)) <= 0.05);
}

TEST_CASE("log-normal fit by moments") {
    const auto f = fit_lognormal({std::exp(1.0), std::exp(3.0), 0.0, -2.0});
    CHECK(f.n == 2);
    CHECK(f.log_mean == doctest::Approx(2.0));
    CHECK(f.log_sd == doctest::Approx(1.0));
    CHECK(fit_lognormal({}).n == 0);
}

TEST_CASE("power-law exponent from Pareto draws") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> xs(100000);
    for (auto& x : xs) x = 2.0 * std::pow(1.0 - unit(rng), -1.0 / 1.5);  // exponent 2.5, x_min 2
    const auto f = fit_power_law(xs);
    CHECK(f.x_min == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(f.n_tail == xs.size());
    // standard error is (a - 1) / sqrt(n)
    CHECK(std::abs(f.exponent - 2.5) <= 3.0 * 1.5 / std::sqrt(1e5));

    xs.push_back(0.5);
    const auto fixed = fit_power_law(xs, 4.0);
    CHECK(fixed.x_min == 4.0);
    CHECK(fixed.n_tail < xs.size());
    CHECK(std::abs(fixed.exponent - 2.5) <= 0.05);
    CHECK(fit_power_law({0.0, -1.0}).n_tail == 0);
}

TEST_CASE("useful upvote fractions") {
    Builder b;
    for (int q = 0; q < 5; ++q) b.item("q" + std::to_string(q), {"a"});
    for (int q = 0; q < 5; ++q) b.learn("u", q, "q" + std::to_string(q));
    b.contribute("idle", 1.0, "q0", 1).horizon(10.0);
    const auto d = b.build();
    auto p = ParameterSet::zeros(d, week);

    auto r = useful_upvote_fraction(p, d);
    REQUIRE(r.fractions.size() == 1);
    CHECK(r.fractions[0].second == 0.0);
    CHECK(r.users_without_learning == 1);

    for (std::size_t q : {0u, 2u, 4u}) p.knowledge[q][0].value = 0.5;
    r = useful_upvote_fraction(p, d);
    CHECK(r.fractions[0].second == doctest::Approx(0.6));

    for (auto& cells : p.knowledge) cells[0].value = 1.0;
    CHECK(useful_upvote_fraction(p, d).fractions[0].second == 1.0);
}

TEST_CASE("contribution shares follow scores") {
    Builder b;
    b.item("q", {"a", "b"}).item("zero", {"a"}).item("solo", {"b"});
    b.learn("u", 0.0, "q").learn("v", 0.5, "solo");
    b.contribute("u", 1.0, "q", 1).contribute("v", 2.0, "q", 3);
    b.contribute("u", 1.0, "zero", 0).contribute("v", 2.0, "zero", 0);
    b.contribute("w", 3.0, "solo", 2);
    b.horizon(5.0);
    const auto d = b.build();
    auto p = ParameterSet::zeros(d, week);
    p.knowledge[fixture::item(d, "q").get()][0].value = 1.5;
    p.knowledge[fixture::item(d, "q").get()][1].value = 2.5;
    p.knowledge[fixture::item(d, "zero").get()][0].value = 1.0;
    p.knowledge[fixture::item(d, "solo").get()][0].value = 0.7;

    const auto c = contribution_knowledge(p, d);
    std::map<std::pair<std::string, std::string>, double> share;
    for (std::size_t j = 0; j < d.contributions().size(); ++j) {
        const auto& x = d.contributions()[j];
        share[{d.user_name(x.user), d.item(x.item).id}] = c.shares[j];
    }
    CHECK(share[{"u", "q"}] == doctest::Approx(1.0));
    CHECK(share[{"v", "q"}] == doctest::Approx(3.0));
    CHECK(share[{"u", "zero"}] == doctest::Approx(0.5));
    CHECK(share[{"v", "zero"}] == doctest::Approx(0.5));
    CHECK(share[{"w", "solo"}] == doctest::Approx(0.7));

    CHECK(c.contributed[fixture::user(d, "v").get()] == doctest::Approx(3.5));
    CHECK(c.learned[fixture::user(d, "u").get()] == doctest::Approx(4.0));
    CHECK(c.learned[fixture::user(d, "v").get()] == doctest::Approx(0.7));
    CHECK(c.learned[fixture::user(d, "w").get()] == 0.0);
}

TEST_CASE("contribution shares conserve each item's knowledge") {
    SynthConfig cfg;
    cfg.n_users = 30;
    cfg.n_items = 50;
    cfg.n_topics = 3;
    cfg.contribution_count_range = {10, 40};
    cfg.learning_log_mean = 2.5;
    cfg.min_learning_events_per_item = 0;
    cfg.seed = 21;
    const auto g = generate(cfg);
    const auto& d = g.dataset;
    const auto c = contribution_knowledge(g.truth, d);
    std::vector<double> per_item(d.item_count(), 0.0);
    std::vector<bool> seen(d.item_count(), false);
    for (std::size_t j = 0; j < c.shares.size(); ++j) {
        per_item[d.contributions()[j].item.get()] += c.shares[j];
        seen[d.contributions()[j].item.get()] = true;
    }
    for (std::size_t q = 0; q < d.item_count(); ++q) {
        if (!seen[q]) continue;
        const double k = g.truth.item_knowledge(ItemId{q});
        CHECK(std::abs(per_item[q] - k) <= 1e-12 * k);
    }
}

TEST_CASE("trajectory basics") {
    const auto d = two_users();
    auto p = ParameterSet::zeros(d, week);
    p.alpha(1, 0) = 0.4;
    p.alpha(1, 1) = 0.9;
    p.mu(1, 0) = 0.05;
    p.knowledge[0][0].value = 3.0;

    const auto at_zero = learning_trajectory(p, d, "v", {0.0});
    REQUIRE(at_zero.points.size() == 1);
    CHECK(at_zero.points[0].expertise[0] == 0.4);
    CHECK(at_zero.points[0].expertise[1] == 0.9);

    // v never learns: straight line
    const auto line = learning_trajectory(p, d, "v", {0.0, 5.0, 10.0, 15.0});
    for (std::size_t i = 0; i < line.points.size(); ++i) {
        CHECK(line.points[i].expertise[0] == doctest::Approx(0.4 + 0.05 * line.points[i].time));
    }

    // u is purely on-site
    CHECK(learning_trajectory(p, d, "u", {1.0}).onsite_share == 1.0);
    CHECK(learning_trajectory(ParameterSet::zeros(d, week), d, "u", {1.0}).onsite_share == 0.0);
    CHECK_THROWS_AS((void)learning_trajectory(p, d, "nobody", {1.0}), UnknownUser);
}

TEST_CASE("trajectory jumps by the item's knowledge at a learning event") {
    const auto d = two_users();
    auto p = ParameterSet::zeros(d, week);
    p.alpha(0, 0) = 0.2;
    p.mu(0, 1) = 0.1;
    p.knowledge[0][0].value = 3.0;
    p.knowledge[1][0].value = 0.6;
    p.knowledge[1][1].value = 1.1;
    for (const double t : {3.0, 6.0}) {
        const auto tr = learning_trajectory(p, d, "u", {t - 1e-9, t + 1e-9});
        const auto q = t == 3.0 ? fixture::item(d, "q") : fixture::item(d, "r");
        double jump = 0.0;
        for (std::size_t a = 0; a < 2; ++a) {
            const double step = tr.points[1].expertise[a] - tr.points[0].expertise[a];
            CHECK(step == doctest::Approx(p.knowledge_of(q, TopicId{a})).epsilon(1e-6));
            jump += step;
        }
        CHECK(std::abs(jump - p.item_knowledge(q)) <= 1e-6);
    }
}

TEST_CASE("mismatched parameters are rejected") {
    const auto d = two_users();
    Builder b;
    b.item("x", {"a"}).learn("z", 0.0, "x").horizon(1.0);
    const auto other = ParameterSet::zeros(b.build(), week);
    CHECK_THROWS_AS((void)onsite_offsite(other, d, 20.0), IndexMismatch);
    CHECK_THROWS_AS((void)contribution_knowledge(other, d), IndexMismatch);
}

TEST_CASE("csv reports carry a header and one row per entity") {
    const auto d = two_users();
    auto p = ParameterSet::zeros(d, week);
    p.knowledge[0][0].value = 1.0;
    std::ostringstream decomposition, upvotes;
    write_csv(decomposition, onsite_offsite(p, d, 20.0), d);
    write_csv(upvotes, useful_upvote_fraction(p, d), d);
    const auto lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
    CHECK(decomposition.str().rfind("user,onsite,offsite,total\n", 0) == 0);
    CHECK(lines(decomposition.str()) == 3);
    CHECK(lines(upvotes.str()) == 3);  // header, one learner, the footer
}

}
