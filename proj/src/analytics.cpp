#include "crowdlearn/analytics.hpp"

#include "crowdlearn/errors.hpp"
#include "crowdlearn/text.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>

namespace crowdlearn {

namespace {

void check_shapes(const ParameterSet& p, const Dataset& d) {
    if (p.users.size() != d.user_count() || p.topics.size() != d.topic_count() || p.items.size() != d.item_count()) {
        throw IndexMismatch("parameters and dataset have different user, topic or item tables");
    }
}

} // namespace

std::vector<UserDecomposition> onsite_offsite(const ParameterSet& p, const Dataset& d, double horizon,
                                              OffsiteReading reading) {
    check_shapes(p, d);
    const double omega = p.kernel.omega();
    const auto& learning = d.learning_events();
    std::vector<UserDecomposition> out;
    out.reserve(d.user_count());
    for (std::size_t u = 0; u < d.user_count(); ++u) {
        UserDecomposition row{UserId{u}};
        for (const auto i : d.learning_of(UserId{u})) {
            const auto& e = learning[i];
            if (!(e.time < horizon)) continue;
            row.onsite += p.item_knowledge(e.item) * -std::expm1(-omega * (horizon - e.time)) / omega;
        }
        double mu_sum = 0.0;
        for (const double m : p.mu.row(u)) mu_sum += m;
        row.offsite = reading == OffsiteReading::integral ? mu_sum * horizon * horizon / 2.0 : mu_sum * horizon;
        row.total = row.onsite + row.offsite;
        out.push_back(row);
    }
    return out;
}

LogNormalFit fit_lognormal(const std::vector<double>& values) {
    LogNormalFit fit;
    double sum = 0.0, sq = 0.0;
    for (const double v : values) {
        if (!(v > 0.0)) continue;
        const double l = std::log(v);
        sum += l;
        sq += l * l;
        ++fit.n;
    }
    if (fit.n == 0) return fit;
    const double n = static_cast<double>(fit.n);
    fit.log_mean = sum / n;
    fit.log_sd = std::sqrt(std::max(0.0, sq / n - fit.log_mean * fit.log_mean));
    return fit;
}

PowerLawFit fit_power_law(const std::vector<double>& values, double x_min) {
    PowerLawFit fit;
    if (!(x_min > 0.0)) {
        x_min = 0.0;
        for (const double v : values) {
            if (v > 0.0 && (x_min == 0.0 || v < x_min)) x_min = v;
        }
    }
    fit.x_min = x_min;
    if (!(x_min > 0.0)) return fit;
    double log_sum = 0.0;
    for (const double v : values) {
        if (v >= x_min) {
            log_sum += std::log(v / x_min);
            ++fit.n_tail;
        }
    }
    fit.exponent = log_sum > 0.0 ? 1.0 + static_cast<double>(fit.n_tail) / log_sum : 0.0;
    return fit;
}

DistributionSummary knowledge_distribution(const ParameterSet& p, double zero_threshold, std::size_t bins) {
    DistributionSummary s;
    s.item_totals.reserve(p.knowledge.size());
    for (std::size_t q = 0; q < p.knowledge.size(); ++q) s.item_totals.push_back(p.item_knowledge(ItemId{q}));
    if (s.item_totals.empty()) return s;

    std::vector<double> positive;
    for (const double k : s.item_totals) {
        if (k >= zero_threshold) positive.push_back(k);
    }
    s.zero_fraction = 1.0 - static_cast<double>(positive.size()) / static_cast<double>(s.item_totals.size());

    std::vector<double> sorted = s.item_totals;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
    const std::size_t top = (sorted.size() + 9) / 10;
    if (total > 0.0) {
        s.top_decile_share = std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(top), 0.0) / total;
    }

    s.lognormal = fit_lognormal(positive);
    if (!positive.empty() && bins > 0) {
        const auto [lo_it, hi_it] = std::minmax_element(positive.begin(), positive.end());
        const double lo = std::log(*lo_it);
        const double hi = *hi_it > *lo_it ? std::log(*hi_it) : lo + 1.0;
        for (std::size_t b = 0; b <= bins; ++b) {
            s.bin_edges.push_back(std::exp(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins)));
        }
        s.bin_counts.assign(bins, 0);
        for (const double k : positive) {
            auto b = static_cast<std::size_t>((std::log(k) - lo) / (hi - lo) * static_cast<double>(bins));
            ++s.bin_counts[std::min(b, bins - 1)];
        }
    }
    return s;
}

UsefulUpvotes useful_upvote_fraction(const ParameterSet& p, const Dataset& d, double zero_threshold) {
    check_shapes(p, d);
    std::vector<char> useful(d.item_count());
    for (std::size_t q = 0; q < d.item_count(); ++q) useful[q] = p.item_knowledge(ItemId{q}) >= zero_threshold;
    UsefulUpvotes out;
    const auto& learning = d.learning_events();
    for (std::size_t u = 0; u < d.user_count(); ++u) {
        const auto events = d.learning_of(UserId{u});
        if (events.empty()) {
            ++out.users_without_learning;
            continue;
        }
        std::size_t hits = 0;
        for (const auto i : events) hits += useful[learning[i].item.get()];
        out.fractions.emplace_back(UserId{u}, static_cast<double>(hits) / static_cast<double>(events.size()));
    }
    return out;
}

ContributionKnowledge contribution_knowledge(const ParameterSet& p, const Dataset& d) {
    check_shapes(p, d);
    const auto& cs = d.contributions();
    std::vector<double> score_sum(d.item_count(), 0.0);
    std::vector<std::size_t> count(d.item_count(), 0);
    for (const auto& c : cs) {
        score_sum[c.item.get()] += c.score;
        ++count[c.item.get()];
    }
    ContributionKnowledge out;
    out.shares.resize(cs.size());
    out.contributed.assign(d.user_count(), 0.0);
    out.learned.assign(d.user_count(), 0.0);
    for (std::size_t j = 0; j < cs.size(); ++j) {
        const auto q = cs[j].item.get();
        const double k = p.item_knowledge(cs[j].item);
        out.shares[j] = score_sum[q] > 0.0 ? k * (cs[j].score / score_sum[q]) : k / static_cast<double>(count[q]);
        out.contributed[cs[j].user.get()] += out.shares[j];
    }
    for (const auto& e : d.learning_events()) out.learned[e.user.get()] += p.item_knowledge(e.item);
    out.learned_fit = fit_lognormal(out.learned);
    out.contributed_fit = fit_power_law(out.contributed);
    return out;
}

Trajectory learning_trajectory(const ParameterSet& p, const Dataset& d, std::string_view user,
                               const std::vector<double>& grid) {
    check_shapes(p, d);
    const auto id = d.find_user(user);
    if (!id) {
        throw UnknownUser(std::string(user));
    }
    Trajectory out;
    out.user = *id;
    for (const double t : grid) out.points.push_back({t, expertise(p, *id, d, t)});
    const auto parts = onsite_offsite(p, d, d.horizon());
    const auto& mine = parts[id->get()];
    out.onsite_share = mine.total > 0.0 ? mine.onsite / mine.total : 0.0;
    return out;
}

// ---------------------------------------------------------------------------

void write_csv(std::ostream& out, const std::vector<UserDecomposition>& rows, const Dataset& d) {
    out << "user,onsite,offsite,total\n";
    for (const auto& r : rows) {
        out << csv_field(d.user_name(r.user)) << ',' << format_double(r.onsite) << ',' << format_double(r.offsite)
            << ',' << format_double(r.total) << '\n';
    }
}

void write_csv(std::ostream& out, const DistributionSummary& s, const ParameterSet& p) {
    out << "item,knowledge\n";
    for (std::size_t q = 0; q < s.item_totals.size(); ++q) {
        out << csv_field(p.items.at(q)) << ',' << format_double(s.item_totals[q]) << '\n';
    }
    out << "\nbin_low,bin_high,count\n";
    for (std::size_t b = 0; b < s.bin_counts.size(); ++b) {
        out << format_double(s.bin_edges[b]) << ',' << format_double(s.bin_edges[b + 1]) << ',' << s.bin_counts[b]
            << '\n';
    }
    out << "\nstatistic,value\n"
        << "zero_fraction," << format_double(s.zero_fraction) << '\n'
        << "top_decile_share," << format_double(s.top_decile_share) << '\n'
        << "lognormal_log_mean," << format_double(s.lognormal.log_mean) << '\n'
        << "lognormal_log_sd," << format_double(s.lognormal.log_sd) << '\n';
}

void write_csv(std::ostream& out, const UsefulUpvotes& u, const Dataset& d) {
    out << "user,useful_fraction\n";
    for (const auto& [user, fraction] : u.fractions) {
        out << csv_field(d.user_name(user)) << ',' << format_double(fraction) << '\n';
    }
    out << "# users without learning events: " << u.users_without_learning << '\n';
}

void write_csv(std::ostream& out, const ContributionKnowledge& c, const Dataset& d) {
    out << "user,contributed,learned\n";
    for (std::size_t u = 0; u < d.user_count(); ++u) {
        out << csv_field(d.user_name(UserId{u})) << ',' << format_double(c.contributed[u]) << ','
            << format_double(c.learned[u]) << '\n';
    }
    out << "\nstatistic,value\n"
        << "learned_log_mean," << format_double(c.learned_fit.log_mean) << '\n'
        << "learned_log_sd," << format_double(c.learned_fit.log_sd) << '\n'
        << "contributed_exponent," << format_double(c.contributed_fit.exponent) << '\n'
        << "contributed_x_min," << format_double(c.contributed_fit.x_min) << '\n';
}

void write_csv(std::ostream& out, const Trajectory& t, const Dataset& d) {
    out << "time";
    for (const auto& topic : d.topics()) out << ',' << csv_field(topic);
    out << '\n';
    for (const auto& point : t.points) {
        out << format_double(point.time);
        for (const double e : point.expertise) out << ',' << format_double(e);
        out << '\n';
    }
    out << "# onsite_share," << format_double(t.onsite_share) << '\n';
}

} // namespace crowdlearn
