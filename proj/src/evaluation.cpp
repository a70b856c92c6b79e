#include "crowdlearn/evaluation.hpp"

#include "crowdlearn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace crowdlearn {

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) {
        throw LengthMismatch(std::to_string(xs.size()) + " vs " + std::to_string(ys.size()) + " values");
    }
    if (xs.size() < 2) {
        throw DegenerateInput("need at least two values");
    }
    const auto rx = average_ranks(xs);
    const auto ry = average_ranks(ys);
    const double n = static_cast<double>(xs.size());
    const double mean = (n + 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const double dx = rx[i] - mean;
        const double dy = ry[i] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw DegenerateInput("constant input vector");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::unordered_map<std::string, std::size_t> lookup(const std::vector<std::string>& names) {
    std::unordered_map<std::string, std::size_t> m;
    for (std::size_t i = 0; i < names.size(); ++i) m.emplace(names[i], i);
    return m;
}

FamilyRecovery summarize(const std::vector<double>& truth, const std::vector<double>& est, std::size_t skipped) {
    FamilyRecovery r;
    r.compared = truth.size();
    r.skipped = skipped;
    if (truth.empty()) {
        r.spearman = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) sq += (est[i] - truth[i]) * (est[i] - truth[i]);
    r.rmse = std::sqrt(sq / static_cast<double>(truth.size()));
    try {
        r.spearman = spearman(truth, est);
    } catch (const DegenerateInput&) {
        r.spearman = std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

} // namespace

RecoveryReport recovery_report(const ParameterSet& truth, const ParameterSet& est, const ParameterIndex& idx) {
    const auto truth_users = lookup(truth.users);
    const auto truth_topics = lookup(truth.topics);
    const auto truth_items = lookup(truth.items);
    const auto find = [](const auto& map, const std::string& name, const char* what) {
        const auto it = map.find(name);
        if (it == map.end()) {
            throw IndexMismatch(std::string(what) + " '" + name + "' is missing from the ground truth");
        }
        return it->second;
    };

    std::vector<double> ta, ea, tm, em, tk, ek;
    for (std::size_t coord = 0; coord < idx.size(); ++coord) {
        const auto& cell = idx.cell(coord);
        const auto& topic_name = est.topics.at(cell.topic.get());
        const auto ta_idx = find(truth_topics, topic_name, "topic");
        switch (cell.family) {
        case Family::alpha: {
            const auto u = find(truth_users, est.users.at(cell.row), "user");
            ta.push_back(truth.alpha(u, ta_idx));
            ea.push_back(est.alpha(cell.row, cell.topic.get()));
            break;
        }
        case Family::mu: {
            const auto u = find(truth_users, est.users.at(cell.row), "user");
            tm.push_back(truth.mu(u, ta_idx));
            em.push_back(est.mu(cell.row, cell.topic.get()));
            break;
        }
        case Family::knowledge: {
            const auto q = find(truth_items, est.items.at(cell.row), "item");
            tk.push_back(truth.knowledge_of(ItemId{q}, TopicId{ta_idx}));
            ek.push_back(est.knowledge_of(ItemId{cell.row}, cell.topic));
            break;
        }
        }
    }
    std::size_t knowledge_cells = 0;
    for (const auto& cells : est.knowledge) knowledge_cells += cells.size();
    const std::size_t user_topic_cells = est.users.size() * est.topics.size();

    RecoveryReport report;
    report.alpha = summarize(ta, ea, user_topic_cells - ta.size());
    report.mu = summarize(tm, em, user_topic_cells - tm.size());
    report.knowledge = summarize(tk, ek, knowledge_cells - tk.size());
    return report;
}

FitResult fit_baseline(const Dataset& d, const Kernel& kernel, const SolverOptions& opts) {
    return fit(d, kernel, opts, /*with_knowledge=*/false);
}

PredictionTable pairwise_prediction(const ParameterSet& model, const ParameterSet& baseline, const Dataset& train,
                                    const TestSet& test, std::vector<double> thresholds) {
    if (thresholds.empty()) {
        throw std::invalid_argument("at least one score-difference threshold is required");
    }
    std::sort(thresholds.begin(), thresholds.end());
    const Dataset history = merge_history(train, test);

    const auto& cs = test.contributions;
    std::vector<double> model_rate(cs.size()), baseline_rate(cs.size());
    for (std::size_t i = 0; i < cs.size(); ++i) {
        model_rate[i] = contribution_rate(model, cs[i], history);
        baseline_rate[i] = contribution_rate(baseline, cs[i], history);
    }

    std::vector<std::vector<std::size_t>> by_item(train.item_count());
    for (std::size_t i = 0; i < cs.size(); ++i) by_item[cs[i].item.get()].push_back(i);

    PredictionTable table;
    std::vector<std::size_t> pairs(thresholds.size(), 0), model_ok(thresholds.size(), 0),
        baseline_ok(thresholds.size(), 0);
    const auto correct = [](double ri, double rj, double si, double sj) {
        return (ri > rj && si > sj) || (rj > ri && sj > si);
    };
    for (const auto& group : by_item) {
        for (std::size_t a = 0; a < group.size(); ++a) {
            for (std::size_t b = a + 1; b < group.size(); ++b) {
                const auto i = group[a], j = group[b];
                const double diff = std::abs(cs[i].score - cs[j].score);
                if (!(diff > 0.0)) continue;
                const bool m = correct(model_rate[i], model_rate[j], cs[i].score, cs[j].score);
                const bool bl = correct(baseline_rate[i], baseline_rate[j], cs[i].score, cs[j].score);
                for (std::size_t k = 0; k < thresholds.size() && diff >= thresholds[k]; ++k) {
                    ++pairs[k];
                    model_ok[k] += m;
                    baseline_ok[k] += bl;
                }
            }
        }
    }
    if (pairs.front() == 0) {
        throw NoPairs("no test pairs on a shared item differ by the smallest threshold");
    }
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
        const double n = static_cast<double>(pairs[k]);
        table.rows.push_back({thresholds[k], pairs[k], pairs[k] ? baseline_ok[k] / n : 0.0,
                              pairs[k] ? model_ok[k] / n : 0.0});
    }
    return table;
}

} // namespace crowdlearn
