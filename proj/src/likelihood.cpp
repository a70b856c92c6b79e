#include "crowdlearn/likelihood.hpp"

#include "crowdlearn/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <numeric>
#include <unordered_map>
#include <ostream>

namespace crowdlearn {

// ---------------------------------------------------------------------------
// ParameterIndex

namespace {

// Latest contribution time per topic for one user.
std::vector<double> latest_contribution_by_topic(const Dataset& d, UserId u) {
    std::vector<double> latest(d.topic_count(), -std::numeric_limits<double>::infinity());
    for (const auto ci : d.contributions_of(u)) {
        const auto& c = d.contributions()[ci];
        for (const auto& w : d.item(c.item).topics.entries()) {
            latest[w.topic.get()] = std::max(latest[w.topic.get()], c.time);
        }
    }
    return latest;
}

} // namespace

ParameterIndex ParameterIndex::build(const Dataset& d, bool with_knowledge) {
    ParameterIndex idx;
    idx.n_users_ = d.user_count();
    idx.n_topics_ = d.topic_count();
    idx.n_items_ = d.item_count();
    idx.with_knowledge_ = with_knowledge;
    idx.alpha_.assign(idx.n_users_ * idx.n_topics_, kAbsent);
    idx.mu_.assign(idx.n_users_ * idx.n_topics_, kAbsent);

    std::vector<bool> has_alpha(idx.alpha_.size(), false), has_mu(idx.mu_.size(), false);
    for (const auto& c : d.contributions()) {
        for (const auto& w : d.item(c.item).topics.entries()) {
            const auto cell = c.user.get() * idx.n_topics_ + w.topic.get();
            has_alpha[cell] = true;
            if (c.time > 0.0) {
                has_mu[cell] = true;
            }
        }
    }
    for (std::size_t cell = 0; cell < has_alpha.size(); ++cell) {
        if (has_alpha[cell]) {
            idx.alpha_[cell] = static_cast<std::uint32_t>(idx.cells_.size());
            idx.cells_.push_back({Family::alpha, static_cast<std::uint32_t>(cell / idx.n_topics_),
                                  TopicId{cell % idx.n_topics_}});
        }
    }
    idx.n_alpha_ = idx.cells_.size();
    for (std::size_t cell = 0; cell < has_mu.size(); ++cell) {
        if (has_mu[cell]) {
            idx.mu_[cell] = static_cast<std::uint32_t>(idx.cells_.size());
            idx.cells_.push_back({Family::mu, static_cast<std::uint32_t>(cell / idx.n_topics_),
                                  TopicId{cell % idx.n_topics_}});
        }
    }
    idx.n_mu_ = idx.cells_.size() - idx.n_alpha_;

    idx.knowledge_offsets_.assign(idx.n_items_ + 1, 0);
    for (std::size_t q = 0; q < idx.n_items_; ++q) {
        idx.knowledge_offsets_[q + 1] =
            idx.knowledge_offsets_[q] + static_cast<std::uint32_t>(d.items()[q].topics.active_count());
    }
    idx.knowledge_.assign(idx.knowledge_offsets_.back(), kAbsent);
    if (with_knowledge) {
        std::vector<bool> active(idx.knowledge_.size(), false);
        for (std::size_t u = 0; u < idx.n_users_; ++u) {
            const UserId user{u};
            if (d.learning_of(user).empty() || d.contributions_of(user).empty()) {
                continue;
            }
            const auto latest = latest_contribution_by_topic(d, user);
            for (const auto li : d.learning_of(user)) {
                const auto& e = d.learning_events()[li];
                const auto entries = d.item(e.item).topics.entries();
                for (std::size_t j = 0; j < entries.size(); ++j) {
                    if (latest[entries[j].topic.get()] > e.time) {
                        active[idx.knowledge_offsets_[e.item.get()] + j] = true;
                    }
                }
            }
        }
        for (std::size_t q = 0; q < idx.n_items_; ++q) {
            const auto entries = d.items()[q].topics.entries();
            for (std::size_t j = 0; j < entries.size(); ++j) {
                const auto slot = idx.knowledge_offsets_[q] + j;
                if (active[slot]) {
                    idx.knowledge_[slot] = static_cast<std::uint32_t>(idx.cells_.size());
                    idx.cells_.push_back({Family::knowledge, static_cast<std::uint32_t>(q), entries[j].topic});
                }
            }
        }
    }
    return idx;
}

std::uint32_t ParameterIndex::knowledge_coord(ItemId q, TopicId a) const {
    for (auto s = knowledge_offsets_.at(q.get()); s < knowledge_offsets_.at(q.get() + 1); ++s) {
        const auto coord = knowledge_[s];
        if (coord != kAbsent && cells_[coord].topic == a) {
            return coord;
        }
    }
    return kAbsent;
}

std::vector<double> ParameterIndex::pack(const ParameterSet& p) const {
    if (p.alpha.rows() != n_users_ || p.alpha.cols() != n_topics_ || p.knowledge.size() != n_items_) {
        throw IndexMismatch("parameter set does not match the index tables");
    }
    std::vector<double> theta(size(), 0.0);
    for (std::size_t coord = 0; coord < size(); ++coord) {
        const auto& c = cells_[coord];
        switch (c.family) {
        case Family::alpha:
            theta[coord] = p.alpha(c.row, c.topic.get());
            break;
        case Family::mu:
            theta[coord] = p.mu(c.row, c.topic.get());
            break;
        case Family::knowledge:
            theta[coord] = p.knowledge_of(ItemId{c.row}, c.topic);
            break;
        }
    }
    return theta;
}

ParameterSet ParameterIndex::unpack(std::span<const double> theta, const Dataset& d, Kernel kernel) const {
    if (theta.size() != size()) {
        throw DimensionMismatch("theta has " + std::to_string(theta.size()) + " entries, index has " +
                                std::to_string(size()));
    }
    if (d.user_count() != n_users_ || d.topic_count() != n_topics_ || d.item_count() != n_items_) {
        throw IndexMismatch("dataset tables do not match the index");
    }
    auto p = ParameterSet::zeros(d, kernel);
    for (std::size_t cell = 0; cell < alpha_.size(); ++cell) {
        if (alpha_[cell] != kAbsent) p.alpha(cell / n_topics_, cell % n_topics_) = theta[alpha_[cell]];
        if (mu_[cell] != kAbsent) p.mu(cell / n_topics_, cell % n_topics_) = theta[mu_[cell]];
    }
    for (std::size_t q = 0; q < n_items_; ++q) {
        auto& cells = p.knowledge[q];
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const auto coord = knowledge_[knowledge_offsets_[q] + j];
            if (coord != kAbsent) cells[j].value = theta[coord];
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// DesignMatrix construction

namespace {

constexpr std::size_t kChunkEntries = 8192;

struct UserTimeline {
    std::uint32_t slot_count{0};
    std::vector<double> times;
    std::vector<std::uint32_t> rows;
    std::vector<std::uint32_t> kinds;
    std::vector<std::uint32_t> term_counts;
    std::vector<std::uint32_t> contrib_slots, contrib_alpha, contrib_mu;
    std::vector<double> contrib_coef;
    std::vector<std::uint32_t> learn_slots, learn_coords;
};

UserTimeline build_timeline(const Dataset& d, const ParameterIndex& idx, UserId u) {
    UserTimeline tl;
    const auto contribs = d.contributions_of(u);
    if (contribs.empty()) {
        return tl;
    }
    // One slot per topic the user contributes on, in topic order.
    std::vector<std::uint32_t> slot_of(d.topic_count(), ParameterIndex::kAbsent);
    for (const auto ci : contribs) {
        for (const auto& w : d.item(d.contributions()[ci].item).topics.entries()) {
            slot_of[w.topic.get()] = 0;
        }
    }
    for (auto& s : slot_of) {
        if (s != ParameterIndex::kAbsent) s = tl.slot_count++;
    }

    const auto learns = d.learning_of(u);
    std::size_t i = 0, j = 0;
    // Contributions go first on ties: events at exactly t_c are not in the history.
    while (i < learns.size() || j < contribs.size()) {
        const bool take_contrib =
            j < contribs.size() &&
            (i >= learns.size() || d.contributions()[contribs[j]].time <= d.learning_events()[learns[i]].time);
        if (take_contrib) {
            const auto& c = d.contributions()[contribs[j]];
            const auto& topics = d.item(c.item).topics;
            for (const auto& w : topics.entries()) {
                tl.contrib_slots.push_back(slot_of[w.topic.get()]);
                tl.contrib_alpha.push_back(idx.alpha_coord(u, w.topic));
                tl.contrib_mu.push_back(idx.mu_coord(u, w.topic));
                tl.contrib_coef.push_back(w.weight / topics.total_weight());
            }
            tl.times.push_back(c.time);
            tl.rows.push_back(contribs[j]);
            tl.kinds.push_back(1);
            tl.term_counts.push_back(static_cast<std::uint32_t>(topics.active_count()));
            ++j;
        } else {
            const auto& e = d.learning_events()[learns[i]];
            std::uint32_t n_terms = 0;
            if (idx.with_knowledge()) {
                const auto entries = d.item(e.item).topics.entries();
                for (std::size_t k = 0; k < entries.size(); ++k) {
                    const auto slot = slot_of[entries[k].topic.get()];
                    const auto coord = idx.knowledge_cell_coord(e.item, k);
                    if (slot != ParameterIndex::kAbsent && coord != ParameterIndex::kAbsent) {
                        tl.learn_slots.push_back(slot);
                        tl.learn_coords.push_back(coord);
                        ++n_terms;
                    }
                }
            }
            if (n_terms > 0) {
                tl.times.push_back(e.time);
                tl.rows.push_back(learns[i]);
                tl.kinds.push_back(0);
                tl.term_counts.push_back(n_terms);
            }
            ++i;
        }
    }
    return tl;
}

} // namespace

DesignMatrix DesignMatrix::build(const Dataset& d, const Kernel& kernel, const ParameterIndex& idx,
                                 unsigned threads) {
    DesignMatrix x(kernel);
    x.n_coords_ = idx.size();
    x.scores_.reserve(d.contributions().size());
    for (const auto& c : d.contributions()) {
        x.scores_.push_back(c.score);
    }
    x.row_user_.assign(d.contributions().size(), 0);

    const std::size_t n_users = d.user_count();
    std::vector<UserTimeline> timelines(n_users);
    constexpr std::size_t kUsersPerTask = 64;
    const std::size_t n_tasks = (n_users + kUsersPerTask - 1) / kUsersPerTask;
    parallel_tasks(n_tasks, threads, [&](std::size_t task) {
        const std::size_t end = std::min(n_users, (task + 1) * kUsersPerTask);
        for (std::size_t u = task * kUsersPerTask; u < end; ++u) {
            timelines[u] = build_timeline(d, idx, UserId{u});
        }
    });

    // Concatenate in user order.
    std::size_t entries_in_chunk = 0;
    x.chunk_user_offsets_.push_back(0);
    x.user_entry_offsets_.push_back(0);
    for (std::size_t u = 0; u < n_users; ++u) {
        auto& tl = timelines[u];
        if (tl.times.empty() || tl.slot_count == 0) {
            continue;
        }
        const auto design_user = static_cast<std::uint32_t>(x.user_slot_counts_.size());
        x.user_slot_counts_.push_back(tl.slot_count);
        std::size_t contrib_cursor = 0, learn_cursor = 0;
        for (std::size_t e = 0; e < tl.times.size(); ++e) {
            const bool is_contrib = tl.kinds[e] == 1;
            Entry entry{tl.times[e],
                        static_cast<std::uint32_t>(is_contrib ? x.contrib_terms_.size() : x.learn_terms_.size()),
                        tl.term_counts[e], tl.rows[e], tl.kinds[e]};
            for (std::uint32_t t = 0; t < tl.term_counts[e]; ++t) {
                if (is_contrib) {
                    x.contrib_terms_.push_back({tl.contrib_slots[contrib_cursor], tl.contrib_alpha[contrib_cursor],
                                                tl.contrib_mu[contrib_cursor], tl.contrib_coef[contrib_cursor]});
                    ++contrib_cursor;
                } else {
                    x.learn_terms_.push_back({tl.learn_slots[learn_cursor], tl.learn_coords[learn_cursor]});
                    ++learn_cursor;
                }
            }
            if (is_contrib) {
                x.row_user_[tl.rows[e]] = design_user;
            }
            x.entries_.push_back(entry);
        }
        x.user_entry_offsets_.push_back(static_cast<std::uint32_t>(x.entries_.size()));
        entries_in_chunk += tl.times.size();
        if (entries_in_chunk >= kChunkEntries) {
            x.chunk_user_offsets_.push_back(static_cast<std::uint32_t>(x.user_slot_counts_.size()));
            entries_in_chunk = 0;
        }
        tl = UserTimeline{};
    }
    if (x.chunk_user_offsets_.back() != x.user_slot_counts_.size()) {
        x.chunk_user_offsets_.push_back(static_cast<std::uint32_t>(x.user_slot_counts_.size()));
    }
    x.index_entry_scores();
    return x;
}

bool DesignMatrix::index_entry_scores() {
    entry_scores_.assign(entries_.size(), 0.0);
    for (std::size_t e = 0; e < entries_.size(); ++e) {
        if (!entries_[e].is_contribution) continue;
        if (entries_[e].row >= scores_.size()) return false;
        entry_scores_[e] = scores_[entries_[e].row];
    }
    return true;
}

std::vector<SparseEntry> DesignMatrix::row(std::size_t c) const {
    if (c >= rows()) {
        throw DimensionMismatch("row " + std::to_string(c) + " out of range");
    }
    const auto user = row_user_[c];
    const auto begin = user_entry_offsets_[user];
    const auto end = user_entry_offsets_[user + 1];
    std::size_t pos = begin;
    while (pos < end && !(entries_[pos].is_contribution && entries_[pos].row == c)) {
        ++pos;
    }
    const auto& target = entries_[pos];
    std::map<std::uint32_t, double> coefficients;
    std::vector<double> slot_coef(user_slot_counts_[user], 0.0);
    for (std::uint32_t t = 0; t < target.term_count; ++t) {
        const auto& term = contrib_terms_[target.first_term + t];
        slot_coef[term.slot] += term.coef;
        if (term.alpha != ParameterIndex::kAbsent) coefficients[term.alpha] += term.coef;
        if (term.mu != ParameterIndex::kAbsent) coefficients[term.mu] += term.coef * target.time;
    }
    for (std::size_t e = begin; e < pos; ++e) {
        const auto& entry = entries_[e];
        if (entry.is_contribution || !(entry.time < target.time)) {
            continue;
        }
        const double decay = kernel_(target.time - entry.time);
        for (std::uint32_t t = 0; t < entry.term_count; ++t) {
            const auto& term = learn_terms_[entry.first_term + t];
            if (slot_coef[term.slot] > 0.0) {
                coefficients[term.coord] += decay * slot_coef[term.slot];
            }
        }
    }
    std::vector<SparseEntry> out;
    out.reserve(coefficients.size());
    for (const auto& [coord, value] : coefficients) {
        out.push_back({coord, value});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

// Exponentially decaying accumulator evaluated lazily at monotone times.
struct Decaying {
    double value{0.0};
    double time{0.0};
};

} // namespace

void DesignMatrix::run_chunk(std::size_t chunk, std::span<const double> theta, std::span<double> rates,  // indexed by entry
                             std::span<double> grad, std::span<double> knowledge_partial, double& log_lik,
                             std::size_t& floored) const {
    const double omega = kernel_.omega();
    const bool want_grad = !grad.empty();
    std::vector<Decaying> slots;
    double chunk_ll = 0.0;
    std::size_t chunk_floored = 0;
    for (auto user = chunk_user_offsets_[chunk]; user < chunk_user_offsets_[chunk + 1]; ++user) {
        const auto begin = user_entry_offsets_[user];
        const auto end = user_entry_offsets_[user + 1];
        slots.assign(user_slot_counts_[user], Decaying{});

        // Forward: S_a(t) = sum over earlier learning of k_qa exp(-omega (t - t_i)).
        for (auto e = begin; e < end; ++e) {
            const auto& entry = entries_[e];
            const double t = entry.time;
            if (entry.is_contribution) {
                double rate = 0.0;
                for (std::uint32_t k = 0; k < entry.term_count; ++k) {
                    const auto& term = contrib_terms_[entry.first_term + k];
                    auto& s = slots[term.slot];
                    const double onsite = s.value == 0.0 ? 0.0 : s.value * std::exp(-omega * (t - s.time));
                    double expertise = onsite;
                    if (term.alpha != ParameterIndex::kAbsent) expertise += theta[term.alpha];
                    if (term.mu != ParameterIndex::kAbsent) expertise += theta[term.mu] * t;
                    rate += term.coef * expertise;
                }
                rates[e] = rate;
                const double score = entry_scores_[e];
                chunk_ll += (score > 0.0 ? score * std::log(std::max(rate, kRateFloor)) : 0.0) - rate;
                chunk_floored += score > 0.0 && rate < kRateFloor;
            } else {
                for (std::uint32_t k = 0; k < entry.term_count; ++k) {
                    const auto& term = learn_terms_[entry.first_term + k];
                    auto& s = slots[term.slot];
                    s.value = (s.value == 0.0 ? 0.0 : s.value * std::exp(-omega * (t - s.time))) + theta[term.coord];
                    s.time = t;
                }
            }
        }
        if (!want_grad) {
            continue;
        }

        // Backward: G_a(t) = sum over later contributions of r_c coef exp(-omega (t_c - t)).
        slots.assign(user_slot_counts_[user], Decaying{});
        for (auto e = end; e-- > begin;) {
            const auto& entry = entries_[e];
            const double t = entry.time;
            if (entry.is_contribution) {
                const double score = entry_scores_[e];
                const double residual = score / std::max(rates[e], kRateFloor) - 1.0;
                for (std::uint32_t k = 0; k < entry.term_count; ++k) {
                    const auto& term = contrib_terms_[entry.first_term + k];
                    const double weighted = residual * term.coef;
                    if (term.alpha != ParameterIndex::kAbsent) grad[term.alpha] += weighted;
                    if (term.mu != ParameterIndex::kAbsent) grad[term.mu] += weighted * t;
                    auto& s = slots[term.slot];
                    s.value = (s.value == 0.0 ? 0.0 : s.value * std::exp(-omega * (s.time - t))) + weighted;
                    s.time = t;
                }
            } else {
                for (std::uint32_t k = 0; k < entry.term_count; ++k) {
                    const auto& term = learn_terms_[entry.first_term + k];
                    const auto& s = slots[term.slot];
                    knowledge_partial[entry.first_term + k] =
                        s.value == 0.0 ? 0.0 : s.value * std::exp(-omega * (s.time - t));
                }
            }
        }
    }
    log_lik = chunk_ll;
    floored = chunk_floored;
}

double DesignMatrix::evaluate(std::span<const double> theta, std::span<double> grad, unsigned threads,
                              std::size_t* floored_rows) const {
    if (theta.size() != n_coords_) {
        throw DimensionMismatch("theta has " + std::to_string(theta.size()) + " entries, design has " +
                                std::to_string(n_coords_) + " columns");
    }
    if (!grad.empty() && grad.size() != n_coords_) {
        throw DimensionMismatch("gradient buffer has the wrong size");
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> rates(entries_.size(), 0.0);
    std::vector<double> knowledge_partial(grad.empty() ? 0 : learn_terms_.size(), 0.0);
    const std::size_t n_chunks = chunk_user_offsets_.size() - 1;
    std::vector<double> chunk_ll(n_chunks, 0.0);
    std::vector<std::size_t> chunk_floored(n_chunks, 0);
    parallel_tasks(n_chunks, threads, [&](std::size_t chunk) {
        run_chunk(chunk, theta, rates, grad, knowledge_partial, chunk_ll[chunk], chunk_floored[chunk]);
    });
    if (floored_rows != nullptr) {
        *floored_rows = std::accumulate(chunk_floored.begin(), chunk_floored.end(), std::size_t{0});
    }
    // Fixed-order reductions keep the result independent of the thread count.
    for (std::size_t t = 0; t < knowledge_partial.size(); ++t) {
        grad[learn_terms_[t].coord] += knowledge_partial[t];
    }
    double total = 0.0;
    for (const double v : chunk_ll) {
        total += v;
    }
    return total;
}

std::vector<double> DesignMatrix::column_square_norms(unsigned threads) const {
    // For a learning column j, sum_c (coef_c S_j(t_c))^2 expands over pairs of
    // learning events i' <= i on j as B(t_i) exp(-omega (t_i - t_i')), where
    // B(t) = sum over later contributions of coef^2 exp(-2 omega (t_c - t)).
    const double omega = kernel_.omega();
    std::vector<double> norms(n_coords_, 0.0);
    std::vector<double> knowledge_part(learn_terms_.size(), 0.0);
    const std::size_t n_chunks = chunk_user_offsets_.size() - 1;
    parallel_tasks(n_chunks, threads, [&](std::size_t chunk) {
        std::vector<Decaying> slots;
        std::unordered_map<std::uint32_t, Decaying> pair_sums;
        for (auto user = chunk_user_offsets_[chunk]; user < chunk_user_offsets_[chunk + 1]; ++user) {
            const auto begin = user_entry_offsets_[user];
            const auto end = user_entry_offsets_[user + 1];
            // Backward pass fills B at each learning term.
            slots.assign(user_slot_counts_[user], Decaying{});
            for (auto e = end; e-- > begin;) {
                const auto& entry = entries_[e];
                const double t = entry.time;
                for (std::uint32_t k = 0; k < entry.term_count; ++k) {
                    if (entry.is_contribution) {
                        const auto& term = contrib_terms_[entry.first_term + k];
                        const double sq = term.coef * term.coef;
                        // alpha and mu coordinates belong to this user alone.
                        if (term.alpha != ParameterIndex::kAbsent) norms[term.alpha] += sq;
                        if (term.mu != ParameterIndex::kAbsent) norms[term.mu] += sq * t * t;
                        auto& s = slots[term.slot];
                        s.value = (s.value == 0.0 ? 0.0 : s.value * std::exp(-2.0 * omega * (s.time - t))) + sq;
                        s.time = t;
                    } else {
                        const auto& s = slots[learn_terms_[entry.first_term + k].slot];
                        knowledge_part[entry.first_term + k] =
                            s.value == 0.0 ? 0.0 : s.value * std::exp(-2.0 * omega * (s.time - t));
                    }
                }
            }
            // Forward pass pairs each learning event with the earlier ones on the same column.
            pair_sums.clear();
            for (auto e = begin; e < end; ++e) {
                const auto& entry = entries_[e];
                if (entry.is_contribution) continue;
                for (std::uint32_t k = 0; k < entry.term_count; ++k) {
                    const auto term_index = entry.first_term + k;
                    auto& r = pair_sums[learn_terms_[term_index].coord];
                    const double earlier = r.value == 0.0 ? 0.0 : r.value * std::exp(-omega * (entry.time - r.time));
                    knowledge_part[term_index] *= 1.0 + 2.0 * earlier;
                    r.value = earlier + 1.0;
                    r.time = entry.time;
                }
            }
        }
    });
    for (std::size_t t = 0; t < knowledge_part.size(); ++t) {
        norms[learn_terms_[t].coord] += knowledge_part[t];
    }
    return norms;
}

std::vector<double> DesignMatrix::rates(std::span<const double> theta, unsigned threads) const {
    if (theta.size() != n_coords_) {
        throw DimensionMismatch("theta has the wrong size");
    }
    std::vector<double> by_entry(entries_.size(), 0.0);
    const std::size_t n_chunks = chunk_user_offsets_.size() - 1;
    std::vector<double> chunk_ll(n_chunks, 0.0);
    std::vector<std::size_t> chunk_floored(n_chunks, 0);
    parallel_tasks(n_chunks, threads, [&](std::size_t chunk) {
        run_chunk(chunk, theta, by_entry, {}, {}, chunk_ll[chunk], chunk_floored[chunk]);
    });
    std::vector<double> out(rows(), 0.0);
    for (std::size_t e = 0; e < entries_.size(); ++e) {
        if (entries_[e].is_contribution) out[entries_[e].row] = by_entry[e];
    }
    return out;
}

double log_likelihood(const DesignMatrix& x, std::span<const double> theta, unsigned threads) {
    return x.evaluate(theta, {}, threads);
}

std::vector<double> gradient(const DesignMatrix& x, std::span<const double> theta, unsigned threads) {
    std::vector<double> grad(x.cols(), 0.0);
    x.evaluate(theta, grad, threads);
    return grad;
}

double log_factorial_constant(const DesignMatrix& x) {
    double total = 0.0;
    for (const double s : x.scores()) {
        total += std::lgamma(s + 1.0);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Binary cache

namespace {

constexpr char kMagic[4] = {'C', 'L', 'D', 'M'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_le(std::ostream& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto bits = std::bit_cast<U>(value);
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class T>
bool read_le(std::istream& in, T& value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    unsigned char buf[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) {
        return false;
    }
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bits |= static_cast<U>(buf[i]) << (8 * i);
    }
    value = std::bit_cast<T>(bits);
    return true;
}

template <class T>
void write_block(std::ostream& out, const std::vector<T>& v) {
    write_le<std::uint64_t>(out, v.size());
    for (const auto& x : v) write_le(out, x);
}

template <class T>
bool read_block(std::istream& in, std::vector<T>& v) {
    std::uint64_t n = 0;
    if (!read_le(in, n) || n > (std::uint64_t{1} << 40)) return false;
    v.resize(n);
    for (auto& x : v) {
        if (!read_le(in, x)) return false;
    }
    return true;
}

} // namespace

void DesignMatrix::save(std::ostream& out, std::uint64_t dataset_hash) const {
    out.write(kMagic, 4);
    write_le(out, kVersion);
    write_le(out, dataset_hash);
    write_le(out, kernel_.omega());
    write_le<std::uint64_t>(out, n_coords_);
    write_block(out, scores_);
    write_block(out, user_entry_offsets_);
    write_block(out, user_slot_counts_);
    write_block(out, chunk_user_offsets_);
    write_block(out, row_user_);
    // Entries and terms are written as parallel column blocks.
    std::vector<double> times;
    std::vector<std::uint32_t> first, count, row, kind, cslot, calpha, cmu, lslot, lcoord;
    std::vector<double> ccoef;
    for (const auto& e : entries_) {
        times.push_back(e.time);
        first.push_back(e.first_term);
        count.push_back(e.term_count);
        row.push_back(e.row);
        kind.push_back(e.is_contribution);
    }
    for (const auto& t : contrib_terms_) {
        cslot.push_back(t.slot);
        calpha.push_back(t.alpha);
        cmu.push_back(t.mu);
        ccoef.push_back(t.coef);
    }
    for (const auto& t : learn_terms_) {
        lslot.push_back(t.slot);
        lcoord.push_back(t.coord);
    }
    for (const auto* block : {&first, &count, &row, &kind, &cslot, &calpha, &cmu, &lslot, &lcoord}) {
        write_block(out, *block);
    }
    write_block(out, times);
    write_block(out, ccoef);
}

std::optional<DesignMatrix> DesignMatrix::load(std::istream& in, std::uint64_t dataset_hash, double omega) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) return std::nullopt;
    std::uint32_t version = 0;
    std::uint64_t hash = 0;
    double stored_omega = 0.0;
    std::uint64_t n_coords = 0;
    if (!read_le(in, version) || version != kVersion) return std::nullopt;
    if (!read_le(in, hash) || hash != dataset_hash) return std::nullopt;
    if (!read_le(in, stored_omega) || stored_omega != omega) return std::nullopt;
    if (!read_le(in, n_coords)) return std::nullopt;

    DesignMatrix x{Kernel(omega)};
    x.n_coords_ = n_coords;
    std::vector<double> times, ccoef;
    std::vector<std::uint32_t> first, count, row, kind, cslot, calpha, cmu, lslot, lcoord;
    bool ok = read_block(in, x.scores_) && read_block(in, x.user_entry_offsets_) &&
              read_block(in, x.user_slot_counts_) && read_block(in, x.chunk_user_offsets_) &&
              read_block(in, x.row_user_);
    for (auto* block : {&first, &count, &row, &kind, &cslot, &calpha, &cmu, &lslot, &lcoord}) {
        ok = ok && read_block(in, *block);
    }
    ok = ok && read_block(in, times) && read_block(in, ccoef);
    if (!ok || times.size() != first.size() || ccoef.size() != cslot.size() || lslot.size() != lcoord.size()) {
        return std::nullopt;
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
        x.entries_.push_back({times[i], first[i], count[i], row[i], kind[i]});
    }
    for (std::size_t i = 0; i < cslot.size(); ++i) {
        x.contrib_terms_.push_back({cslot[i], calpha[i], cmu[i], ccoef[i]});
    }
    for (std::size_t i = 0; i < lslot.size(); ++i) {
        x.learn_terms_.push_back({lslot[i], lcoord[i]});
    }
    if (!x.index_entry_scores()) return std::nullopt;
    return x;
}

} // namespace crowdlearn
