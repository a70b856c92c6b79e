#include "crowdlearn/io.hpp"

#include "crowdlearn/errors.hpp"
#include "crowdlearn/text.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

namespace crowdlearn::io {

namespace {

std::ifstream open_in(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + file.string());
    }
    return in;
}

std::ofstream open_out(const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write " + file.string());
    }
    return out;
}

template <class F>
void for_each_record(const fs::path& file, F&& on_record) {
    auto in = open_in(file);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = file.filename().string() + ":" + std::to_string(line_no);
        Json j;
        try {
            j = Json::parse(line);
            if (!j.is_object()) throw FormatError("record is not an object");
            on_record(j);
        } catch (const Json::exception& e) {
            throw FormatError(where + ": " + e.what());
        } catch (const FormatError& e) {
            std::string message = e.what();
            const std::string prefix = "FormatError: ";
            if (message.starts_with(prefix)) message.erase(0, prefix.size());
            throw FormatError(where + ": " + message);
        }
    }
}

Json event_record(const RawEvent& e) {
    Json j;
    j["type"] = e.kind == EventKind::learn ? "learn" : "contribute";
    j["user"] = e.user;
    j["time"] = e.time;
    j["item"] = e.item;
    if (e.kind == EventKind::contribute) j["score"] = e.score;
    return j;
}

RawEvent parse_event(const Json& j, const std::string& type) {
    RawEvent e;
    e.kind = type == "learn" ? EventKind::learn : EventKind::contribute;
    e.user = j.at("user").get<std::string>();
    e.time = j.at("time").get<double>();
    e.item = j.at("item").get<std::string>();
    if (e.kind == EventKind::contribute) e.score = j.at("score").get<double>();
    return e;
}

} // namespace

RawEventLog read_event_log(const fs::path& dir) {
    RawEventLog raw;
    for_each_record(dir / kItemsFile, [&](const Json& j) {
        raw.catalog.push_back({j.at("item").get<std::string>(), j.at("topics").get<std::vector<std::string>>()});
    });
    for_each_record(dir / kEventsFile, [&](const Json& j) {
        const auto type = j.at("type").get<std::string>();
        if (type == "meta") {
            if (j.contains("horizon")) raw.horizon = j.at("horizon").get<double>();
            if (j.contains("users")) raw.users = j.at("users").get<std::vector<std::string>>();
            if (j.contains("topics")) raw.topics = j.at("topics").get<std::vector<std::string>>();
        } else if (type == "learn" || type == "contribute") {
            raw.events.push_back(parse_event(j, type));
        } else {
            throw FormatError("unknown record type '" + type + "'");
        }
    });
    return raw;
}

void write_event_log(const fs::path& dir, const RawEventLog& raw) {
    fs::create_directories(dir);
    {
        auto out = open_out(dir / kItemsFile);
        for (const auto& item : raw.catalog) {
            Json j;
            j["item"] = item.id;
            j["topics"] = item.topics;
            out << j.dump() << '\n';
        }
    }
    auto out = open_out(dir / kEventsFile);
    if (raw.horizon || !raw.users.empty() || !raw.topics.empty()) {
        Json meta;
        meta["type"] = "meta";
        if (raw.horizon) meta["horizon"] = *raw.horizon;
        if (!raw.topics.empty()) meta["topics"] = raw.topics;
        if (!raw.users.empty()) meta["users"] = raw.users;
        out << meta.dump() << '\n';
    }
    for (const auto& e : raw.events) out << event_record(e).dump() << '\n';
}

Dataset read_dataset(const fs::path& dir) { return build_dataset(read_event_log(dir)); }

void write_dataset(const fs::path& dir, const Dataset& d) { write_event_log(dir, to_raw(d)); }

void write_test_set(const fs::path& dir, const TestSet& test, const Dataset& train) {
    fs::create_directories(dir);
    auto out = open_out(dir / kEventsFile);
    std::size_t i = 0, j = 0;
    const auto& ls = test.learning_events;
    const auto& cs = test.contributions;
    while (i < ls.size() || j < cs.size()) {
        if (j >= cs.size() || (i < ls.size() && ls[i].time <= cs[j].time)) {
            const auto& e = ls[i++];
            out << event_record({EventKind::learn, train.user_name(e.user), e.time, train.item(e.item).id, 0.0}).dump()
                << '\n';
        } else {
            const auto& c = cs[j++];
            out << event_record({EventKind::contribute, train.user_name(c.user), c.time, train.item(c.item).id,
                                 c.score})
                       .dump()
                << '\n';
        }
    }
}

TestSet read_test_set(const fs::path& dir, const Dataset& train) {
    TestSet test;
    for_each_record(dir / kEventsFile, [&](const Json& j) {
        const auto type = j.at("type").get<std::string>();
        if (type == "meta") return;
        if (type != "learn" && type != "contribute") {
            throw FormatError("unknown record type '" + type + "'");
        }
        const auto e = parse_event(j, type);
        const auto user = train.find_user(e.user);
        const auto item = train.find_item(e.item);
        if (!user || !item) {
            throw FormatError("test event refers to '" + (user ? e.item : e.user) + "', absent from the train data");
        }
        if (e.kind == EventKind::learn) {
            test.learning_events.push_back({*user, e.time, *item});
        } else {
            test.contributions.push_back({*user, e.time, *item, e.score});
        }
    });
    return test;
}

// ---------------------------------------------------------------------------

Json to_json(const ParameterSet& p) {
    Json j;
    j["half_life_days"] = p.kernel.half_life();
    j["users"] = p.users;
    j["topics"] = p.topics;
    j["items"] = p.items;
    const auto dense = [](const DenseMatrix& m) {
        Json rows = Json::array();
        for (std::size_t r = 0; r < m.rows(); ++r) {
            const auto row = m.row(r);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        return rows;
    };
    j["alpha"] = dense(p.alpha);
    j["mu"] = dense(p.mu);
    Json k = Json::array();
    for (std::size_t q = 0; q < p.knowledge.size(); ++q) {
        for (const auto& cell : p.knowledge[q]) {
            k.push_back(Json::array({p.items[q], p.topics[cell.topic.get()], cell.value}));
        }
    }
    j["knowledge"] = std::move(k);
    return j;
}

ParameterSet parameters_from_json(const Json& j) {
    try {
        ParameterSet p;
        p.kernel = Kernel::from_half_life(j.at("half_life_days").get<double>());
        p.users = j.at("users").get<std::vector<std::string>>();
        p.topics = j.at("topics").get<std::vector<std::string>>();
        p.items = j.at("items").get<std::vector<std::string>>();
        const auto dense = [&](const Json& rows, const char* name) {
            DenseMatrix m(p.users.size(), p.topics.size());
            if (rows.size() != p.users.size()) throw FormatError(std::string(name) + " needs one row per user");
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const auto values = rows[r].get<std::vector<double>>();
                if (values.size() != p.topics.size()) {
                    throw FormatError(std::string(name) + " needs one column per topic");
                }
                for (std::size_t c = 0; c < values.size(); ++c) m(r, c) = values[c];
            }
            return m;
        };
        p.alpha = dense(j.at("alpha"), "alpha");
        p.mu = dense(j.at("mu"), "mu");
        std::unordered_map<std::string, std::size_t> item_of, topic_of;
        for (std::size_t i = 0; i < p.items.size(); ++i) item_of.emplace(p.items[i], i);
        for (std::size_t a = 0; a < p.topics.size(); ++a) topic_of.emplace(p.topics[a], a);
        p.knowledge.assign(p.items.size(), {});
        for (const auto& t : j.at("knowledge")) {
            const auto q = item_of.find(t.at(0).get<std::string>());
            const auto a = topic_of.find(t.at(1).get<std::string>());
            if (q == item_of.end() || a == topic_of.end()) {
                throw FormatError("knowledge triplet names an unknown item or topic");
            }
            p.knowledge[q->second].push_back({TopicId{a->second}, t.at(2).get<double>()});
        }
        p.check_invariants();
        return p;
    } catch (const Json::exception& e) {
        throw FormatError(std::string("parameter file: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("parameter file: ") + e.what());
    }
}

Json to_json(const FitResult& r) {
    Json j;
    j["parameters"] = to_json(r.params);
    j["log_likelihood"] = r.log_likelihood;
    j["negative_log_likelihood"] = r.negative_log_likelihood;
    j["iterations"] = r.iterations;
    j["converged_by"] = std::string(to_string(r.converged_by));
    j["objective_trace"] = r.objective_trace;
    return j;
}

ParameterSet read_fit_parameters(const fs::path& file) {
    const auto j = read_json(file);
    return parameters_from_json(j.contains("parameters") ? j.at("parameters") : j);
}

Json to_json(const ValidationReport& r) {
    Json j;
    j["ok"] = r.ok();
    j["error_count"] = r.error_count();
    j["dangling_ids"] = r.dangling_ids;
    j["unsorted_events"] = r.unsorted_events;
    j["negative_scores"] = r.negative_scores;
    j["empty_topic_sets"] = r.empty_topic_sets;
    j["out_of_window"] = r.out_of_window;
    return j;
}

namespace {

// NaN has no JSON spelling; it becomes null.
Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json family_json(const FamilyRecovery& f) {
    Json j;
    j["spearman"] = number(f.spearman);
    j["rmse"] = number(f.rmse);
    j["compared"] = f.compared;
    j["skipped"] = f.skipped;
    return j;
}

} // namespace

Json to_json(const RecoveryReport& r) {
    Json j;
    j["alpha"] = family_json(r.alpha);
    j["mu"] = family_json(r.mu);
    j["knowledge"] = family_json(r.knowledge);
    return j;
}

Json to_json(const PredictionTable& t) {
    Json rows = Json::array();
    for (const auto& r : t.rows) {
        Json j;
        j["threshold"] = r.threshold;
        j["n_pairs"] = r.n_pairs;
        j["baseline_accuracy"] = r.baseline_accuracy;
        j["model_accuracy"] = r.model_accuracy;
        rows.push_back(std::move(j));
    }
    return rows;
}

Json to_json(const std::vector<SweepPoint>& points) {
    Json rows = Json::array();
    for (const auto& p : points) {
        Json j;
        j["half_life_days"] = p.half_life;
        j["negative_log_likelihood"] = p.negative_log_likelihood;
        j["relative_to_min"] = p.relative_to_min;
        j["iterations"] = p.iterations;
        j["converged_by"] = std::string(to_string(p.converged_by));
        rows.push_back(std::move(j));
    }
    return rows;
}

std::string to_csv(const RecoveryReport& r) {
    std::ostringstream out;
    out << "family,spearman,rmse,compared,skipped\n";
    const auto row = [&](const char* name, const FamilyRecovery& f) {
        out << name << ',' << format_double(f.spearman) << ',' << format_double(f.rmse) << ',' << f.compared << ','
            << f.skipped << '\n';
    };
    row("alpha", r.alpha);
    row("mu", r.mu);
    row("knowledge", r.knowledge);
    return out.str();
}

std::string to_csv(const PredictionTable& t) {
    std::ostringstream out;
    out << "threshold,n_pairs,baseline_accuracy,model_accuracy\n";
    for (const auto& r : t.rows) {
        out << format_double(r.threshold) << ',' << r.n_pairs << ',' << format_double(r.baseline_accuracy) << ','
            << format_double(r.model_accuracy) << '\n';
    }
    return out.str();
}

std::string to_csv(const std::vector<SweepPoint>& points) {
    std::ostringstream out;
    out << "half_life_days,negative_log_likelihood,relative_to_min,iterations,converged_by\n";
    for (const auto& p : points) {
        out << format_double(p.half_life) << ',' << format_double(p.negative_log_likelihood) << ','
            << format_double(p.relative_to_min) << ',' << p.iterations << ',' << to_string(p.converged_by) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------

Json read_json(const fs::path& file) {
    auto in = open_in(file);
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw FormatError(file.string() + ": " + e.what());
    }
}

void write_json(const fs::path& file, const Json& j) {
    auto out = open_out(file);
    out << j.dump(2) << '\n';
}

void write_text(const fs::path& file, const std::string& text) {
    auto out = open_out(file);
    out << text;
}

std::string read_text(const fs::path& file) {
    auto in = open_in(file);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string content_hash(const fs::path& path) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto feed = [&](const std::string& bytes) {
        for (const unsigned char c : bytes) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            feed(f.filename().string());
            feed(read_text(f));
        }
    } else {
        feed(read_text(path));
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

} // namespace crowdlearn::io
