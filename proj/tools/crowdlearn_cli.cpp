// Command-line front end: simulate, preprocess, fit, evaluate, sweep, analyze.

#include "crowdlearn/analytics.hpp"
#include "crowdlearn/errors.hpp"
#include "crowdlearn/evaluation.hpp"
#include "crowdlearn/io.hpp"
#include "crowdlearn/parallel.hpp"
#include "crowdlearn/solver.hpp"
#include "crowdlearn/synthgen.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#ifndef CROWDLEARN_VERSION
#define CROWDLEARN_VERSION "0.0.0"
#endif

namespace {

namespace fs = std::filesystem;
namespace io = crowdlearn::io;
using crowdlearn::io::Json;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitMaxIter = 2;

// ---------------------------------------------------------------------------
// Config file and environment

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string option_key(std::string key) {
    for (auto& c : key) {
        if (c == '_') c = '-';
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return key;
}

std::map<std::string, std::string> read_config_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw crowdlearn::ConfigInvalid("cannot read config file " + file.string());
    }
    std::map<std::string, std::string> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw crowdlearn::ConfigInvalid(file.string() + ":" + std::to_string(line_no) + ": expected key=value");
        }
        auto value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        values[option_key(trim(line.substr(0, eq)))] = value;
    }
    return values;
}

std::optional<std::string> config_path(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].starts_with("--config=")) return args[i].substr(9);
    }
    return std::nullopt;
}

// Options absent from the command line are filled from CROWDLEARN_<NAME>
// first, then from the config file.
std::vector<std::string> inject_defaults(CLI::App& app, std::vector<std::string> args) {
    if (args.empty()) return args;
    CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands({})) {
        if (s->get_name() == args.front()) sub = s;
    }
    if (sub == nullptr) return args;

    std::set<std::string> given;
    for (const auto& a : args) {
        if (a.starts_with("--")) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
    }
    std::map<std::string, std::string> file_values;
    if (const auto path = config_path(args)) file_values = read_config_file(*path);

    std::vector<std::string> extra;
    for (const auto* opt : sub->get_options()) {
        for (const auto& name : opt->get_lnames()) {
            if (name == "help" || name == "config" || given.count(name)) continue;
            std::string env = "CROWDLEARN_";
            for (const char c : name) env += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            if (const char* v = std::getenv(env.c_str())) {
                extra.push_back("--" + name + "=" + v);
            } else if (const auto it = file_values.find(name); it != file_values.end()) {
                extra.push_back("--" + name + "=" + it->second);
            }
        }
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
    std::string command;
    Json inputs = Json::object();
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void input(const std::string& role, const fs::path& path) {
        inputs[role] = {{"path", path.string()}, {"hash", io::content_hash(path)}};
    }

    void write(const fs::path& dir, const CLI::App& sub, const std::string& status) const {
        Json config = Json::object();
        for (const auto* opt : sub.get_options()) {
            if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
            const auto& name = opt->get_lnames().front();
            if (opt->count() > 0) {
                std::string joined;
                for (const auto& r : opt->results()) joined += (joined.empty() ? "" : ",") + r;
                config[name] = joined;
            } else {
                config[name] = opt->get_default_str();
            }
        }
        Json j;
        j["command"] = command;
        j["version"] = CROWDLEARN_VERSION;
        j["status"] = status;
        j["config"] = std::move(config);
        j["inputs"] = inputs;
        j["wall_time_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        io::write_json(dir / "manifest.json", j);
    }
};

// ---------------------------------------------------------------------------
// Shared option groups

struct SolverFlags {
    int max_iter{500};
    double tol_grad{1e-6};
    double tol_obj{1e-9};
    unsigned threads{0};

    void add(CLI::App& sub) {
        sub.add_option("--max-iter", max_iter, "Solver iteration cap")->capture_default_str();
        sub.add_option("--tol-grad", tol_grad, "Projected-gradient tolerance")->capture_default_str();
        sub.add_option("--tol-obj", tol_obj, "Relative objective-change tolerance")->capture_default_str();
        sub.add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
    }
    [[nodiscard]] crowdlearn::SolverOptions options() const {
        crowdlearn::SolverOptions o;
        o.max_iterations = max_iter;
        o.grad_tolerance = tol_grad;
        o.objective_rel_tolerance = tol_obj;
        o.threads = threads == 0 ? crowdlearn::default_thread_count() : threads;
        return o;
    }
};

// ---------------------------------------------------------------------------
// Commands

struct SimulateArgs {
    fs::path out;
    std::uint64_t seed{1};
    std::size_t topics{1};
    std::optional<std::size_t> users, items, learning_events, contributions, min_learning;
    std::optional<double> horizon, generating_half_life;
};

int cmd_simulate(const SimulateArgs& a, const CLI::App& sub) {
    Manifest m{"simulate"};
    auto cfg = crowdlearn::benchmark_config(a.topics, a.seed);
    if (a.users) cfg.n_users = *a.users;
    if (a.items) cfg.n_items = *a.items;
    if (a.learning_events) cfg.target_learning_events = *a.learning_events;
    if (a.contributions) cfg.target_contributions = *a.contributions;
    if (a.min_learning) cfg.min_learning_events_per_item = *a.min_learning;
    if (a.horizon) cfg.horizon = *a.horizon;
    if (a.generating_half_life) cfg.omega = crowdlearn::half_life_to_omega(*a.generating_half_life);
    const auto data = crowdlearn::generate(cfg);
    io::write_dataset(a.out, data.dataset);
    io::write_json(a.out / "truth.json", io::to_json(data.truth));
    m.write(a.out, sub, "ok");
    std::cout << "simulated " << data.dataset.learning_events().size() << " learning events and "
              << data.dataset.contributions().size() << " contributions into " << a.out << '\n';
    return kExitOk;
}

struct PreprocessArgs {
    fs::path data, out;
    bool validate_only{false};
    bool filter{false};
    crowdlearn::FilterConfig rules;
    bool detrend{false};
    double bin_days{30.0};
    double split{0.0};
};

int cmd_preprocess(const PreprocessArgs& a, const CLI::App& sub) {
    Manifest m{"preprocess"};
    m.input("data", a.data);
    const auto raw = io::read_event_log(a.data);
    const auto report = crowdlearn::validate_dataset(raw);
    fs::create_directories(a.out);
    io::write_json(a.out / "validation.json", io::to_json(report));
    if (!report.ok()) {
        m.write(a.out, sub, "invalid");
        std::cerr << "validation failed with " << report.error_count() << " errors; see "
                  << (a.out / "validation.json") << '\n';
        return kExitInvalid;
    }
    if (a.validate_only) {
        m.write(a.out, sub, "ok");
        return kExitOk;
    }
    auto d = crowdlearn::build_dataset(raw);
    if (a.filter) d = crowdlearn::filter_dataset(d, a.rules);
    if (a.detrend) d = crowdlearn::detrend_scores(d, a.bin_days);
    if (a.split > 0.0) {
        const auto [train, test] = crowdlearn::split_train_test(d, a.split);
        io::write_dataset(a.out / "train", train);
        io::write_test_set(a.out / "test", test, train);
    } else {
        io::write_dataset(a.out / "data", d);
    }
    m.write(a.out, sub, "ok");
    return kExitOk;
}

struct FitArgs {
    fs::path data, out;
    double half_life{7.0};
    bool baseline{false};
    std::optional<fs::path> design_cache;
    SolverFlags solver;
};

crowdlearn::DesignMatrix cached_design(const crowdlearn::Dataset& d, const crowdlearn::Kernel& kernel,
                                       const crowdlearn::ParameterIndex& idx, unsigned threads,
                                       const std::optional<fs::path>& cache) {
    const auto hash = crowdlearn::fingerprint(d);
    if (cache && fs::exists(*cache)) {
        std::ifstream in(*cache, std::ios::binary);
        if (auto loaded = crowdlearn::DesignMatrix::load(in, hash, kernel.omega());
            loaded && loaded->cols() == idx.size()) {
            return std::move(*loaded);
        }
    }
    auto design = crowdlearn::DesignMatrix::build(d, kernel, idx, threads);
    if (cache) {
        if (cache->has_parent_path()) fs::create_directories(cache->parent_path());
        std::ofstream out(*cache, std::ios::binary | std::ios::trunc);
        design.save(out, hash);
    }
    return design;
}

int cmd_fit(const FitArgs& a, const CLI::App& sub) {
    Manifest m{"fit"};
    m.input("data", a.data);
    const auto d = io::read_dataset(a.data);
    const auto opts = a.solver.options();
    opts.validate();
    if (d.contributions().empty()) {
        throw crowdlearn::NoContributions("the dataset has no contributions to fit");
    }
    const auto kernel = crowdlearn::Kernel::from_half_life(a.half_life);
    const auto idx = crowdlearn::ParameterIndex::build(d, !a.baseline);
    const auto design = cached_design(d, kernel, idx, opts.threads, a.design_cache);
    const auto result = crowdlearn::fit(d, idx, design, opts);
    const bool capped = result.converged_by == crowdlearn::StopReason::max_iter;
    io::write_json(a.out / "fit.json", io::to_json(result));
    m.write(a.out, sub, capped ? "max_iter" : "ok");
    std::cout << "log-likelihood " << result.log_likelihood << " after " << result.iterations << " iterations ("
              << crowdlearn::to_string(result.converged_by) << ")\n";
    if (capped) {
        std::cerr << "warning: solver stopped at the iteration cap\n";
        return kExitMaxIter;
    }
    return kExitOk;
}

struct EvaluateArgs {
    fs::path model, data, out;
    std::optional<fs::path> baseline, test, truth;
    std::vector<double> thresholds{1, 2, 3, 4, 5, 6, 7};
};

int cmd_evaluate(const EvaluateArgs& a, const CLI::App& sub) {
    Manifest m{"evaluate"};
    if (!a.truth && !a.test) {
        throw crowdlearn::ConfigInvalid("evaluate needs --truth, --test, or both");
    }
    if (a.test && !a.baseline) {
        throw crowdlearn::ConfigInvalid("pairwise prediction needs --baseline");
    }
    m.input("model", a.model);
    m.input("data", a.data);
    const auto model = io::read_fit_parameters(a.model);
    const auto train = io::read_dataset(a.data);
    fs::create_directories(a.out);
    if (a.truth) {
        m.input("truth", *a.truth);
        const auto truth = io::parameters_from_json(io::read_json(*a.truth));
        const auto idx = crowdlearn::ParameterIndex::build(train, true);
        const auto report = crowdlearn::recovery_report(truth, model, idx);
        io::write_json(a.out / "recovery.json", io::to_json(report));
        io::write_text(a.out / "recovery.csv", io::to_csv(report));
        std::cout << io::to_csv(report);
    }
    if (a.test) {
        m.input("baseline", *a.baseline);
        m.input("test", *a.test);
        const auto baseline = io::read_fit_parameters(*a.baseline);
        const auto test = io::read_test_set(*a.test, train);
        const auto table = crowdlearn::pairwise_prediction(model, baseline, train, test, a.thresholds);
        io::write_json(a.out / "prediction.json", io::to_json(table));
        io::write_text(a.out / "prediction.csv", io::to_csv(table));
        std::cout << io::to_csv(table);
    }
    m.write(a.out, sub, "ok");
    return kExitOk;
}

struct SweepArgs {
    fs::path data, out;
    std::vector<double> half_lives{0.5, 2, 7, 30, 90};
    SolverFlags solver;
};

int cmd_sweep(const SweepArgs& a, const CLI::App& sub) {
    Manifest m{"sweep"};
    m.input("data", a.data);
    const auto d = io::read_dataset(a.data);
    const auto points = crowdlearn::sweep_half_life(d, a.half_lives, a.solver.options());
    io::write_json(a.out / "sweep.json", io::to_json(points));
    io::write_text(a.out / "sweep.csv", io::to_csv(points));
    std::cout << io::to_csv(points);
    const bool capped = std::any_of(points.begin(), points.end(), [](const auto& p) {
        return p.converged_by == crowdlearn::StopReason::max_iter;
    });
    m.write(a.out, sub, capped ? "max_iter" : "ok");
    return capped ? kExitMaxIter : kExitOk;
}

struct AnalyzeArgs {
    fs::path fit, data, out;
    std::string report;
    std::string user;
    double grid_step{1.0};
    double zero_threshold{crowdlearn::kDefaultZeroThreshold};
    std::string offsite{"integral"};
};

int cmd_analyze(const AnalyzeArgs& a, const CLI::App& sub) {
    Manifest m{"analyze"};
    m.input("fit", a.fit);
    m.input("data", a.data);
    const auto p = io::read_fit_parameters(a.fit);
    const auto d = io::read_dataset(a.data);
    std::ostringstream csv;
    if (a.report == "decomposition") {
        const auto reading =
            a.offsite == "growth" ? crowdlearn::OffsiteReading::growth : crowdlearn::OffsiteReading::integral;
        crowdlearn::write_csv(csv, crowdlearn::onsite_offsite(p, d, d.horizon(), reading), d);
    } else if (a.report == "knowledge-dist") {
        crowdlearn::write_csv(csv, crowdlearn::knowledge_distribution(p, a.zero_threshold), p);
    } else if (a.report == "useful-upvotes") {
        crowdlearn::write_csv(csv, crowdlearn::useful_upvote_fraction(p, d, a.zero_threshold), d);
    } else if (a.report == "contribution-split") {
        crowdlearn::write_csv(csv, crowdlearn::contribution_knowledge(p, d), d);
    } else {
        if (a.user.empty()) {
            throw crowdlearn::ConfigInvalid("the trajectory report needs --user");
        }
        if (!(a.grid_step > 0.0)) {
            throw crowdlearn::ConfigInvalid("--grid-step must be positive");
        }
        std::vector<double> grid;
        for (double t = 0.0; t <= d.horizon(); t += a.grid_step) grid.push_back(t);
        crowdlearn::write_csv(csv, crowdlearn::learning_trajectory(p, d, a.user, grid), d);
    }
    io::write_text(a.out / (a.report + ".csv"), csv.str());
    m.write(a.out, sub, "ok");
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Estimate learning and contribution dynamics from event logs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", CROWDLEARN_VERSION);

    const auto add_config = [](CLI::App* sub) {
        // Read by inject_defaults before parsing; declared so it shows in --help.
        sub->add_option("--config", "key=value file with option defaults");
    };

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset with ground truth");
    simulate->add_option("--out", sim.out, "Output directory")->required();
    simulate->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
    simulate->add_option("--topics", sim.topics, "Number of topics")->capture_default_str();
    simulate->add_option("--users", sim.users, "Number of users");
    simulate->add_option("--items", sim.items, "Number of items");
    simulate->add_option("--learning-events", sim.learning_events, "Total learning events before the item minimum");
    simulate->add_option("--contributions", sim.contributions, "Total contributions");
    simulate->add_option("--min-learning-per-item", sim.min_learning, "Drop learning events on rarer items");
    simulate->add_option("--horizon", sim.horizon, "Observation window in days");
    simulate->add_option("--generating-half-life", sim.generating_half_life, "Kernel half-life in days");
    add_config(simulate);

    PreprocessArgs pre;
    auto* preprocess = app.add_subcommand("preprocess", "Validate, filter, detrend and split a dataset");
    preprocess->add_option("--data", pre.data, "Dataset directory")->required();
    preprocess->add_option("--out", pre.out, "Output directory")->required();
    preprocess->add_flag("--validate-only", pre.validate_only, "Only write validation.json");
    preprocess->add_flag("--filter", pre.filter, "Apply the activity filters");
    preprocess->add_option("--min-learning", pre.rules.min_learning_events, "Items need more learning events than this")
        ->capture_default_str();
    preprocess->add_option("--min-contributions", pre.rules.min_contributions, "Users need more contributions than this")
        ->capture_default_str();
    preprocess->add_option("--min-months", pre.rules.min_active_months, "Users need this many active months")
        ->capture_default_str();
    preprocess->add_option("--top-topics", pre.rules.top_topics, "Keep the most frequent topics (0 = all)")
        ->capture_default_str();
    preprocess->add_flag("--detrend", pre.detrend, "Remove the platform-wide score drift");
    preprocess->add_option("--bin-days", pre.bin_days, "Detrending bin width in days")->capture_default_str();
    preprocess->add_option("--split", pre.split, "Train fraction of a chronological split (0 = no split)")
        ->capture_default_str();
    add_config(preprocess);

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit the model by maximum likelihood");
    fit_cmd->add_option("--data", fit.data, "Dataset directory")->required();
    fit_cmd->add_option("--out", fit.out, "Output directory")->required();
    fit_cmd->add_option("--half-life", fit.half_life, "Forgetting half-life in days")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    fit_cmd->add_flag("--baseline", fit.baseline, "Fit the off-site-only model");
    fit_cmd->add_option("--design-cache", fit.design_cache, "Binary design-matrix cache file");
    fit.solver.add(*fit_cmd);
    add_config(fit_cmd);

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Parameter recovery and pairwise prediction");
    evaluate->add_option("--model", ev.model, "Fitted model (fit.json)")->required();
    evaluate->add_option("--data", ev.data, "Dataset the model was fitted on")->required();
    evaluate->add_option("--out", ev.out, "Output directory")->required();
    evaluate->add_option("--baseline", ev.baseline, "Fitted baseline (fit.json)");
    evaluate->add_option("--test", ev.test, "Held-out events directory");
    evaluate->add_option("--truth", ev.truth, "Ground-truth parameters (truth.json)");
    evaluate->add_option("--thresholds", ev.thresholds, "Score-difference thresholds")
        ->delimiter(',')
        ->capture_default_str();
    add_config(evaluate);

    SweepArgs sw;
    auto* sweep = app.add_subcommand("sweep", "Refit over a grid of half-lives");
    sweep->add_option("--data", sw.data, "Dataset directory")->required();
    sweep->add_option("--out", sw.out, "Output directory")->required();
    sweep->add_option("--half-lives", sw.half_lives, "Half-lives in days")->delimiter(',')->capture_default_str();
    sw.solver.add(*sweep);
    add_config(sweep);

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Post-fit analyses as CSV");
    analyze->add_option("--fit", an.fit, "Fitted model (fit.json)")->required();
    analyze->add_option("--data", an.data, "Dataset directory")->required();
    analyze->add_option("--out", an.out, "Output directory")->required();
    analyze->add_option("--report", an.report, "Report to produce")
        ->required()
        ->check(CLI::IsMember({"decomposition", "knowledge-dist", "useful-upvotes", "contribution-split", "trajectory"}));
    analyze->add_option("--user", an.user, "User for the trajectory report");
    analyze->add_option("--grid-step", an.grid_step, "Trajectory grid spacing in days")->capture_default_str();
    analyze->add_option("--zero-threshold", an.zero_threshold, "Knowledge below this counts as zero")
        ->capture_default_str();
    analyze->add_option("--offsite", an.offsite, "Off-site reading: integral or growth")
        ->capture_default_str()
        ->check(CLI::IsMember({"integral", "growth"}));
    add_config(analyze);

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = inject_defaults(app, std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalid;
    } catch (const crowdlearn::Error& e) {
        std::cerr << e.what() << '\n';
        return kExitInvalid;
    }

    try {
        if (*simulate) return cmd_simulate(sim, *simulate);
        if (*preprocess) return cmd_preprocess(pre, *preprocess);
        if (*fit_cmd) return cmd_fit(fit, *fit_cmd);
        if (*evaluate) return cmd_evaluate(ev, *evaluate);
        if (*sweep) return cmd_sweep(sw, *sweep);
        if (*analyze) return cmd_analyze(an, *analyze);
    } catch (const crowdlearn::Error& e) {
        std::cerr << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const fs::filesystem_error& e) {
        std::cerr << e.what() << '\n';
        return kExitInvalid;
    }
    return kExitInvalid;
}
