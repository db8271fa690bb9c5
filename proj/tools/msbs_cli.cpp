#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "msbs/msbs.hpp"

namespace fs = std::filesystem;
using namespace msbs;

namespace {

struct RunConfig {
    std::string command;
    std::string input;
    std::string response = "y";
    std::vector<std::string> nonlinear;
    std::vector<std::string> linear;
    int knots = 20;
    std::string knot_strategy = "quantile";
    double pj = 0.4;
    int iterations = 11000;
    int burn_in = 1000;
    int pilot_iterations = 200;
    std::uint64_t seed = 1;
    std::string out = "msbs_out";
    std::string pseudo_prior;
    std::string gamma;
    std::string selection;
    int grid = 200;
    int n = 500;
    int p = 10;
    int q = 10;
    double rho = 0.5;
    double sigma2 = 1.0;
    int replications = 20;
    int jobs = 1;

    ChainConfig chain() const {
        ChainConfig c;
        c.iterations = iterations;
        c.burn_in = burn_in;
        c.pilot_iterations = pilot_iterations;
        c.seed = seed;
        return c;
    }

    KnotStrategy strategy() const {
        return knot_strategy == "equispaced" ? KnotStrategy::equispaced : KnotStrategy::quantile;
    }

    SimDesign design() const { return {p, q, n, rho, sigma2, seed}; }

    void validate() const {
        chain().validate();
        if (knots < 2) throw Error(ErrorKind::InvalidInput, "knots must be at least 2");
        if (!(pj > 0.0 && pj < 1.0)) throw Error(ErrorKind::InvalidInput, "pj must lie in (0, 1)");
        if (grid < 2) throw Error(ErrorKind::InvalidInput, "grid must be at least 2");
        if (replications < 1) throw Error(ErrorKind::InvalidInput, "replications must be positive");
        if (jobs < 1) throw Error(ErrorKind::InvalidInput, "jobs must be positive");
        if (command == "simulate" || command == "benchmark") {
            design().validate();
        } else if (input.empty()) {
            throw Error(ErrorKind::InvalidInput, "--input is required for " + command);
        }
    }
};

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
}

void write_config(const fs::path& dir, const RunConfig& c) {
    std::ofstream out(dir / "config.txt");
    out << "# msbs " << version << '\n';
    out << "command=" << c.command << '\n'
        << "input=" << c.input << '\n'
        << "response=" << c.response << '\n'
        << "nonlinear=" << join(c.nonlinear) << '\n'
        << "linear=" << join(c.linear) << '\n'
        << "knots=" << c.knots << '\n'
        << "knot-strategy=" << c.knot_strategy << '\n'
        << "pj=" << format_double(c.pj) << '\n'
        << "iterations=" << c.iterations << '\n'
        << "burn-in=" << c.burn_in << '\n'
        << "pilot-iterations=" << c.pilot_iterations << '\n'
        << "seed=" << c.seed << '\n'
        << "pseudo-prior=" << c.pseudo_prior << '\n'
        << "gamma=" << c.gamma << '\n'
        << "selection=" << c.selection << '\n'
        << "grid=" << c.grid << '\n'
        << "n=" << c.n << '\n'
        << "p=" << c.p << '\n'
        << "q=" << c.q << '\n'
        << "rho=" << format_double(c.rho) << '\n'
        << "sigma2=" << format_double(c.sigma2) << '\n'
        << "replications=" << c.replications << '\n'
        << "jobs=" << c.jobs << '\n';
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::InvalidInput, "cannot write '" + path.string() + "'");
    return out;
}

std::string file_safe(std::string s) {
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') c = '_';
    return s;
}

struct Loaded {
    Dataset data;
    BasisLibrary basis;
};

Loaded load(const RunConfig& c) {
    auto data = dataset_from_table(read_csv(c.input), c.response, c.nonlinear, c.linear);
    auto basis = build_basis_library(data, c.knots, c.strategy());
    for (std::size_t j = 0; j < basis.dropped_knots.size(); ++j)
        if (basis.dropped_knots[j] > 0)
            std::cerr << "warning: predictor '" << data.x_names[j] << "' uses " << basis.blocks[j].knot_count()
                      << " knots (" << basis.dropped_knots[j] << " tied candidates dropped)\n";
    return {std::move(data), std::move(basis)};
}

void write_pilot_trace(std::ostream& out, std::span<const DeltaState> trace, const Dataset& data,
                       const BasisLibrary& basis) {
    out << "iteration";
    for (int j = 0; j < data.p(); ++j)
        for (int m = 0; m <= basis.blocks[static_cast<std::size_t>(j)].knot_count(); ++m)
            out << ',' << data.x_names[static_cast<std::size_t>(j)] << "_b" << m;
    out << '\n';
    for (std::size_t t = 0; t < trace.size(); ++t) {
        out << t + 1;
        for (const auto& mask : trace[t])
            for (auto v : mask) out << ',' << int(v);
        out << '\n';
    }
}

PseudoPrior pilot_stage(const RunConfig& c, const Loaded& l, const fs::path& dir, std::vector<DeltaState>* keep) {
    ChainConfig cfg = c.chain();
    cfg.seed = pilot_seed(c.seed);
    auto trace = run_pilot(l.data, l.basis, KnotPriorConfig::uniform(l.data.p(), c.pj), cfg);
    auto pp = fit_pseudo_prior(trace, l.basis.knot_counts());
    auto out = open_out(dir / "pseudo_prior.txt");
    write_pseudo_prior(out, pp, l.data.x_names);
    auto tr = open_out(dir / "pilot_trace.csv");
    write_pilot_trace(tr, trace, l.data, l.basis);
    if (keep) *keep = std::move(trace);
    return pp;
}

struct Selected {
    SelectionResult result;
    DeltaState last_delta;
};

Selected select_stage(const RunConfig& c, const Loaded& l, const fs::path& dir) {
    PseudoPrior pp;
    std::optional<DeltaState> start;
    if (!c.pseudo_prior.empty()) {
        std::ifstream in(c.pseudo_prior);
        if (!in) throw Error(ErrorKind::InvalidInput, "cannot open '" + c.pseudo_prior + "'");
        pp = read_pseudo_prior(in, l.data.x_names);
        auto out = open_out(dir / "pseudo_prior.txt");
        write_pseudo_prior(out, pp, l.data.x_names);
    } else {
        std::vector<DeltaState> pilot;
        pp = pilot_stage(c, l, dir, &pilot);
        start = pilot.back();
    }
    ChainConfig cfg = c.chain();
    cfg.seed = selection_seed(c.seed);
    const auto trace = run_model_selection(l.data, l.basis, pp, KnotPriorConfig::uniform(l.data.p(), c.pj), cfg, start);
    const auto result = select_model(trace);
    auto out = open_out(dir / "selection.csv");
    write_selection_result(out, result, l.data);
    auto tr = open_out(dir / "selection_trace.csv");
    write_selection_trace(tr, trace, l.data.p(), l.data.q());
    return {result, trace.delta.back()};
}

Effect parse_effect(const std::string& s, int max_level, const std::string& name) {
    if (s == "0") return Effect::none;
    if (s == "1") return Effect::linear;
    if (s == "2" && max_level == 2) return Effect::nonlinear;
    throw Error(ErrorKind::InvalidInput, "invalid indicator '" + s + "' for '" + name + "'");
}

/// "name=level,..." with unlisted predictors excluded.
GammaState parse_gamma(const std::string& spec, const Dataset& data) {
    GammaState g = null_model(data.p(), data.q());
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::InvalidInput, "expected name=level in --gamma, got '" + item + "'");
        const std::string name = item.substr(0, eq);
        const std::string level = item.substr(eq + 1);
        bool found = false;
        for (int j = 0; j < data.p(); ++j)
            if (data.x_names[static_cast<std::size_t>(j)] == name) {
                g.x[static_cast<std::size_t>(j)] = parse_effect(level, 2, name);
                found = true;
            }
        for (int k = 0; k < data.q(); ++k)
            if (data.z_names[static_cast<std::size_t>(k)] == name) {
                g.z[static_cast<std::size_t>(k)] = parse_effect(level, 1, name);
                found = true;
            }
        if (!found) throw Error(ErrorKind::InvalidInput, "unknown predictor '" + name + "' in --gamma");
    }
    return g;
}

GammaState read_selection(const std::string& path, const Dataset& data) {
    const auto t = read_csv(path);
    const auto pcol = t.find("predictor");
    const auto gcol = t.find("gamma_hat");
    if (pcol < 0 || gcol < 0) throw Error(ErrorKind::InvalidInput, "selection file lacks predictor/gamma_hat columns");
    std::string spec;
    for (const auto& row : t.rows)
        spec += row[static_cast<std::size_t>(pcol)] + "=" + row[static_cast<std::size_t>(gcol)] + ",";
    return parse_gamma(spec, data);
}

void estimate_stage(const RunConfig& c, const Loaded& l, const fs::path& dir) {
    GammaState gamma_hat;
    std::optional<DeltaState> start;
    if (!c.gamma.empty()) {
        gamma_hat = parse_gamma(c.gamma, l.data);
    } else if (!c.selection.empty()) {
        gamma_hat = read_selection(c.selection, l.data);
    } else {
        auto sel = select_stage(c, l, dir);
        gamma_hat = sel.result.gamma_hat;
        start = std::move(sel.last_delta);
    }

    ChainConfig cfg = c.chain();
    cfg.seed = estimation_seed(c.seed);
    const auto trace = run_estimation(l.data, l.basis, gamma_hat, KnotPriorConfig::uniform(l.data.p(), c.pj), cfg, start);
    auto out = open_out(dir / "summary.csv");
    write_summaries(out, posterior_summaries(trace, l.data, l.basis));
    for (int j = 0; j < l.data.p(); ++j) {
        if (gamma_hat.x[static_cast<std::size_t>(j)] != Effect::nonlinear) continue;
        auto f = open_out(dir / ("function_" + file_safe(l.data.x_names[static_cast<std::size_t>(j)]) + ".csv"));
        write_function_estimate(f, estimate_function(trace, l.basis, j, c.grid));
    }
    auto tr = open_out(dir / "estimation_trace.csv");
    write_estimation_trace(tr, trace, l.data, l.basis);
}

void simulate_stage(const RunConfig& c, const fs::path& dir) {
    const auto sim = generate_dataset(c.design());
    const auto& d = sim.data;
    auto out = open_out(dir / "data.csv");
    out << d.response_name;
    for (const auto& s : d.x_names) out << ',' << s;
    for (const auto& s : d.z_names) out << ',' << s;
    out << '\n';
    for (int i = 0; i < d.n(); ++i) {
        out << format_double(d.y(i));
        for (int j = 0; j < d.p(); ++j) out << ',' << format_double(d.x(i, j));
        for (int k = 0; k < d.q(); ++k) out << ',' << format_double(d.z(i, k) + d.z_means(k));
        out << '\n';
    }
    auto truth = open_out(dir / "truth.csv");
    truth << "predictor,gamma,beta\n";
    for (int j = 0; j < d.p(); ++j)
        truth << d.x_names[static_cast<std::size_t>(j)] << ',' << to_int(sim.truth.x[static_cast<std::size_t>(j)])
              << ",-\n";
    for (int k = 0; k < d.q(); ++k)
        truth << d.z_names[static_cast<std::size_t>(k)] << ',' << to_int(sim.truth.z[static_cast<std::size_t>(k)])
              << ',' << format_double(true_beta(k)) << '\n';
}

void benchmark_stage(const RunConfig& c, const fs::path& dir) {
    BenchmarkConfig b;
    b.replications = c.replications;
    b.jobs = c.jobs;
    b.pipeline.knots = c.knots;
    b.pipeline.strategy = c.strategy();
    b.pipeline.pj = c.pj;
    b.pipeline.chain = c.chain();
    const auto res = benchmark_run(c.design(), b);
    auto out = open_out(dir / "benchmark.csv");
    write_benchmark(out, res);
    write_benchmark(std::cout, res);
}

int run(const RunConfig& c) {
    c.validate();
    const bool simulated = c.command == "simulate" || c.command == "benchmark";
    std::optional<Loaded> l;
    if (!simulated) l = load(c);

    const fs::path dir(c.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::InvalidInput, "cannot create output directory '" + c.out + "'");
    write_config(dir, c);

    if (c.command == "simulate") simulate_stage(c, dir);
    else if (c.command == "benchmark") benchmark_stage(c, dir);
    else if (c.command == "pilot") pilot_stage(c, *l, dir, nullptr);
    else if (c.command == "select") select_stage(c, *l, dir);
    else estimate_stage(c, *l, dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Model selection for additive partial linear models"};
    app.set_version_flag("--version", version);
    app.set_config("--config", "", "flat key=value file; command-line flags take precedence");
    app.require_subcommand(1);

    RunConfig c;
    app.add_option("--input", c.input, "CSV file with a header row");
    app.add_option("--response", c.response, "response column")->capture_default_str();
    app.add_option("--nonlinear", c.nonlinear, "candidate nonlinear predictors")->delimiter(',');
    app.add_option("--linear", c.linear, "linear-only predictors")->delimiter(',');
    app.add_option("--knots", c.knots, "knot candidates per predictor")->capture_default_str();
    app.add_option("--knot-strategy", c.knot_strategy)
        ->check(CLI::IsMember({"quantile", "equispaced"}))
        ->capture_default_str();
    app.add_option("--pj", c.pj, "knot prior success probability")->capture_default_str();
    app.add_option("--iterations", c.iterations, "chain length including burn-in")->capture_default_str();
    app.add_option("--burn-in", c.burn_in)->capture_default_str();
    app.add_option("--pilot-iterations", c.pilot_iterations)->capture_default_str();
    app.add_option("--seed", c.seed)->capture_default_str();
    app.add_option("--out", c.out, "output directory")->capture_default_str();
    app.add_option("--pseudo-prior", c.pseudo_prior, "pseudo-prior table from a previous pilot run");
    app.add_option("--gamma", c.gamma, "fixed model for estimate, e.g. x1=2,x2=1,z1=1");
    app.add_option("--selection", c.selection, "selection.csv to take the fixed model from");
    app.add_option("--grid", c.grid, "function evaluation grid size")->capture_default_str();
    app.add_option("--n", c.n, "simulated sample size")->capture_default_str();
    app.add_option("--p", c.p, "simulated nonlinear candidates")->capture_default_str();
    app.add_option("--q", c.q, "simulated linear-only candidates")->capture_default_str();
    app.add_option("--rho", c.rho, "predictor equicorrelation")->capture_default_str();
    app.add_option("--sigma2", c.sigma2, "noise variance")->capture_default_str();
    app.add_option("--replications", c.replications)->capture_default_str();
    app.add_option("--jobs", c.jobs, "worker threads for benchmark")->capture_default_str();

    const std::pair<const char*, const char*> commands[] = {
        {"pilot", "run the pilot chain and fit the pseudo-prior"},
        {"select", "pilot, then the model selection chain and the per-predictor decision"},
        {"estimate", "post-selection estimation for a fixed or selected model"},
        {"simulate", "write one synthetic dataset and its true model"},
        {"benchmark", "misclassification and mESS over simulated replications"},
    };
    for (const auto& [name, help] : commands)
        app.add_subcommand(name, help)->fallthrough()->callback([&c, name] { c.command = name; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return run(c);
    } catch (const Error& e) {
        std::cerr << "msbs " << c.command << ": " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "msbs " << c.command << ": " << e.what() << '\n';
        return 2;
    }
}
