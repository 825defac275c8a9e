#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "markovflow/calibration.hpp"
#include "markovflow/error.hpp"
#include "markovflow/skew_fit.hpp"

using namespace markovflow;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitIo = 4;

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::parse_error:
        case ErrorKind::io_error: return kExitIo;
        case ErrorKind::no_convergence:
        case ErrorKind::instability_detected:
        case ErrorKind::root_find_failure:
        case ErrorKind::optimizer_failure:
        case ErrorKind::solver_singularity:
        case ErrorKind::bracket_failure:
        case ErrorKind::vanishing_volatility:
        case ErrorKind::non_invertible_flow:
        case ErrorKind::unstitchable_path: return kExitConvergence;
        default: return kExitValidation;
    }
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io_error, "cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse_error, path + ": " + e.what());
    }
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io_error, "cannot write " + path.string());
    return out;
}

void write_json(const fs::path& path, nlohmann::json j, const std::string& hash) {
    j["engine_version"] = kEngineVersion;
    j["config_hash"] = hash;
    open_out(path) << j.dump(1) << '\n';
}

std::ofstream open_csv(const fs::path& path, const std::string& hash) {
    std::ofstream out = open_out(path);
    out << "# markovflow " << kEngineVersion << " config " << hash << '\n';
    return out;
}

std::string hash_of(const nlohmann::json& j) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream s;
    s << std::hex << h;
    return s.str();
}

std::vector<double> time_grid(const ModelSurface& model, const std::vector<double>& times, int nt) {
    if (!times.empty()) return times;
    std::vector<double> out;
    const double T = model.maturities().back();
    for (int k = 1; k <= nt; ++k) out.push_back(T * k / nt);
    return out;
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out;
    for (int k = 0; k < n; ++k) out.push_back(n == 1 ? lo : lo + (hi - lo) * k / (n - 1));
    return out;
}

struct Options {
    RunConfig run;
    std::string scheme = "homogeneous";
    std::string rule = "inverse-sqrt";
    std::string input;
    std::string out;
    std::string report;
    std::string targets;
    std::vector<double> maturities;
    std::string lambda_rule = "inverse-sqrt";
    int modes = 4;
    int steps = 100;
    std::vector<double> times;
    int nt = 60;
    std::vector<double> ys;
    double y_lo = -5.0, y_hi = 5.0;
    int ny = 101;
    std::vector<double> ts_y;
    std::string ts_out;
    bool reference = false;
};

void add_run_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--scheme", o.scheme, "bass-chl | homogeneous | continuous")->capture_default_str();
    cmd->add_option("--grid-nt", o.run.grid_nt, "time steps per period")->capture_default_str();
    cmd->add_option("--grid-nx", o.run.grid_nx, "space nodes per period grid")->capture_default_str();
    cmd->add_option("--grid-width", o.run.grid_width, "grid half-width in sqrt(T) units")->capture_default_str();
    cmd->add_option("--ymax", o.run.y_max, "flow extrapolation level")->capture_default_str();
    cmd->add_option("--tol", o.run.tolerance, "fixed-point tolerance")->capture_default_str();
    cmd->add_option("--max-iter", o.run.max_iterations, "fixed-point iteration cap")->capture_default_str();
    cmd->add_option("--rule", o.rule, "inverse-sqrt | log-linear")->capture_default_str();
    cmd->add_option("--window-lo", o.run.window_lo, "rate window start (default 50 / 100)");
    cmd->add_option("--window-hi", o.run.window_hi, "rate window end (default 100 / 500)");
}

int cmd_synth_de(const Options& o) {
    if (o.lambda_rule != "inverse-sqrt") throw Error(ErrorKind::invalid_argument, "only lambda = 1/sqrt(t) is built in");
    const MarginalSet set = make_double_exponential_set(o.maturities);
    write_json(o.out, to_json(set), hash_of({{"maturities", o.maturities}, {"lambda", o.lambda_rule}}));
    return 0;
}

int cmd_fit_skews(const Options& o) {
    std::ifstream in(o.input);
    if (!in) throw Error(ErrorKind::io_error, "cannot open " + o.input);
    const auto quotes = read_quotes_csv(in);
    const auto slices = build_slices(quotes);
    const SequenceResult r = fit_sequence(slices, o.modes);
    const std::string hash = hash_of({{"input", o.input}, {"modes", o.modes}});
    write_json(o.out, to_json(r.marginals), hash);

    const fs::path report = o.report.empty() ? fs::path(o.out).replace_extension(".report.csv") : fs::path(o.report);
    auto csv = open_csv(report, hash);
    csv << "slice,maturity,quote_rms,refit_rms,calendar_floors,butterfly_floors,optimizer_ok\n";
    for (std::size_t i = 0; i < r.reports.size(); ++i) {
        const auto& s = r.reports[i];
        csv << i << ',' << s.maturity << ',' << s.quote_rms << ',' << s.refit_rms << ',' << s.calendar_floors << ','
            << s.butterfly_floors << ',' << (s.optimizer_ok ? 1 : 0) << '\n';
    }
    const auto order = check_convex_order(r.marginals, pde_strike_grid());
    if (!order.ok()) {
        std::cerr << "markovflow: " << order.violations.size() << " convex-order violations in the fitted set\n";
        return kExitValidation;
    }
    return 0;
}

int cmd_calibrate(Options o) {
    o.run.scheme = scheme_from_string(o.scheme);
    o.run.rule = term_structure_from_string(o.rule);
    const MarginalSet set = marginal_set_from_json(read_json(o.input));
    const auto order = check_convex_order(set, pde_strike_grid(400, 0.2, 5.0, std::max(std::abs(set.spot), 1.0)));
    if (!order.ok()) throw Error(ErrorKind::convex_order_violation, "marginal set is not in convex order");
    const CalibrationResult r = calibrate(set, o.run);
    const std::string hash = o.run.hash();

    const fs::path dir = o.out;
    nlohmann::json model = to_json(r.surface);
    model["config"] = o.run.to_json();
    write_json(dir / "model.json", model, hash);
    for (std::size_t i = 0; i < r.surface.periods.size(); ++i) {
        auto csv = open_csv(dir / ("log_period_" + std::to_string(i) + ".csv"), hash);
        write_log_csv(csv, period_log(r.surface.periods[i]));
    }
    auto rates = open_csv(dir / "rates.csv", hash);
    write_rates_csv(rates, r);
    for (const auto& rate : r.rates) {
        std::cout << "period " << rate.period << " [" << period_start(r.surface.periods[rate.period]) << ", "
                  << period_end(r.surface.periods[rate.period]) << "] "
                  << to_string(period_status(r.surface.periods[rate.period])) << " rate ";
        if (rate.rate) std::cout << *rate.rate; else std::cout << "n/a";
        std::cout << '\n';
    }
    if (!r.converged) {
        std::cerr << "markovflow: some periods stopped at the iteration cap\n";
        return kExitConvergence;
    }
    return 0;
}

ModelSurface load_model(const std::string& path, std::string& hash) {
    if (!fs::exists(path)) throw Error(ErrorKind::io_error, "file not found: " + path);
    const auto j = read_json(path);
    hash = j.value("config_hash", std::string("none"));
    return model_surface_from_json(j);
}

int cmd_export(const Options& o) {
    std::string hash;
    const ModelSurface model = load_model(o.input, hash);
    const auto ts = time_grid(model, o.times, o.nt);
    const auto ys = o.ys.empty() ? linspace(o.y_lo, o.y_hi, o.ny) : o.ys;
    auto csv = open_csv(o.out, hash);
    write_surface_csv(csv, o.reference ? de_reference_surface(ts, ys) : export_surface(model, ts, ys));
    if (!o.ts_out.empty()) {
        auto ts_csv = open_csv(o.ts_out, hash);
        write_surface_csv(ts_csv, export_surface(model, ts, o.ts_y.empty() ? std::vector<double>{0, 1, 2, 3} : o.ts_y));
    }
    return 0;
}

int cmd_simulate(const Options& o) {
    std::string hash;
    const ModelSurface model = load_model(o.input, hash);
    SimulationConfig sc{o.run.paths, o.steps, o.run.seed};
    const PathSet paths = simulate(model, sc);
    MarginalSet targets;
    if (!o.targets.empty()) targets = marginal_set_from_json(read_json(o.targets));
    const auto rows = summarize(paths, o.targets.empty() ? nullptr : &targets);
    nlohmann::json j{{"paths", paths.n_paths},
                     {"steps_per_period", paths.steps_per_period},
                     {"seed", paths.seed},
                     {"spot", model.spot},
                     {"clamped_stitches", paths.clamped_stitches},
                     {"max_stitch_residual", paths.max_stitch_residual}};
    for (const auto& r : rows) {
        nlohmann::json m{{"maturity", r.maturity}, {"mean", r.mean}, {"stderr", r.stderr_mean},
                         {"martingale_ok", std::abs(r.mean - model.spot) < 3.0 * r.stderr_mean}};
        if (r.ks >= 0.0) m["ks"] = r.ks;
        j["maturities"].push_back(m);
    }
    write_json(o.out, j, hash_of({{"model", hash}, {"paths", sc.n_paths}, {"steps", sc.steps_per_period}, {"seed", sc.seed}}));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"markovflow: local-volatility calibration with flow functions"};
    app.require_subcommand(1);
    Options o;

    auto* synth = app.add_subcommand("synth-de", "write the double-exponential marginal set");
    synth->add_option("--maturities", o.maturities, "increasing maturities")->delimiter(',')->required();
    synth->add_option("--lambda-rule", o.lambda_rule, "decay rule")->capture_default_str();
    synth->add_option("-o,--out", o.out, "output JSON")->required();

    auto* fit = app.add_subcommand("fit-skews", "fit arbitrage-free mixed-lognormal marginals to quotes");
    fit->add_option("quotes", o.input, "CSV: maturity_days,strike,implied_vol,forward")->required();
    fit->add_option("--modes", o.modes, "lognormal modes")->capture_default_str();
    fit->add_option("-o,--out", o.out, "output marginal-set JSON")->required();
    fit->add_option("--report", o.report, "fit report CSV");

    auto* cal = app.add_subcommand("calibrate", "calibrate a model to a marginal set");
    cal->add_option("marginals", o.input, "marginal-set JSON")->required();
    cal->add_option("-o,--out-dir", o.out, "output directory")->required();
    add_run_flags(cal, o);

    auto* exp = app.add_subcommand("export", "local-vol surface and term-structure CSV");
    exp->add_option("model", o.input, "model JSON")->required();
    exp->add_option("-o,--out", o.out, "surface CSV")->required();
    exp->add_option("--times", o.times, "time grid")->delimiter(',');
    exp->add_option("--nt", o.nt, "uniform time points when --times is absent")->capture_default_str();
    exp->add_option("--ys", o.ys, "level grid")->delimiter(',');
    exp->add_option("--y-lo", o.y_lo)->capture_default_str();
    exp->add_option("--y-hi", o.y_hi)->capture_default_str();
    exp->add_option("--ny", o.ny)->capture_default_str();
    exp->add_option("--ts-y", o.ts_y, "levels for the term-structure file")->delimiter(',');
    exp->add_option("--ts-out", o.ts_out, "term-structure CSV");
    exp->add_flag("--reference", o.reference, "write the closed-form double-exponential surface instead");

    auto* sim = app.add_subcommand("simulate", "Monte Carlo paths of a calibrated model");
    sim->add_option("model", o.input, "model JSON")->required();
    sim->add_option("-o,--out", o.out, "summary JSON")->required();
    sim->add_option("--paths", o.run.paths)->capture_default_str();
    sim->add_option("--steps", o.steps, "Euler steps per period")->capture_default_str();
    sim->add_option("--seed", o.run.seed)->capture_default_str();
    sim->add_option("--targets", o.targets, "marginal set for KS distances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*synth) return cmd_synth_de(o);
        if (*fit) return cmd_fit_skews(o);
        if (*cal) return cmd_calibrate(o);
        if (*exp) return cmd_export(o);
        if (*sim) return cmd_simulate(o);
    } catch (const Error& e) {
        std::cerr << "markovflow: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "markovflow: " << e.what() << '\n';
        return kExitIo;
    }
    return 0;
}
