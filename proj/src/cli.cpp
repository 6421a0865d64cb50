#include "vstat/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vstat/asymptotics.hpp"
#include "vstat/config.hpp"
#include "vstat/montecarlo.hpp"
#include "vstat/parallel.hpp"
#include "vstat/varadhan.hpp"

namespace vstat {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class Csv {
public:
    explicit Csv(std::vector<std::string> header) : cols_(header.size()) { line(header); }
    void row(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw std::logic_error("csv row width mismatch");
        line(cells);
    }
    const std::string& text() const { return text_; }

private:
    void line(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
        text_ += '\n';
    }
    size_t cols_;
    std::string text_;
};

struct Output {
    std::string name;
    std::string text;
    bool csv;
};

struct Job {
    const RunConfig& rc;
    std::string hash;
    std::vector<Output> files;

    void csv(const std::string& name, const Csv& c) { files.push_back({name, c.text(), true}); }
    void report(const std::string& name, json j) {
        j["config_hash"] = hash;
        files.push_back({name, j.dump(2) + "\n", false});
    }
};

std::vector<std::string> axis_names(const char* prefix, int dim) {
    std::vector<std::string> out;
    for (int i = 0; i < dim; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

std::vector<std::string> matrix_names(const char* prefix, int dim) {
    std::vector<std::string> out;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) out.push_back(std::string(prefix) + "_" + std::to_string(i) + "_" + std::to_string(j));
    return out;
}

void append_matrix(std::vector<std::string>& cells, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) cells.push_back(num(m(i, j)));
}

json matrix_json(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(row);
    }
    return out;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

MinimizeOptions minimize_options(int dim) {
    MinimizeOptions o;
    if (dim > 1) o.starts = 12;
    return o;
}

// Evaluation point of jterm/asymptotics: configured base, else the Frechet mean (origin when flat).
Point default_base(const RunConfig& rc) {
    if (rc.base) return *rc.base;
    const auto f = VaradhanFunction::population(rc.density, 0.0, rc.experiment.res, rc.kernel);
    const MeanResult m = minimize(f, minimize_options(rc.dim));
    return m.flat ? Point(Vector::Zero(rc.dim)) : m.minimizer;
}

void cmd_varadhan(Job& job) {
    const RunConfig& rc = job.rc;
    const int m = rc.dim;
    Csv values(with(with({"t"}, axis_names("x_", m)), {"F_value", "config_hash"}));
    Csv means(with(with({"t"}, axis_names("mean_", m)), {"variance", "uniqueness_margin", "converged", "flat", "config_hash"}));
    json rep = {{"command", "varadhan"}, {"density", rc.density.describe()}, {"results", json::array()}};
    const std::vector<Point> grid = FlatTorus(m).grid(rc.grid_res);
    for (double t : rc.t_list) {
        const auto f = VaradhanFunction::population(rc.density, t, rc.experiment.res, rc.kernel);
        for (const Point& x : grid) {
            std::vector<std::string> cells{num(t)};
            for (int i = 0; i < m; ++i) cells.push_back(num(x[i]));
            cells.push_back(num(f.eval(x)));
            cells.push_back(job.hash);
            values.row(cells);
        }
        const MeanResult r = minimize(f, minimize_options(m));
        std::vector<std::string> cells{num(t)};
        for (int i = 0; i < m; ++i) cells.push_back(num(r.minimizer[i]));
        for (const auto& c : {num(r.value), num(r.uniqueness_margin), std::string(r.converged ? "1" : "0"),
                              std::string(r.flat ? "1" : "0"), job.hash}) {
            cells.push_back(c);
        }
        means.row(cells);
        json starts = json::array();
        for (const auto& s : r.starts) {
            starts.push_back({{"start_index", s.start_index},
                              {"start", vector_json(s.start.coords)},
                              {"point", vector_json(s.point.coords)},
                              {"value", s.value},
                              {"converged", s.converged},
                              {"iterations", s.iterations}});
        }
        rep["results"].push_back({{"t", t},
                                  {"mean", vector_json(r.minimizer.coords)},
                                  {"variance", r.value},
                                  {"uniqueness_margin", std::isfinite(r.uniqueness_margin) ? json(r.uniqueness_margin) : json(nullptr)},
                                  {"converged", r.converged},
                                  {"flat", r.flat},
                                  {"starts", starts}});
    }
    job.csv("varadhan_values.csv", values);
    job.csv("varadhan_means.csv", means);
    job.report("varadhan.json", rep);
}

void cmd_jterm(Job& job) {
    const RunConfig& rc = job.rc;
    const Point base = default_base(rc);
    const JLimit jl = j_limit(rc.density, base, rc.jterm, rc.kernel);
    Csv c(with(with({"delta", "t"}, matrix_names("J", rc.dim)), {"spread", "config_hash"}));
    for (const auto& row : jl.table) {
        std::vector<std::string> cells{num(row.delta), num(row.t)};
        append_matrix(cells, row.value);
        cells.push_back(num(std::nan("")));
        cells.push_back(job.hash);
        c.row(cells);
    }
    std::vector<std::string> cells{num(0.0), num(0.0)};
    append_matrix(cells, jl.value);
    cells.push_back(num(jl.spread));
    cells.push_back(job.hash);
    c.row(cells);
    job.csv("jterm.csv", c);
    json rep = jl.to_json();
    rep["command"] = "jterm";
    rep["base"] = vector_json(base.coords);
    rep["density"] = rc.density.describe();
    job.report("jterm.json", rep);
}

void cmd_asymptotics(Job& job) {
    const RunConfig& rc = job.rc;
    std::vector<double> times;
    for (double t : rc.t_list)
        if (t > 0.0) times.push_back(t);
    if (times.empty()) times = kDefaultTimeSchedule;
    std::sort(times.begin(), times.end(), std::greater<>());

    const Point base = default_base(rc);
    const int res = rc.experiment.res;
    const GradientLimit gl = gradient_limit(rc.density, base, times, res, rc.kernel);
    const HessianLimit hl = hessian_limit(rc.density, base, times, rc.jterm, res, rc.kernel);
    const double scale = std::max(hl.limit.norm(), 1.0);
    const NeighborhoodGap ng =
        hessian_neighborhood_gap(rc.density, base, 0.25, rc.dim == 1 ? 5 : 3, times, rc.jterm, res, rc.kernel);

    Csv c(with(with({"t", "grad_gap", "hess_gap", "hess_gap_neighborhood"}, matrix_names("sigma", rc.dim)), {"config_hash"}));
    json rep = {{"command", "asymptotics"},
                {"base", vector_json(base.coords)},
                {"density", rc.density.describe()},
                {"gradient_target", vector_json(gl.target)},
                {"hessian_limit", matrix_json(hl.limit)},
                {"hessian_rel_gap", hl.rel_gap},
                {"hessian_inconsistent", hl.inconsistent},
                {"j", hl.j.to_json()},
                {"hessian_neighborhood", ng.to_json()},
                {"sigma_t", json::array()}};
    for (size_t k = 0; k < times.size(); ++k) {
        const CovarianceReport cr = sigma_t(rc.density, times[k], res, rc.kernel);
        std::vector<std::string> cells{num(times[k]), num(gl.gaps[k]), num((hl.direct_path[k] - hl.limit).norm() / scale),
                                       num(ng.max_gap[k])};
        append_matrix(cells, cr.sigma);
        cells.push_back(job.hash);
        c.row(cells);
        rep["sigma_t"].push_back(cr.to_json());
    }
    const CovarianceReport c0 = sigma_zero(rc.density, res, rc.jterm, rc.kernel);
    std::vector<std::string> cells{num(0.0), num(std::nan("")), num(std::nan("")), num(std::nan(""))};
    append_matrix(cells, c0.sigma);
    cells.push_back(job.hash);
    c.row(cells);
    rep["sigma_zero"] = c0.to_json();
    job.csv("asymptotics.csv", c);
    job.report("asymptotics.json", rep);
}

void experiment_outputs(Job& job, const std::string& stem, const ExperimentReport& r) {
    Csv c({"t", "n", "statistic", "value", "target", "rel_error", "config_hash"});
    for (const auto& rec : r.records) {
        c.row({num(rec.t), std::to_string(rec.n), rec.statistic, num(rec.value), num(rec.target), num(rec.rel_error), job.hash});
    }
    job.csv(stem + ".csv", c);
    json rep = r.to_json();
    rep["command"] = stem;
    rep["seed"] = job.rc.experiment.seed;
    rep["R"] = job.rc.experiment.R;
    job.report(stem + ".json", rep);
}

void cmd_ulln(Job& job) { experiment_outputs(job, "ulln", run_ulln(job.rc.experiment)); }

void cmd_clt(Job& job) {
    const std::string& k = job.rc.experiment_kind;
    const ExperimentConfig& ec = job.rc.experiment;
    const ExperimentReport r =
        k == "function" ? run_clt_function(ec) : k == "variance" ? run_clt_variance(ec) : run_clt_mean(ec);
    experiment_outputs(job, "clt_" + k, r);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream o(p, std::ios::binary | std::ios::trunc);
    if (!o) throw std::runtime_error("cannot write '" + p.string() + "'");
    o << text;
    if (!o) throw std::runtime_error("write failed for '" + p.string() + "'");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Varadhan functions, means and variances on flat tori", "vstat"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> reps;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"varadhan", "evaluate the Varadhan function on a grid and report its means"},
        {"jterm", "cut-locus correction table and its extrapolated limit"},
        {"asymptotics", "small-time gradient, Hessian and covariance limits"},
        {"ulln", "uniform law of large numbers experiment"},
        {"clt", "central limit theorem experiment (mean, variance or function)"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", config_path, "experiment configuration (TOML)")->required();
        sub->add_option("-o,--out", out_dir, "output directory (overrides [output] dir)");
        sub->add_option("--seed", seed, "override [experiment] seed");
        sub->add_option("--reps", reps, "override [experiment] R");
    }

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        const std::string started = utc_now();
        const RunConfig rc = build_config(parse_toml(read_file(config_path)), seed, reps);
        parallel::set_workers(rc.workers);
        Job job{rc, rc.hash(), {}};
        if (command == "varadhan") cmd_varadhan(job);
        if (command == "jterm") cmd_jterm(job);
        if (command == "asymptotics") cmd_asymptotics(job);
        if (command == "ulln") cmd_ulln(job);
        if (command == "clt") cmd_clt(job);

        const fs::path dir = out_dir.empty() ? fs::path(rc.out_dir) : fs::path(out_dir);
        fs::create_directories(dir);
        json manifest = {{"command", command},
                         {"config_hash", job.hash},
                         {"config_path", config_path},
                         {"seed", rc.experiment.seed},
                         {"version", kVersion},
                         {"workers", parallel::workers()},
                         {"started", started},
                         {"outputs", json::array()}};
        job.files.push_back({"config.toml", "# config_hash = " + job.hash + "\n" + to_toml(rc.source.data), false});
        for (const auto& f : job.files) {
            const bool json_file = f.name.ends_with(".json");
            if ((f.csv && rc.format == "json") || (json_file && rc.format == "csv")) continue;
            write_file(dir / f.name, f.text);
            manifest["outputs"].push_back((dir / f.name).string());
            out << (dir / f.name).string() << "\n";
        }
        manifest["finished"] = utc_now();
        write_file(dir / "manifest.json", manifest.dump(2) + "\n");
        return kExitOk;
    } catch (const HypothesisViolation& e) {
        err << "vstat " << command << ": hypothesis violation: " << e.what() << "\n";
        return kExitHypothesis;
    } catch (const NumericalError& e) {
        err << "vstat " << command << ": numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const CutLocusError& e) {
        err << "vstat " << command << ": numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const InvalidInput& e) {
        err << "vstat " << command << ": " << e.what() << "\n";
        return kExitConfig;
    } catch (const Unsupported& e) {
        err << "vstat " << command << ": unsupported: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "vstat " << command << ": internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace vstat
