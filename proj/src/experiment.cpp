#include "oseki/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace oseki::experiment {

namespace pt = boost::property_tree;

namespace {

const std::vector<std::string> kExperiments{"oned_linear", "oned_nonlinear", "twod_poisson", "custom"};
const std::vector<std::string> kMethods{"redTik", "osEKI_1", "osEKI_2", "osQN_1", "nnosEKI_2", "nnosQN_1"};
const std::vector<std::string> kModels{"reaction_diffusion_1d", "nonlinear_diffusion_1d", "poisson_2d"};

bool contains(const std::vector<std::string> &list, const std::string &s) {
    return std::find(list.begin(), list.end(), s) != list.end();
}

std::string join(const std::vector<std::string> &list) {
    std::string out;
    for (const auto &s : list) out += (out.empty() ? "" : ", ") + s;
    return out;
}

// text conversion for config fields

// shortest text that reads back to the same double
std::string to_text(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}
std::string to_text(long v) { return std::to_string(v); }
std::string to_text(int v) { return std::to_string(v); }
std::string to_text(std::uint64_t v) { return std::to_string(v); }
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(const std::string &v) { return v; }
std::string to_text(const std::vector<int> &v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

[[noreturn]] void bad_value(const std::string &key, const std::string &text) {
    throw ConfigError("invalid value '" + text + "' for " + key);
}

template <class F>
auto parse_whole(const std::string &key, const std::string &text, F convert) {
    try {
        std::size_t used = 0;
        auto v = convert(text, &used);
        if (used != text.size()) bad_value(key, text);
        return v;
    } catch (const std::logic_error &) {
        bad_value(key, text);
    }
}

void from_text(const std::string &key, const std::string &t, double &v) {
    const char *end = t.data() + t.size();
    const auto res = std::from_chars(t.data(), end, v);
    if (t.empty() || res.ec == std::errc::invalid_argument || res.ptr != end) bad_value(key, t);
    if (res.ec == std::errc::result_out_of_range) {
        // from_chars leaves v untouched on underflow and overflow
        const double r = std::strtod(t.c_str(), nullptr);
        if (!std::isfinite(r)) bad_value(key, t);
        v = r;
    }
}
void from_text(const std::string &key, const std::string &t, long &v) {
    v = parse_whole(key, t, [](const std::string &s, std::size_t *n) { return std::stol(s, n); });
}
void from_text(const std::string &key, const std::string &t, int &v) {
    v = parse_whole(key, t, [](const std::string &s, std::size_t *n) { return std::stoi(s, n); });
}
void from_text(const std::string &key, const std::string &t, std::uint64_t &v) {
    if (t.empty() || t[0] == '-') bad_value(key, t);
    v = parse_whole(key, t, [](const std::string &s, std::size_t *n) { return std::stoull(s, n); });
}
void from_text(const std::string &key, const std::string &t, bool &v) {
    if (t == "true" || t == "1") v = true;
    else if (t == "false" || t == "0") v = false;
    else bad_value(key, t);
}
void from_text(const std::string &, const std::string &t, std::string &v) { v = t; }
void from_text(const std::string &key, const std::string &t, std::vector<int> &v) {
    v.clear();
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ',')) {
        int n = 0;
        from_text(key, item, n);
        v.push_back(n);
    }
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const ExperimentConfig &)> get;
    std::function<void(ExperimentConfig &, const std::string &)> set;
};

template <class T>
Field field(std::string section, std::string key, T ExperimentConfig::*member) {
    const std::string full = section + "." + key;
    return {section, key, [member](const ExperimentConfig &c) { return to_text(c.*member); },
            [member, full](ExperimentConfig &c, const std::string &t) { from_text(full, t, c.*member); }};
}

const std::vector<Field> &fields() {
    using C = ExperimentConfig;
    static const std::vector<Field> list{
        field("experiment", "id", &C::experiment),
        field("experiment", "method", &C::method),
        field("model", "kind", &C::model),
        field("model", "n_u", &C::n_u),
        field("model", "length", &C::length),
        field("model", "source", &C::source),
        field("model", "obs_levels", &C::obs_levels),
        field("model", "mesh", &C::mesh),
        field("model", "obs_points", &C::obs_points),
        field("model", "n_y", &C::n_y),
        field("prior", "beta", &C::beta),
        field("prior", "nu", &C::nu),
        field("prior", "tau", &C::tau),
        field("noise", "gamma_obs", &C::gamma_obs),
        field("noise", "gamma_model", &C::gamma_model),
        field("loss", "alpha1", &C::alpha1),
        field("loss", "alpha2", &C::alpha2),
        field("network", "hidden_layers", &C::hidden_layers),
        field("solver", "particles", &C::particles),
        field("solver", "schedule", &C::schedule),
        field("solver", "lambda0", &C::lambda0),
        field("solver", "stages", &C::stages),
        field("solver", "lambda_max", &C::lambda_max),
        field("solver", "t_end", &C::t_end),
        field("solver", "rtol", &C::rtol),
        field("solver", "atol", &C::atol),
        field("solver", "flow", &C::flow),
        field("solver", "state_variance", &C::state_variance),
        field("solver", "network_variance", &C::network_variance),
        field("solver", "workers", &C::workers),
        field("bfgs", "max_iterations", &C::bfgs_max_iterations),
        field("bfgs", "gradient_tol", &C::bfgs_gradient_tol),
        field("bfgs", "fd_step", &C::bfgs_fd_step),
        field("bfgs", "warm_start", &C::warm_start),
        field("seeds", "truth", &C::truth_seed),
        field("seeds", "noise", &C::noise_seed),
        field("seeds", "solver", &C::solver_seed),
        field("seeds", "observation", &C::observation_seed),
    };
    return list;
}

const Field &find_field(const std::string &key) {
    for (const Field &f : fields())
        if (f.section + "." + f.key == key) return f;
    throw ConfigError("unknown config key '" + key + "'");
}

// problem assembly

struct Setup {
    std::shared_ptr<const fem::ForwardModel> model;
    std::shared_ptr<const fem::ObservationOperator> obs;
    std::shared_ptr<const GaussianPrior> prior;
    MatrixXd nodes;
};

Setup build_setup(const ExperimentConfig &c) {
    Setup s;
    if (c.model == "poisson_2d") {
        const fem::Mesh2D mesh = c.mesh == "builtin" ? fem::default_mesh_2d() : fem::read_mesh_file(c.mesh);
        const MatrixXd points = c.obs_points == "builtin" ? fem::random_unit_square_points(c.n_y, c.observation_seed)
                                                          : fem::read_points_file(c.obs_points, 2);
        s.model = std::make_shared<fem::LinearModel>(fem::poisson_2d(mesh));
        s.obs = std::make_shared<fem::ObservationOperator>(fem::ObservationOperator::on_mesh(mesh, points));
        s.prior = std::make_shared<GaussianPrior>(fem::laplacian_prior_2d(mesh, c.beta, c.nu, c.tau));
    } else {
        const fem::Grid1D grid{c.n_u, c.length};
        if (c.model == "reaction_diffusion_1d") {
            s.model = std::make_shared<fem::LinearModel>(fem::reaction_diffusion_1d(grid));
        } else {
            s.model = std::make_shared<fem::NonlinearDiffusion1D>(grid, c.source);
        }
        s.obs = std::make_shared<fem::ObservationOperator>(
            fem::ObservationOperator::on_grid(grid, fem::equispaced_points_1d(grid, c.obs_levels)));
        s.prior = std::make_shared<GaussianPrior>(fem::sine_prior_1d(grid, c.beta, c.nu));
    }
    s.nodes = s.model->state_points();
    return s;
}

std::shared_ptr<oneshot::Problem> build_problem(const ExperimentConfig &c, const Setup &s, const VectorXd &y) {
    auto p = std::make_shared<oneshot::Problem>();
    p->model = s.model;
    p->observation = s.obs;
    p->prior = s.prior;
    if (c.uses_network()) {
        nn::Architecture arch;
        arch.input_dim = s.nodes.cols();
        arch.layers.assign(c.hidden_layers.begin(), c.hidden_layers.end());
        arch.layers.push_back(1);
        p->state = std::make_shared<oneshot::NetworkState>(arch, s.nodes);
    } else {
        p->state = std::make_shared<oneshot::IdentityState>(s.model->state_dim());
    }
    p->data = y;
    p->gamma_obs = c.gamma_obs * MatrixXd::Identity(y.size(), y.size());
    const Index nw = s.model->residual_dim();
    p->gamma_model = c.gamma_model * MatrixXd::Identity(nw, nw);
    p->alpha1 = c.alpha1;
    p->alpha2 = c.alpha2;
    p->validate();
    return p;
}

baselines::BfgsConfig bfgs_config(const ExperimentConfig &c) {
    baselines::BfgsConfig b;
    b.max_iterations = c.bfgs_max_iterations;
    b.gradient_tol = c.bfgs_gradient_tol;
    b.fd_step = c.bfgs_fd_step;
    b.workers = c.workers;
    return b;
}

oneshot::PenaltySchedule make_schedule(const ExperimentConfig &c) {
    oneshot::PenaltySchedule s = oneshot::PenaltySchedule::named(c.schedule, c.lambda0, c.stages);
    s.lambda_max = c.lambda_max;
    return s;
}

// output

std::ofstream open_out(const std::filesystem::path &path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void write_nodal(const std::filesystem::path &path, const MatrixXd &coords,
                 const std::vector<std::pair<std::string, VectorXd>> &columns) {
    std::ofstream out = open_out(path);
    const char *axes[] = {"x", "y", "z"};
    for (Index d = 0; d < coords.cols(); ++d) out << (d ? "\t" : "") << axes[d];
    for (const auto &col : columns) out << '\t' << col.first;
    out << '\n';
    for (Index i = 0; i < coords.rows(); ++i) {
        for (Index d = 0; d < coords.cols(); ++d) out << (d ? "\t" : "") << format_number(coords(i, d));
        for (const auto &col : columns) out << '\t' << format_number(col.second[i]);
        out << '\n';
    }
}

TraceRow trace_row(const oneshot::Estimate &e) {
    return {e.lambda, e.time, e.diagnostics.data_misfit, e.diagnostics.model_residual,
            e.diagnostics.model_weighted, e.loss.total()};
}

void write_report_rows(std::ostream &out, int stage, const eki::EkiRunReport &r) {
    for (std::size_t i = 0; i < r.times.size(); ++i) {
        out << stage << '\t' << format_number(r.times[i]) << '\t'
            << (r.lambda.empty() ? std::string("nan") : format_number(r.lambda[i])) << '\t'
            << format_number(r.misfit[i]) << '\t' << format_number(r.spread[i]) << '\t'
            << format_number(r.image_spread[i]) << '\n';
    }
}

std::map<std::string, std::string> read_table(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::map<std::string, std::string> m;
    std::string line;
    while (std::getline(in, line)) {
        const auto tab = line.find('\t');
        if (tab != std::string::npos) m[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return m;
}

std::string read_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

ExperimentConfig ExperimentConfig::defaults(const std::string &experiment, const std::string &method) {
    if (!contains(kExperiments, experiment))
        throw ConfigError("unknown experiment '" + experiment + "' (expected " + join(kExperiments) + ")");
    if (!contains(kMethods, method))
        throw ConfigError("unknown method '" + method + "' (expected " + join(kMethods) + ")");
    ExperimentConfig c;
    c.experiment = experiment;
    c.method = method;
    if (experiment == "oned_nonlinear") {
        c.model = "nonlinear_diffusion_1d";
        c.beta = 1.0;
        c.nu = 2.0;
        c.gamma_obs = 1e-4;
        c.gamma_model = 10.0;
        c.alpha1 = 2.0;
        c.schedule = "ode_const";
        c.lambda0 = 0.0;
        c.truth_seed = 21;
        c.noise_seed = 22;
        c.solver_seed = 23;
    } else if (experiment == "twod_poisson") {
        c.model = "poisson_2d";
        c.beta = 100.0;
        c.nu = 2.0;
        c.tau = 1.0;
        c.gamma_obs = 0.01;
        c.gamma_model = 0.1;
        c.alpha1 = 0.002;
        c.particles = 300;
        c.schedule = "ode_inv_sq";
        c.lambda0 = 1.0;
        c.truth_seed = 31;
        c.noise_seed = 32;
        c.solver_seed = 33;
    } else {
        c.truth_seed = 11;
        c.noise_seed = 12;
        c.solver_seed = 13;
    }
    if (c.is_stagewise()) {
        c.schedule = "cubic_k3";
        c.lambda0 = 1.0;
    }
    return c;
}

bool ExperimentConfig::is_stagewise() const {
    return method == "osEKI_1" || method == "osQN_1" || method == "nnosQN_1";
}

void ExperimentConfig::validate() const {
    const auto check = [](bool ok, const std::string &msg) {
        if (!ok) throw ConfigError(msg);
    };
    check(contains(kExperiments, experiment), "unknown experiment '" + experiment + "'");
    check(contains(kMethods, method), "unknown method '" + method + "'");
    check(contains(kModels, model), "unknown model kind '" + model + "' (expected " + join(kModels) + ")");
    if (experiment == "oned_linear") check(model == "reaction_diffusion_1d", "oned_linear needs model.kind = reaction_diffusion_1d");
    if (experiment == "oned_nonlinear") check(model == "nonlinear_diffusion_1d", "oned_nonlinear needs model.kind = nonlinear_diffusion_1d");
    if (experiment == "twod_poisson") check(model == "poisson_2d", "twod_poisson needs model.kind = poisson_2d");
    check(method != "redTik" || linear_model(), "method redTik needs a linear forward model");

    if (model == "poisson_2d") {
        check(n_y >= 1, "model.n_y must be >= 1");
        check(tau > 0.0, "prior.tau must be > 0");
    } else {
        check(n_u >= 1, "model.n_u must be >= 1");
        check(length > 0.0, "model.length must be > 0");
        check(obs_levels >= 1 && obs_levels <= 20, "model.obs_levels must be in [1, 20]");
        check(std::isfinite(source), "model.source must be finite");
    }
    check(beta > 0.0 && nu > 0.0, "prior.beta and prior.nu must be > 0");
    check(gamma_obs > 0.0 && gamma_model > 0.0, "noise scales must be > 0");
    check(alpha1 >= 0.0 && alpha2 >= 0.0, "loss weights must be >= 0");
    check(!hidden_layers.empty(), "network.hidden_layers must not be empty");
    for (int w : hidden_layers) check(w >= 1, "network.hidden_layers entries must be >= 1");

    check(particles >= 2, "solver.particles must be >= 2");
    check(stages >= 1, "solver.stages must be >= 1");
    check(lambda_max > 0.0, "solver.lambda_max must be > 0");
    check(t_end >= 0.0 && std::isfinite(t_end), "solver.t_end must be finite and >= 0");
    check(rtol > 0.0 && atol > 0.0, "solver.rtol and solver.atol must be > 0");
    check(flow == "basic" || flow == "square_root", "solver.flow must be basic or square_root");
    check(state_variance >= 0.0 && network_variance >= 0.0, "initial variances must be >= 0");
    check(workers >= 1, "solver.workers must be >= 1");
    if (method != "redTik") {
        oneshot::PenaltySchedule s;
        try {
            s = make_schedule(*this);
        } catch (const InvalidArgument &e) {
            throw ConfigError(std::string("solver.schedule: ") + e.what());
        }
        const bool discrete = s.kind == oneshot::PenaltySchedule::Kind::discrete;
        check(discrete == is_stagewise(), "schedule '" + schedule + "' does not fit method " + method);
    }
    check(bfgs_max_iterations >= 0, "bfgs.max_iterations must be >= 0");
    check(bfgs_gradient_tol > 0.0 && bfgs_fd_step > 0.0, "bfgs tolerances must be > 0");
}

ExperimentConfig parse_config(const std::string &text) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error &e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    ExperimentConfig c = ExperimentConfig::defaults(tree.get<std::string>("experiment.id", "oned_linear"),
                                                    tree.get<std::string>("experiment.method", "osEKI_2"));
    for (const auto &section : tree) {
        if (section.second.empty() && !section.second.data().empty())
            throw ConfigError("config key '" + section.first + "' outside a section");
        for (const auto &kv : section.second) find_field(section.first + "." + kv.first).set(c, kv.second.data());
    }
    return c;
}

ExperimentConfig load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig &config) {
    pt::ptree tree;
    for (const Field &f : fields()) {
        auto &section = tree.get_child_optional(f.section) ? tree.get_child(f.section)
                                                           : tree.add_child(f.section, pt::ptree());
        section.put(f.key, f.get(config));
    }
    std::ostringstream out;
    pt::write_ini(out, tree);
    return out.str();
}

void set_value(ExperimentConfig &config, const std::string &key, const std::string &value) {
    find_field(key).set(config, value);
}

std::string get_value(const ExperimentConfig &config, const std::string &key) { return find_field(key).get(config); }

RunResult run_experiment(const ExperimentConfig &config, const std::string &directory) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    const std::time_t wall_start = std::time(nullptr);
    const std::filesystem::path dir(directory);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + directory + ": " + ec.message());

    RunResult r;
    r.directory = directory;
    r.config = config;
    {
        std::ofstream out = open_out(dir / "config.ini");
        out << serialize_config(config);
        std::ofstream seeds = open_out(dir / "seeds.txt");
        seeds << "truth\t" << config.truth_seed << "\nnoise\t" << config.noise_seed << "\nsolver\t"
              << config.solver_seed << "\nobservation\t" << config.observation_seed << '\n';
    }

    const Setup setup = build_setup(config);
    Rng truth_rng(config.truth_seed), noise_rng(config.noise_seed);
    r.truth = prior_sample(*setup.prior, 1, truth_rng)[0];
    const MatrixXd gamma_obs = config.gamma_obs * MatrixXd::Identity(setup.obs->count(), setup.obs->count());
    const fem::SyntheticData syn = fem::synthesize_data(*setup.model, *setup.obs, r.truth, gamma_obs, noise_rng);
    r.data = syn.data;
    write_nodal(dir / "truth.tsv", setup.nodes, {{"u", r.truth}, {"p", syn.truth_state}});
    write_nodal(dir / "data.tsv", setup.obs->points(), {{"y", syn.data}, {"y_noiseless", syn.noiseless}});

    const auto problem = build_problem(config, setup, r.data);
    const baselines::BfgsConfig bfgs = bfgs_config(config);

    // reduced reference: closed form when linear, BFGS otherwise
    if (setup.model->is_linear()) {
        r.reference_u = baselines::tikhonov_reduced(*setup.model, *setup.obs, r.data, gamma_obs, *setup.prior,
                                                    config.alpha1).u;
    } else {
        const baselines::Objective f = [&](const VectorXd &u) {
            return baselines::tikhonov_objective(*setup.model, *setup.obs, r.data, gamma_obs, *setup.prior,
                                                 config.alpha1, u);
        };
        r.reference_u = baselines::bfgs_minimize(f, setup.prior->mean(), bfgs).x;
    }
    r.has_reference = true;
    write_nodal(dir / "reference.tsv", setup.nodes,
                {{"u", r.reference_u}, {"p", setup.model->solve(r.reference_u)}});

    oneshot::SolverOptions opt;
    opt.particles = config.particles;
    opt.theta_variance = config.uses_network() ? config.network_variance : config.state_variance;
    opt.redraw_theta_variance = opt.theta_variance;
    opt.integrator.t_end = config.t_end;
    opt.integrator.rtol = config.rtol;
    opt.integrator.atol = config.atol;
    opt.integrator.flow = config.flow == "square_root" ? eki::Flow::square_root : eki::Flow::basic;
    opt.integrator.workers = config.workers;
    opt.seed = config.solver_seed;

    std::ofstream report = open_out(dir / "report.tsv");
    report << "stage\ttime\tlambda\tmisfit\tspread\timage_spread\n";
    std::optional<oneshot::Estimate> final;
    std::string summary_extra;

    try {
        if (config.method == "redTik") {
            const VectorXd p = setup.model->solve(r.reference_u);
            final = oneshot::make_estimate(*problem, 0.0, 0.0, problem->join(r.reference_u, p));
            final->lambda = std::numeric_limits<double>::infinity();
        } else if (config.method == "osEKI_1") {
            const oneshot::Algorithm1Result a = oneshot::algorithm1(problem, make_schedule(config), opt);
            long steps = 0, evals = 0;
            for (std::size_t k = 0; k < a.stages.size(); ++k) {
                r.trace.push_back(trace_row(a.stages[k]));
                write_report_rows(report, static_cast<int>(k), a.reports[k]);
                steps += a.reports[k].steps;
                evals += a.reports[k].evaluations;
            }
            if (!a.stages.empty()) final = a.stages.back();
            r.completed = a.completed;
            r.failure = a.failure;
            summary_extra = "steps\t" + std::to_string(steps) + "\nevaluations\t" + std::to_string(evals) + "\n";
        } else if (config.method == "osEKI_2" || config.method == "nnosEKI_2") {
            const oneshot::Algorithm2Result a = oneshot::algorithm2(problem, make_schedule(config), opt);
            for (const auto &e : a.trace) r.trace.push_back(trace_row(e));
            write_report_rows(report, 0, a.report);
            final = a.final;
            summary_extra = "steps\t" + std::to_string(a.report.steps) + "\nevaluations\t" +
                            std::to_string(a.report.evaluations) + "\nsaturated\t" +
                            (a.saturated ? "1" : "0") + "\n";
        } else {
            VectorXd x0 = problem->join(setup.prior->mean(), VectorXd::Zero(problem->theta_dim()));
            if (config.uses_network()) {
                Rng rng = Rng(config.solver_seed).split(0);
                x0.tail(problem->theta_dim()) = std::sqrt(config.network_variance) * rng.normal_vector(problem->theta_dim());
            }
            const baselines::QuasiNewtonResult q =
                baselines::quasi_newton_penalty(problem, make_schedule(config), x0, bfgs, config.warm_start);
            long its = 0;
            for (std::size_t k = 0; k < q.stages.size(); ++k) {
                its += q.runs[k].iterations;
                TraceRow row = trace_row(q.stages[k]);
                row.time = static_cast<double>(its);
                r.trace.push_back(row);
                report << k << '\t' << its << '\t' << format_number(q.stages[k].lambda) << '\t'
                       << format_number(2.0 * q.runs[k].value) << "\tnan\tnan\n";
            }
            final = q.stages.back();
            summary_extra = "iterations\t" + std::to_string(its) + "\nwarning\t" + (q.warning ? "1" : "0") + "\n";
        }
    } catch (const NumericalError &e) {
        r.completed = false;
        r.failure = e.what();
    }
    report.close();

    {
        std::ofstream out = open_out(dir / "trace.tsv");
        out << "lambda\ttime\tdata_misfit\tmodel_residual\tmodel_weighted\tloss\n";
        for (const TraceRow &t : r.trace) {
            out << format_number(t.lambda) << '\t' << format_number(t.time) << '\t' << format_number(t.data_misfit)
                << '\t' << format_number(t.model_residual) << '\t' << format_number(t.model_weighted) << '\t'
                << format_number(t.loss) << '\n';
        }
    }

    std::ofstream summary = open_out(dir / "summary.tsv");
    summary << "experiment\t" << config.experiment << "\nmethod\t" << config.method << "\ncompleted\t"
            << (r.completed ? 1 : 0) << '\n';
    if (!r.completed) summary << "failure\t" << r.failure << '\n';
    if (final) {
        r.u = final->u;
        r.p = problem->state->state(final->theta);
        write_nodal(dir / "estimate.tsv", setup.nodes, {{"u", r.u}, {"p", r.p}});
        const double ref_norm = r.reference_u.norm();
        const double ref_norm_c = std::sqrt(setup.prior->norm_sq(r.reference_u - setup.prior->mean()));
        r.reference_distance = (r.u - r.reference_u).norm() / ref_norm;
        r.reference_distance_c = std::sqrt(setup.prior->norm_sq(r.u - r.reference_u)) / ref_norm_c;
        summary << "final_lambda\t" << format_number(final->lambda) << "\ndata_misfit\t"
                << format_number(final->diagnostics.data_misfit) << "\nmodel_residual\t"
                << format_number(final->diagnostics.model_residual) << "\nmodel_weighted\t"
                << format_number(final->diagnostics.model_weighted) << "\nloss\t" << format_number(final->loss.total())
                << "\nreference_distance\t" << format_number(r.reference_distance) << "\nreference_distance_c\t"
                << format_number(r.reference_distance_c) << '\n';
    }
    summary << summary_extra;
    summary.close();

    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    {
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&wall_start));
        std::ofstream meta = open_out(dir / "meta.txt");
        meta << "started\t" << stamp << "\nwall_seconds\t" << format_number(r.wall_seconds) << "\nworkers\t"
             << config.workers << '\n';
    }
    if (!r.completed) throw NumericalError(config.method + " failed: " + r.failure);
    return r;
}

std::string compare_runs(const std::vector<std::string> &directories) {
    if (directories.empty()) throw InvalidArgument("compare: no run directories given");
    std::ostringstream out;
    out << "run\tmethod\tdata_misfit\tmodel_residual\treference_distance\twall_seconds\n";
    std::string experiment;
    for (const std::string &d : directories) {
        std::filesystem::path dir(d);
        if (dir.filename().empty()) dir = dir.parent_path();
        const ExperimentConfig c = parse_config(read_file((dir / "config.ini").string()));
        if (experiment.empty()) experiment = c.experiment;
        if (c.experiment != experiment)
            throw InvalidArgument("compare: runs mix experiments " + experiment + " and " + c.experiment);
        auto summary = read_table(dir / "summary.tsv");
        auto meta = read_table(dir / "meta.txt");
        const auto get = [](std::map<std::string, std::string> &m, const char *k) {
            const auto it = m.find(k);
            return it == m.end() ? std::string("nan") : it->second;
        };
        out << dir.filename().string() << '\t' << c.method << '\t' << get(summary, "data_misfit") << '\t'
            << get(summary, "model_residual") << '\t' << get(summary, "reference_distance") << '\t'
            << get(meta, "wall_seconds") << '\n';
    }
    return out.str();
}

void export_mesh(const std::string &mesh_path, const std::string &points_path, Index n_y, std::uint64_t seed) {
    std::ofstream mesh(mesh_path);
    if (!mesh) throw IoError("cannot write " + mesh_path);
    fem::write_mesh(mesh, fem::default_mesh_2d());
    std::ofstream points(points_path);
    if (!points) throw IoError("cannot write " + points_path);
    points << "# " << n_y << " uniform points on (0,1)^2, seed " << seed << '\n';
    fem::write_points(points, fem::random_unit_square_points(n_y, seed));
}

} // namespace oseki::experiment
