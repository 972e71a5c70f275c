#include "calderon/harness.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "calderon/calculus.hpp"
#include "calderon/carleman.hpp"
#include "calderon/cgo.hpp"
#include "calderon/norms.hpp"
#include "calderon/operators.hpp"
#include "calderon/ucp.hpp"

namespace calderon {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Strict JSON reading

std::string type_of(const json& v) {
    if (v.is_number_integer()) return "integer";
    return v.type_name();
}

[[noreturn]] void schema_fail(const std::string& path, const std::string& expected, const json& actual) {
    throw SchemaError("field '" + path + "': expected " + expected + ", got " + type_of(actual) + " " + actual.dump());
}

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) schema_fail(path_.empty() ? "<root>" : path_, "object", j_);
    }

    [[nodiscard]] std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void get(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) schema_fail(field(key), "number", *v);
            out = v->get<double>();
        }
    }
    void get(const std::string& key, int& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) schema_fail(field(key), "integer", *v);
            out = v->get<int>();
        }
    }
    void get(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) schema_fail(field(key), "boolean", *v);
            out = v->get<bool>();
        }
    }
    void get(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) schema_fail(field(key), "string", *v);
            out = v->get<std::string>();
        }
    }
    void get(const std::string& key, std::vector<int>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) schema_fail(field(key), "array of integers", *v);
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_number_integer()) schema_fail(field(key), "array of integers", *v);
                out.push_back(e.get<int>());
            }
        }
    }
    void get(const std::string& key, std::vector<double>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) schema_fail(field(key), "array of numbers", *v);
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_number()) schema_fail(field(key), "array of numbers", *v);
                out.push_back(e.get<double>());
            }
        }
    }
    void get(const std::string& key, Point& out) {
        std::vector<double> v;
        if (const json* raw = j_.contains(key) ? &j_.at(key) : nullptr) {
            get(key, v);
            if (v.size() > static_cast<std::size_t>(kMaxDim)) schema_fail(field(key), "at most 3 coordinates", *raw);
            out = {};
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
        } else {
            seen_.insert(key);
        }
    }
    void get(const std::string& key, Frequency& out) {
        std::vector<int> v;
        if (const json* raw = j_.contains(key) ? &j_.at(key) : nullptr) {
            get(key, v);
            if (v.size() > static_cast<std::size_t>(kMaxDim)) schema_fail(field(key), "at most 3 entries", *raw);
            out = {};
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
        } else {
            seen_.insert(key);
        }
    }

    /// Unknown keys are schema errors so typos never pass silently.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw SchemaError("field '" + field(it.key()) + "': unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& expected, const json& actual) {
    if (!ok) schema_fail(field, expected, actual);
}

void read_gamma(Reader& parent, const std::string& key, GammaBox& g) {
    if (const json* v = parent.find(key)) {
        Reader r(*v, parent.field(key));
        r.get("axis", g.axis);
        r.get("sign", g.sign);
        r.get("lo", g.lo);
        r.get("hi", g.hi);
        r.finish();
        require(g.sign == 1 || g.sign == -1, parent.field(key) + ".sign", "+1 or -1", g.sign);
    }
}

json gamma_json(const GammaBox& g) {
    return {{"axis", g.axis}, {"sign", g.sign}, {"lo", {g.lo[0], g.lo[1], g.lo[2]}}, {"hi", {g.hi[0], g.hi[1], g.hi[2]}}};
}

void read_potential(Reader& parent, const std::string& key, PotentialSpec& p) {
    if (const json* v = parent.find(key)) {
        Reader r(*v, parent.field(key));
        r.get("kind", p.kind);
        r.get("value", p.value);
        r.get("centre", p.centre);
        r.get("radius", p.radius);
        r.get("amplitude", p.amplitude);
        r.finish();
        require(p.kind == "zero" || p.kind == "constant" || p.kind == "bump", parent.field(key) + ".kind",
                "one of zero, constant, bump", p.kind);
    }
}

json potential_json(const PotentialSpec& p) {
    return {{"kind", p.kind},
            {"value", p.value},
            {"centre", {p.centre[0], p.centre[1], p.centre[2]}},
            {"radius", p.radius},
            {"amplitude", p.amplitude}};
}

// Non-finite values become strings so a re-parse reproduces them.
json num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

json complex_json(Complex c) { return json::array({num(c.real()), num(c.imag())}); }

std::string hex16(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

SigmaDescription sigma_for(int d, double amplitude) {
    return amplitude == 0.0 ? SigmaDescription::identity(d) : SigmaDescription::smooth_bump(d, amplitude);
}

// ---------------------------------------------------------------------------
// Output

class Outputs {
public:
    Outputs(const RunConfig& config, RunRecord& record) : config_(config), record_(record) {
        std::filesystem::create_directories(config.out);
    }

    [[nodiscard]] bool wants(const std::string& format) const {
        return std::find(config_.formats.begin(), config_.formats.end(), format) != config_.formats.end();
    }

    /// CSV with the provenance comment line first.
    void csv(const std::string& name, const std::function<void(std::ostream&)>& body) {
        if (!wants("csv")) return;
        write(name, [&](std::ostream& os) {
            os << csv_header_comment(config_) << '\n';
            body(os);
        });
    }

    void json_doc(const std::string& name, json doc) {
        if (!wants("json")) return;
        doc["metadata"] = metadata();
        write(name, [&](std::ostream& os) { os << doc.dump(2) << '\n'; });
    }

    void text(const std::string& name, const std::function<void(std::ostream&)>& body) { write(name, body); }

    [[nodiscard]] json metadata() const {
        return {{"config_hash", record_.config_hash},
                {"anchor", record_.anchor},
                {"command", record_.command},
                {"schema_version", kSchemaVersion},
                {"version", kVersion}};
    }

private:
    void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
        const auto path = config_.out / name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
        body(os);
        if (!os) throw std::runtime_error("write failed: " + path.string());
        record_.artifacts.push_back(path);
    }

    const RunConfig& config_;
    RunRecord& record_;
};

template <class Fn>
auto staged(const std::string& command, const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const SchemaError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(command + "/" + stage + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Commands

GridField random_field(const NodeSetPtr& set, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    GridField f = GridField::zeros(set);
    for (auto& v : f.values()) {
        const double re = u(rng);
        v = Complex(re, u(rng));
    }
    return f;
}

void verify_calculus(const RunConfig& config, RunRecord& record, Outputs& out) {
    const auto& c = config.calculus;
    struct Row {
        int d, N;
        std::string identity;
        double max_relative;
    };
    std::vector<Row> rows;
    std::mt19937_64 rng(config.seed);
    for (int d : c.d) {
        for (int N : c.N) {
            const MeshPtr m = staged(config.command, "mesh", [&] { return Mesh::build(build_grid(d, N)); });
            const SigmaPtr sigma = sample_sigma(SigmaDescription::smooth_bump(d, 0.3), m);
            std::map<std::string, double> worst{{"product_rule_d", 0.0}, {"product_rule_a", 0.0},
                                                {"square_identity", 0.0}, {"ibp_d", 0.0},
                                                {"ibp_a", 0.0},           {"green", 0.0}};
            if (d > 1) worst["commutation"] = 0.0;
            staged(config.command, "identities", [&] {
                for (int s = 0; s < c.samples; ++s) {
                    const GridField u = random_field(m->closure(), rng);
                    const GridField v = random_field(m->closure(), rng);
                    const GridField w = random_field(m->lattice(), rng);
                    for (int k = 0; k < d; ++k) {
                        auto up = [&](const std::string& key, double r) { worst[key] = std::max(worst[key], r); };
                        up("product_rule_d", product_rule_d_residual(u, v, k, *m).relative());
                        up("product_rule_a", product_rule_a_residual(u, v, k, *m).relative());
                        up("square_identity", square_identity_residual(u, k, *m).relative());
                        const auto ibp = ibp_residual(random_field(m->axis_closure(k), rng),
                                                      random_field(m->staggered(k), rng), k, *m);
                        up("ibp_d", ibp.d().relative());
                        up("ibp_a", ibp.a().relative());
                        for (int j = 0; j < d; ++j)
                            if (j != k) up("commutation", commutation_residual(w, k, j, *m).relative());
                    }
                    worst["green"] = std::max(worst["green"], greens_residual(u, v, *sigma).relative());
                }
                return 0;
            });
            for (const auto& [name, value] : worst) rows.push_back({d, N, name, value});
        }
    }
    double overall = 0.0;
    for (const auto& r : rows) {
        overall = std::max(overall, r.max_relative);
        record.metrics["max_relative." + r.identity] =
            std::max(record.metrics["max_relative." + r.identity], r.max_relative);
    }
    record.metrics["max_relative"] = overall;
    record.passed = overall <= c.tolerance;
    out.csv("calculus.csv", [&](std::ostream& os) {
        os << "d,N,identity,max_relative_residual\n" << std::setprecision(6);
        for (const auto& r : rows) os << r.d << ',' << r.N << ',' << r.identity << ',' << r.max_relative << '\n';
    });
}

void verify_carleman(const RunConfig& config, RunRecord& record, Outputs& out) {
    const auto& c = config.carleman;
    WeightParams params = WeightParams::defaults(c.d);
    params.lambda = c.lambda;
    params.s = c.s;
    params.eps0 = c.eps0;
    params.s0 = c.s0;

    ProbeOptions probe;
    probe.d = c.d;
    probe.N_ladder = c.probe_ladder;
    const auto series = staged(config.command, "weight-probe", [&] { return weight_probe(params, probe); });
    double worst_order = 0.0;
    for (const auto& s : series) worst_order = std::max(worst_order, std::abs(s.fitted_order - s.expected_order));

    FitOptions fit;
    fit.d = c.d;
    fit.N_ladder = c.fit_ladder;
    fit.sh = c.sh;
    fit.samples = c.samples;
    fit.seed = config.seed;
    fit.threads = config.threads;
    const auto rows = staged(config.command, "constant-fit", [&] { return fit_constant(params, fit); });
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& r : rows) {
        lo = std::min(lo, r.C_fitted);
        hi = std::max(hi, r.C_fitted);
    }
    const double spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    record.metrics["max_order_deviation"] = worst_order;
    record.metrics["constant_spread"] = spread;
    record.metrics["constant_max"] = hi;
    record.passed = worst_order <= c.order_tolerance && spread < c.spread_limit;

    out.csv("carleman_probe.csv", [&](std::ostream& os) {
        os << "series,expected_order,h,sh,error,fitted_order\n" << std::setprecision(12);
        for (const auto& s : series)
            for (std::size_t i = 0; i < s.h.size(); ++i)
                os << s.name << ',' << s.expected_order << ',' << s.h[i] << ',' << s.sh[i] << ',' << s.error[i] << ','
                   << s.fitted_order << '\n';
    });
    out.csv("carleman_constants.csv", [&](std::ostream& os) { write_constant_csv(os, rows); });
}

void verify_ucp(const RunConfig& config, RunRecord& record, Outputs& out) {
    const auto& c = config.ucp;
    UcpExperimentOptions o;
    o.d = c.d;
    o.N = c.N;
    o.rho = c.rho;
    o.solutions = c.solutions;
    o.eps0 = c.eps0;
    o.eps_tilde_factor = c.eps_tilde_factor;
    o.tau_count = c.tau_count;
    o.seed = config.seed;
    o.threads = config.threads;
    o.gamma = c.gamma;
    o.fit = {c.alpha_min, c.alpha_max, c.alpha_steps, c.C_cap};
    const auto ex = staged(config.command, "experiment", [&] { return run_ucp_experiment(o); });
    record.metrics["alpha1"] = ex.fit.alpha1;
    record.metrics["alpha2"] = ex.fit.alpha2;
    record.metrics["C"] = ex.fit.C;
    record.metrics["chain_balls"] = static_cast<double>(ex.chain.count());
    record.passed = ex.chain_check.all() && ex.fit.satisfiable;
    out.csv("ucp.csv", [&](std::ostream& os) { write_ucp_csv(os, ex.reports, ex.fit); });
}

void run_cgo(const RunConfig& config, RunRecord& record, Outputs& out) {
    const auto& c = config.cgo;
    CgoOptions options;
    options.tolerance = c.tolerance;
    options.max_iterations = c.max_iterations;
    options.threshold_factor = c.threshold_factor;

    const MeshPtr mesh = staged(config.command, "mesh", [&] { return Mesh::build(build_grid(3, c.N)); });
    const SigmaPtr sigma = sample_sigma(sigma_for(3, c.sigma_amplitude), mesh);
    const double amp = c.q_amplitude;
    const GridField q = GridField::from_function(mesh->primal(), [amp](const Point& x) {
        return amp * std::sin(std::numbers::pi * x[0]) * std::sin(std::numbers::pi * x[1]) *
               std::sin(std::numbers::pi * x[2]);
    });
    ForwardSolver solver(sigma, q);

    std::vector<CgoSolution> rows(2 * c.instances.size());
    std::vector<std::string> failures(c.instances.size());
    double worst_eta = 0.0, worst_dirichlet = 0.0;
    staged(config.command, "instances", [&] {
        for (std::size_t i = 0; i < c.instances.size(); ++i) {
            const auto& inst = c.instances[i];
            const auto [p1, p2] = make_eta(3, inst.xi, inst.a, {c.a0, c.c}, sigma->eps_d(), sigma->eps_a(), mesh->h());
            worst_eta = std::max({worst_eta, std::abs(p1.eta_dot_eta()) / (inst.a * inst.a),
                                  std::abs(p2.eta_dot_eta()) / (inst.a * inst.a)});
            rows[2 * i + 1] = cgo_dirichlet(solver, p1);
            worst_dirichlet = std::max(worst_dirichlet, rows[2 * i + 1].relative_residual());
            try {
                rows[2 * i] = cgo_fixed_point(q, *sigma, p1, options);
            } catch (const NonContractionError& e) {
                failures[i] = e.what();
                rows[2 * i] = rows[2 * i + 1];
            }
        }
        return 0;
    });
    const auto probe = staged(config.command, "remainder-probe", [&] {
        return remainder_probe(c.probe_ladder, c.probe_a_scale, c.q_amplitude, {c.probe_a0, c.probe_c}, options);
    });
    record.metrics["max_eta_dot_eta"] = worst_eta;
    record.metrics["max_dirichlet_residual"] = worst_dirichlet;
    record.metrics["probe_slope"] = probe.fitted_slope;
    record.metrics["probe_predicted_slope"] = probe.predicted_slope;
    record.passed = worst_eta <= 1e-12 && worst_dirichlet <= 1e-10 &&
                    std::abs(probe.fitted_slope - probe.predicted_slope) <= 0.5;
    out.csv("cgo.csv", [&](std::ostream& os) { write_cgo_csv(os, rows); });
    out.csv("cgo_probe.csv", [&](std::ostream& os) {
        os << "N,h,a,quantity,predicted,relative_residual,method\n" << std::setprecision(12);
        for (const auto& p : probe.points)
            os << p.N << ',' << p.h << ',' << p.a << ',' << p.quantity << ',' << p.predicted << ','
               << p.relative_residual << ',' << p.method << '\n';
    });
    int fallbacks = 0;
    for (const auto& f : failures) fallbacks += f.empty() ? 0 : 1;
    record.metrics["multiplier_fallbacks"] = fallbacks;
}

ExperimentConfig experiment_config(const RunConfig& config) {
    const auto& s = config.stability;
    ExperimentConfig e;
    e.d = 3;
    e.N_ladder = s.N_ladder;
    e.sigma = sigma_for(3, s.sigma_amplitude);
    e.q1 = s.q1.describe();
    e.q2 = s.q2.describe();
    e.collar_rho = s.collar_rho;
    e.gamma = s.gamma;
    e.r = s.r;
    e.constants = s.constants;
    e.perturbation = s.perturbation;
    e.method = s.method == "multiplier" ? CgoMethod::Multiplier : CgoMethod::Dirichlet;
    e.seed = config.seed;
    e.threads = config.threads;
    return e;
}

json report_json(const StabilityReport& r) {
    json est = json::array();
    for (const auto& e : r.estimates) {
        est.push_back({{"xi", {e.xi[0], e.xi[1], e.xi[2]}},
                       {"a", e.a},
                       {"method", e.method},
                       {"estimate", complex_json(e.estimate)},
                       {"oracle_reference", complex_json(e.reference)},
                       {"oracle_interior_pairing", complex_json(e.interior_pairing)},
                       {"oracle_cross_term", complex_json(e.cross_term)},
                       {"oracle_r1_L2", num(e.r1_L2)},
                       {"oracle_r2_L2", num(e.r2_L2)},
                       {"bound_components",
                        {{"inv_a", num(e.inv_a)}, {"a_eps_a", num(e.a_eps_a)}, {"a3h2", num(e.a3h2)},
                         {"data", num(e.data_term)}}}});
    }
    return {{"N", r.N},
            {"h", num(r.h)},
            {"eps_d", num(r.eps_d)},
            {"eps_a", num(r.eps_a)},
            {"perturbation", num(r.perturbation)},
            {"delta_full", num(r.delta_full)},
            {"delta_gamma", num(r.delta_gamma)},
            {"mu_tilde", num(r.choice.mu_tilde)},
            {"mu", num(r.choice.mu)},
            {"a", num(r.choice.a)},
            {"branch", r.choice.branch},
            {"warning", r.choice.warning},
            {"rho_trunc", num(r.rho_trunc)},
            {"kept", r.kept},
            {"err_Hminus_r", num(r.err_Hminus_r)},
            {"err_lowpass", num(r.err_lowpass)},
            {"err_tail", num(r.err_tail)},
            {"err_field", num(r.err_field)},
            {"oracle_diff_Hminus_r", num(r.diff_Hminus_r)},
            {"bound_value", num(r.bound_value)},
            {"alpha", num(r.alpha)},
            {"error", r.error},
            {"estimates", est}};
}

void run_stability(const RunConfig& config, RunRecord& record, Outputs& out) {
    const ExperimentConfig e = experiment_config(config);
    const auto reports = staged(config.command, "experiment", [&] { return stability_experiment(e); });
    const auto& s = config.stability;
    json constants = {{"alpha3", s.constants.alpha3}, {"a0", s.constants.a0},
                      {"c", s.constants.c},           {"eps_tilde", s.constants.eps_tilde},
                      {"eps0", s.constants.eps0},     {"gamma_tilde", s.constants.gamma_tilde},
                      {"c_tilde", s.constants.c_tilde()}};
    int failed = 0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (!reports[i].ok()) ++failed;
        json doc = report_json(reports[i]);
        doc["constants"] = constants;
        doc["seed"] = config.seed;
        doc["point"] = i;
        std::ostringstream name;
        name << "stability_point_" << std::setw(3) << std::setfill('0') << i << ".json";
        out.json_doc(name.str(), doc);
    }
    out.csv("stability.csv", [&](std::ostream& os) { write_stability_csv(os, reports); });
    record.metrics["points"] = static_cast<double>(reports.size());
    record.metrics["failed_points"] = failed;
    record.metrics["fitted_C"] = fit_bound_constant(reports);
    record.metrics["alpha"] = reports.empty() ? 0.0 : reports.front().alpha;
    record.passed = failed == 0;
}

void export_operator(const RunConfig& config, RunRecord& record, Outputs& out) {
    const auto& c = config.export_op;
    const MeshPtr mesh = staged(config.command, "mesh", [&] { return Mesh::build(build_grid(c.d, c.N)); });
    const SigmaPtr sigma = sample_sigma(sigma_for(c.d, c.sigma_amplitude), mesh);
    const ForwardSolver solver(sigma, c.q.describe().sample(*mesh));
    const auto map = staged(config.command, "dtn", [&] { return dtn_assemble(solver, config.threads); });
    const std::string comment = csv_header_comment(config).substr(2);
    out.text("laplacian.txt", [&](std::ostream& os) { write_triplets(os, laplacian_matrix(*sigma), comment); });
    out.text("dtn.txt", [&](std::ostream& os) {
        os << "# " << comment << '\n';
        write_dtn(os, map);
    });
    record.metrics["interior_nodes"] = static_cast<double>(mesh->primal()->size());
    record.metrics["boundary_nodes"] = static_cast<double>(mesh->boundary()->size());
    record.metrics["dtn_asymmetry"] = (map.matrix - map.matrix.transpose()).norm() / map.matrix.norm();
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

PotentialDescription PotentialSpec::describe() const {
    if (kind == "zero") return PotentialDescription::zero();
    if (kind == "constant") return PotentialDescription::constant(value);
    return PotentialDescription::bump(centre, radius, amplitude);
}

const std::vector<std::string>& commands() {
    static const std::vector<std::string> names{"verify-calculus", "verify-carleman", "verify-ucp",
                                                "run-cgo",         "run-stability",   "export-operator"};
    return names;
}

std::string anchor(const std::string& command) {
    static const std::map<std::string, std::string> anchors{
        {"verify-calculus", "discrete-calculus-identities"},
        {"verify-carleman", "carleman-estimate"},
        {"verify-ucp", "unique-continuation"},
        {"run-cgo", "cgo-remainder"},
        {"run-stability", "logarithmic-stability"},
        {"export-operator", "discrete-operators"}};
    const auto it = anchors.find(command);
    if (it == anchors.end()) throw SchemaError("field 'command': expected one of the known commands, got \"" + command + "\"");
    return it->second;
}

RunConfig parse_config(const json& j) {
    RunConfig c;
    Reader root(j, "");
    int version = kSchemaVersion;
    root.get("schema_version", version);
    if (version != kSchemaVersion)
        throw SchemaError("field 'schema_version': expected " + std::to_string(kSchemaVersion) + ", got " +
                          std::to_string(version));
    root.get("command", c.command);
    if (const json* v = root.find("seed")) {
        if (!v->is_number_unsigned() && !v->is_number_integer()) schema_fail("seed", "unsigned integer", *v);
        if (v->is_number_integer() && v->get<std::int64_t>() < 0) schema_fail("seed", "unsigned integer", *v);
        c.seed = v->get<std::uint64_t>();
        c.seed_given = true;
    }
    root.get("threads", c.threads);
    require(c.threads >= 1, "threads", "integer >= 1", c.threads);
    root.get("deterministic", c.deterministic);
    if (const json* v = root.find("output")) {
        Reader r(*v, "output");
        std::string dir = c.out.string();
        r.get("dir", dir);
        c.out = dir;
        if (const json* f = r.find("formats")) {
            if (!f->is_array()) schema_fail("output.formats", "array of \"csv\"/\"json\"", *f);
            c.formats.clear();
            for (const auto& e : *f) {
                if (!e.is_string() || (e != "csv" && e != "json"))
                    schema_fail("output.formats", "array of \"csv\"/\"json\"", *f);
                c.formats.push_back(e.get<std::string>());
            }
        }
        r.finish();
    }
    if (const json* v = root.find("calculus")) {
        Reader r(*v, "calculus");
        auto& s = c.calculus;
        r.get("d", s.d);
        r.get("N", s.N);
        r.get("samples", s.samples);
        r.get("tolerance", s.tolerance);
        r.finish();
        for (int d : s.d) require(d >= 1 && d <= 3, "calculus.d", "entries in [1, 3]", d);
        for (int n : s.N) require(n >= 2, "calculus.N", "entries >= 2", n);
        require(s.samples >= 1, "calculus.samples", "integer >= 1", s.samples);
    }
    if (const json* v = root.find("carleman")) {
        Reader r(*v, "carleman");
        auto& s = c.carleman;
        r.get("d", s.d);
        r.get("lambda", s.lambda);
        r.get("s", s.s);
        r.get("eps0", s.eps0);
        r.get("s0", s.s0);
        r.get("sh", s.sh);
        r.get("probe_ladder", s.probe_ladder);
        r.get("fit_ladder", s.fit_ladder);
        r.get("samples", s.samples);
        r.get("order_tolerance", s.order_tolerance);
        r.get("spread_limit", s.spread_limit);
        r.finish();
        require(s.d >= 1 && s.d <= 3, "carleman.d", "integer in [1, 3]", s.d);
        require(s.samples >= 1, "carleman.samples", "integer >= 1", s.samples);
        require(s.probe_ladder.size() >= 2, "carleman.probe_ladder", "at least 2 entries", s.probe_ladder);
    }
    if (const json* v = root.find("ucp")) {
        Reader r(*v, "ucp");
        auto& s = c.ucp;
        r.get("d", s.d);
        r.get("N", s.N);
        r.get("rho", s.rho);
        r.get("solutions", s.solutions);
        r.get("eps0", s.eps0);
        r.get("eps_tilde_factor", s.eps_tilde_factor);
        r.get("tau_count", s.tau_count);
        read_gamma(r, "gamma", s.gamma);
        r.get("alpha_min", s.alpha_min);
        r.get("alpha_max", s.alpha_max);
        r.get("alpha_steps", s.alpha_steps);
        r.get("C_cap", s.C_cap);
        r.finish();
        require(s.d >= 2 && s.d <= 3, "ucp.d", "integer in [2, 3]", s.d);
        require(s.solutions >= 1, "ucp.solutions", "integer >= 1", s.solutions);
        require(s.alpha_min > 0 && s.alpha_max > s.alpha_min, "ucp.alpha_max", "number > alpha_min > 0", s.alpha_max);
    }
    if (const json* v = root.find("cgo")) {
        Reader r(*v, "cgo");
        auto& s = c.cgo;
        r.get("N", s.N);
        r.get("sigma_amplitude", s.sigma_amplitude);
        r.get("q_amplitude", s.q_amplitude);
        r.get("a0", s.a0);
        r.get("c", s.c);
        if (const json* inst = r.find("instances")) {
            if (!inst->is_array()) schema_fail("cgo.instances", "array of {xi, a}", *inst);
            s.instances.clear();
            for (std::size_t i = 0; i < inst->size(); ++i) {
                Reader ri((*inst)[i], "cgo.instances[" + std::to_string(i) + "]");
                CgoInstance ci;
                ri.get("xi", ci.xi);
                ri.get("a", ci.a);
                ri.finish();
                s.instances.push_back(ci);
            }
        }
        r.get("probe_ladder", s.probe_ladder);
        r.get("probe_a_scale", s.probe_a_scale);
        r.get("probe_a0", s.probe_a0);
        r.get("probe_c", s.probe_c);
        r.get("tolerance", s.tolerance);
        r.get("max_iterations", s.max_iterations);
        r.get("threshold_factor", s.threshold_factor);
        r.finish();
        require(s.N >= 2, "cgo.N", "integer >= 2", s.N);
        require(s.probe_ladder.size() >= 2, "cgo.probe_ladder", "at least 2 entries", s.probe_ladder);
    }
    if (const json* v = root.find("stability")) {
        Reader r(*v, "stability");
        auto& s = c.stability;
        r.get("N_ladder", s.N_ladder);
        r.get("sigma_amplitude", s.sigma_amplitude);
        read_potential(r, "q1", s.q1);
        read_potential(r, "q2", s.q2);
        r.get("collar_rho", s.collar_rho);
        read_gamma(r, "gamma", s.gamma);
        r.get("r", s.r);
        if (const json* b = r.find("constants")) {
            Reader rb(*b, "stability.constants");
            rb.get("alpha3", s.constants.alpha3);
            rb.get("a0", s.constants.a0);
            rb.get("c", s.constants.c);
            rb.get("eps_tilde", s.constants.eps_tilde);
            rb.get("eps0", s.constants.eps0);
            rb.get("gamma_tilde", s.constants.gamma_tilde);
            rb.finish();
        }
        r.get("perturbation", s.perturbation);
        r.get("method", s.method);
        r.finish();
        require(s.method == "dirichlet" || s.method == "multiplier", "stability.method", "\"dirichlet\" or \"multiplier\"",
                s.method);
        require(s.r > 0.0, "stability.r", "number > 0", s.r);
        require(!s.N_ladder.empty(), "stability.N_ladder", "non-empty array", s.N_ladder);
    }
    if (const json* v = root.find("export")) {
        Reader r(*v, "export");
        auto& s = c.export_op;
        r.get("d", s.d);
        r.get("N", s.N);
        r.get("sigma_amplitude", s.sigma_amplitude);
        read_potential(r, "q", s.q);
        r.finish();
        require(s.d >= 1 && s.d <= 3, "export.d", "integer in [1, 3]", s.d);
    }
    root.finish();
    if (!c.command.empty()) (void)anchor(c.command);
    return c;
}

json to_json(const RunConfig& c) {
    json instances = json::array();
    for (const auto& i : c.cgo.instances) instances.push_back({{"xi", {i.xi[0], i.xi[1], i.xi[2]}}, {"a", i.a}});
    const auto& k = c.stability.constants;
    return {
        {"schema_version", kSchemaVersion},
        {"command", c.command},
        {"seed", c.seed},
        {"threads", c.threads},
        {"deterministic", c.deterministic},
        {"output", {{"dir", c.out.string()}, {"formats", c.formats}}},
        {"calculus",
         {{"d", c.calculus.d}, {"N", c.calculus.N}, {"samples", c.calculus.samples}, {"tolerance", c.calculus.tolerance}}},
        {"carleman",
         {{"d", c.carleman.d},
          {"lambda", c.carleman.lambda},
          {"s", c.carleman.s},
          {"eps0", c.carleman.eps0},
          {"s0", c.carleman.s0},
          {"sh", c.carleman.sh},
          {"probe_ladder", c.carleman.probe_ladder},
          {"fit_ladder", c.carleman.fit_ladder},
          {"samples", c.carleman.samples},
          {"order_tolerance", c.carleman.order_tolerance},
          {"spread_limit", c.carleman.spread_limit}}},
        {"ucp",
         {{"d", c.ucp.d},
          {"N", c.ucp.N},
          {"rho", c.ucp.rho},
          {"solutions", c.ucp.solutions},
          {"eps0", c.ucp.eps0},
          {"eps_tilde_factor", c.ucp.eps_tilde_factor},
          {"tau_count", c.ucp.tau_count},
          {"gamma", gamma_json(c.ucp.gamma)},
          {"alpha_min", c.ucp.alpha_min},
          {"alpha_max", c.ucp.alpha_max},
          {"alpha_steps", c.ucp.alpha_steps},
          {"C_cap", c.ucp.C_cap}}},
        {"cgo",
         {{"N", c.cgo.N},
          {"sigma_amplitude", c.cgo.sigma_amplitude},
          {"q_amplitude", c.cgo.q_amplitude},
          {"a0", c.cgo.a0},
          {"c", c.cgo.c},
          {"instances", instances},
          {"probe_ladder", c.cgo.probe_ladder},
          {"probe_a_scale", c.cgo.probe_a_scale},
          {"probe_a0", c.cgo.probe_a0},
          {"probe_c", c.cgo.probe_c},
          {"tolerance", c.cgo.tolerance},
          {"max_iterations", c.cgo.max_iterations},
          {"threshold_factor", c.cgo.threshold_factor}}},
        {"stability",
         {{"N_ladder", c.stability.N_ladder},
          {"sigma_amplitude", c.stability.sigma_amplitude},
          {"q1", potential_json(c.stability.q1)},
          {"q2", potential_json(c.stability.q2)},
          {"collar_rho", c.stability.collar_rho},
          {"gamma", gamma_json(c.stability.gamma)},
          {"r", c.stability.r},
          {"constants",
           {{"alpha3", k.alpha3}, {"a0", k.a0}, {"c", k.c}, {"eps_tilde", k.eps_tilde}, {"eps0", k.eps0},
            {"gamma_tilde", k.gamma_tilde}}},
          {"perturbation", c.stability.perturbation},
          {"method", c.stability.method}}},
        {"export",
         {{"d", c.export_op.d},
          {"N", c.export_op.N},
          {"sigma_amplitude", c.export_op.sigma_amplitude},
          {"q", potential_json(c.export_op.q)}}},
    };
}

std::string config_hash(const RunConfig& config) {
    json j = to_json(config);
    j.erase("output");
    j.erase("threads");
    const std::string canonical = j.dump();
    return hex16(fnv1a(canonical.data(), canonical.size()));
}

std::string csv_header_comment(const RunConfig& config) {
    return "# config_hash=" + config_hash(config) + " anchor=" + anchor(config.command) + " command=" + config.command;
}

// ---------------------------------------------------------------------------
// Run

RunRecord run(const RunConfig& config) {
    if (!config.seed_given) throw SchemaError("field 'seed': expected unsigned integer, got nothing (seeds are mandatory)");
    RunRecord record;
    record.command = config.command;
    record.anchor = anchor(config.command);
    record.config_hash = config_hash(config);
    if (!config.deterministic) record.timestamp = utc_now();
    for (const char* m : {"grid", "calculus", "operators", "norms", "carleman", "ucp", "cgo", "reconstruct", "harness"})
        record.versions[m] = kVersion;

    Outputs out(config, record);
    static const std::map<std::string, std::function<void(const RunConfig&, RunRecord&, Outputs&)>> table{
        {"verify-calculus", verify_calculus}, {"verify-carleman", verify_carleman}, {"verify-ucp", verify_ucp},
        {"run-cgo", run_cgo},                 {"run-stability", run_stability},     {"export-operator", export_operator}};
    staged(config.command, "run", [&] {
        table.at(config.command)(config, record, out);
        return 0;
    });
    return record;
}

json to_json(const RunRecord& r) {
    json metrics = json::object();
    for (const auto& [k, v] : r.metrics) metrics[k] = num(v);
    json artifacts = json::array();
    for (const auto& p : r.artifacts) artifacts.push_back(p.filename().string());
    json j = {{"command", r.command}, {"config_hash", r.config_hash}, {"anchor", r.anchor},
              {"versions", r.versions}, {"artifacts", artifacts},      {"metrics", metrics},
              {"passed", r.passed}};
    if (!r.timestamp.empty()) j["timestamp"] = r.timestamp;
    return j;
}

std::filesystem::path emit_report(const RunRecord& record, const std::string& format, const std::filesystem::path& dir,
                                  const RunConfig& config) {
    std::filesystem::create_directories(dir);
    const auto path = dir / ("record." + format);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    if (format == "json") {
        json j = to_json(record);
        j["config"] = to_json(config);
        j["config"].erase("output");
        j["config"].erase("threads");
        os << j.dump(2) << '\n';
    } else if (format == "csv") {
        os << csv_header_comment(config) << '\n' << "key,value\n" << std::setprecision(17);
        os << "passed," << (record.passed ? 1 : 0) << '\n';
        for (const auto& [k, v] : record.metrics) os << k << ',' << v << '\n';
    } else {
        throw SchemaError("field 'output.formats': expected \"csv\" or \"json\", got \"" + format + "\"");
    }
    if (!os) throw std::runtime_error("write failed: " + path.string());
    return path;
}

}  // namespace calderon
