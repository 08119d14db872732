#include "hjlab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "hjlab/errors.hpp"

namespace hjlab {

using nlohmann::json;

namespace {

const std::vector<std::string> stage_kinds = {"validate",       "ergodic",        "forward",  "adjoint",
                                              "energy",         "representation", "key_estimates",
                                              "estimate_sweep", "rate_sweep",     "longtime"};
const std::vector<std::string> hamiltonian_families = {"quadratic", "manufactured"};
const std::vector<std::string> diffusion_families = {"zero", "constant", "sin2", "abs_sin", "sigma_sigma_t"};
const std::vector<std::string> initial_kinds = {"zero", "sawtooth", "trig", "corrector"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
    return out;
}

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
    throw ConfigurationError("config field '" + path + "': " + what);
}

/// A json object together with its dotted path, for error messages.
class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) field_error(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key); }
    const json& raw(const std::string& key) const { return j_.at(key); }

    void only(const std::vector<std::string>& keys) const {
        for (const auto& [k, v] : j_.items())
            if (!contains(keys, k)) field_error(sub(k), "unknown field (allowed: " + join(keys) + ")");
    }

    Node object(const std::string& key) const {
        if (!has(key)) field_error(sub(key), "required field is missing");
        return Node(j_.at(key), sub(key));
    }

    double number(const std::string& key, double def) const {
        if (!has(key)) return def;
        return number_at(j_.at(key), sub(key));
    }
    double required_number(const std::string& key) const {
        if (!has(key)) field_error(sub(key), "required field is missing");
        return number_at(j_.at(key), sub(key));
    }
    std::optional<double> optional_number(const std::string& key) const {
        if (!has(key) || j_.at(key).is_null()) return std::nullopt;
        return number_at(j_.at(key), sub(key));
    }
    long long integer(const std::string& key, long long def) const {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_number_integer()) field_error(sub(key), "expected an integer");
        return v.get<long long>();
    }
    bool boolean(const std::string& key, bool def) const {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_boolean()) field_error(sub(key), "expected true or false");
        return v.get<bool>();
    }
    std::string string(const std::string& key, const std::string& def) const {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_string()) field_error(sub(key), "expected a string");
        return v.get<std::string>();
    }
    std::string required_string(const std::string& key) const {
        if (!has(key)) field_error(sub(key), "required field is missing");
        return string(key, "");
    }
    std::vector<double> numbers(const std::string& key) const {
        std::vector<double> out;
        if (!has(key)) return out;
        const json& v = j_.at(key);
        if (!v.is_array()) field_error(sub(key), "expected an array of numbers");
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number_at(v[i], sub(key) + "[" + std::to_string(i) + "]"));
        return out;
    }

    static double number_at(const json& v, const std::string& path) {
        if (!v.is_number()) field_error(path, "expected a number");
        double x = v.get<double>();
        if (!std::isfinite(x)) field_error(path, "must be finite");
        return x;
    }

private:
    const json& j_;
    std::string path_;
};

TrigPolynomial parse_trig(const json& j, const std::string& path) {
    if (!j.is_array()) field_error(path, "expected an array of {wave, amplitude, phase} terms");
    std::vector<TrigPolynomial::Term> terms;
    for (std::size_t i = 0; i < j.size(); ++i) {
        std::string p = path + "[" + std::to_string(i) + "]";
        Node t(j[i], p);
        t.only({"wave", "amplitude", "phase"});
        TrigPolynomial::Term term;
        if (t.has("wave")) {
            const json& w = t.raw("wave");
            if (!w.is_array() || w.empty() || w.size() > 2) field_error(p + ".wave", "expected 1 or 2 integers");
            for (std::size_t a = 0; a < w.size(); ++a) {
                if (!w[a].is_number_integer()) field_error(p + ".wave", "expected integers");
                term.wave[a] = w[a].get<int>();
            }
        }
        term.amplitude = t.required_number("amplitude");
        term.phase = t.number("phase", 0.0);
        terms.push_back(term);
    }
    return TrigPolynomial(std::move(terms));
}

json trig_json(const TrigPolynomial& t) {
    json a = json::array();
    for (const auto& term : t.terms())
        a.push_back({{"wave", {term.wave[0], term.wave[1]}}, {"amplitude", term.amplitude}, {"phase", term.phase}});
    return a;
}

HamiltonianConfig parse_hamiltonian(const Node& n) {
    n.only({"family", "parameters"});
    HamiltonianConfig h;
    h.family = n.required_string("family");
    if (!contains(hamiltonian_families, h.family))
        field_error(n.sub("family"), "unknown hamiltonian family '" + h.family + "' (known: " + join(hamiltonian_families) + ")");
    if (!n.has("parameters")) {
        if (h.family == "manufactured") field_error(n.sub("parameters"), "manufactured family needs a corrector");
        return h;
    }
    Node p = n.object("parameters");
    if (h.family == "quadratic") {
        p.only({"potential", "drift", "kappa"});
        if (p.has("potential")) h.potential = parse_trig(p.raw("potential"), p.sub("potential"));
        if (p.has("drift")) {
            const json& d = p.raw("drift");
            if (!d.is_array() || d.size() > 2) field_error(p.sub("drift"), "expected one trig polynomial per axis");
            for (std::size_t a = 0; a < d.size(); ++a)
                h.drift[a] = parse_trig(d[a], p.sub("drift") + "[" + std::to_string(a) + "]");
        }
        h.kappa = p.number("kappa", 1.0);
        if (!(h.kappa > 0.0)) field_error(p.sub("kappa"), "must be positive");
    } else {
        p.only({"corrector"});
        if (!p.has("corrector")) field_error(p.sub("corrector"), "required field is missing");
        h.corrector = parse_trig(p.raw("corrector"), p.sub("corrector"));
    }
    return h;
}

json hamiltonian_json(const HamiltonianConfig& h) {
    json j = {{"family", h.family}};
    if (h.family == "quadratic") {
        json p = {{"potential", trig_json(h.potential)}, {"kappa", h.kappa}};
        if (!h.drift[0].empty() || !h.drift[1].empty()) p["drift"] = {trig_json(h.drift[0]), trig_json(h.drift[1])};
        j["parameters"] = p;
    } else {
        j["parameters"] = {{"corrector", trig_json(h.corrector)}};
    }
    return j;
}

DiffusionConfig parse_diffusion(const Node& n) {
    n.only({"family", "parameters"});
    DiffusionConfig d;
    d.family = n.required_string("family");
    if (!contains(diffusion_families, d.family))
        field_error(n.sub("family"), "unknown diffusion family '" + d.family + "' (known: " + join(diffusion_families) + ")");
    if (n.has("parameters")) {
        Node p = n.object("parameters");
        p.only({"amplitude"});
        d.amplitude = p.number("amplitude", 1.0);
        if (!(d.amplitude >= 0.0)) field_error(p.sub("amplitude"), "must be nonnegative");
    }
    return d;
}

json diffusion_json(const DiffusionConfig& d) {
    json j = {{"family", d.family}};
    if (d.family != "zero") j["parameters"] = {{"amplitude", d.amplitude}};
    return j;
}

Numerics parse_numerics(const Node& n) {
    n.only({"flux", "gradient_bound", "cfl", "linear_solver", "solver_tolerance"});
    Numerics num;
    std::string flux = n.string("flux", "engquist_osher");
    if (flux == "engquist_osher") num.flux = NumericalFlux::engquist_osher;
    else if (flux == "lax_friedrichs") num.flux = NumericalFlux::lax_friedrichs;
    else field_error(n.sub("flux"), "expected engquist_osher or lax_friedrichs");
    num.gradient_bound = n.number("gradient_bound", num.gradient_bound);
    if (!(num.gradient_bound > 0.0)) field_error(n.sub("gradient_bound"), "must be positive");
    num.cfl = n.number("cfl", num.cfl);
    if (!(num.cfl >= 0.0)) field_error(n.sub("cfl"), "must be nonnegative (0 selects the default)");
    std::string ls = n.string("linear_solver", "direct");
    if (ls == "direct") num.linear_solver = LinearSolverKind::direct;
    else if (ls == "conjugate_gradient") num.linear_solver = LinearSolverKind::conjugate_gradient;
    else field_error(n.sub("linear_solver"), "expected direct or conjugate_gradient");
    num.solver_tolerance = n.number("solver_tolerance", num.solver_tolerance);
    if (!(num.solver_tolerance > 0.0)) field_error(n.sub("solver_tolerance"), "must be positive");
    return num;
}

json numerics_json(const Numerics& n) {
    return {{"flux", n.flux == NumericalFlux::engquist_osher ? "engquist_osher" : "lax_friedrichs"},
            {"gradient_bound", n.gradient_bound},
            {"cfl", n.cfl},
            {"linear_solver", n.linear_solver == LinearSolverKind::direct ? "direct" : "conjugate_gradient"},
            {"solver_tolerance", n.solver_tolerance}};
}

ProblemConfig parse_problem(const Node& n) {
    n.only({"hamiltonian", "hamiltonians", "diffusion", "diffusions", "coupling", "epsilon", "eta",
            "discrete_manufactured", "numerics"});
    ProblemConfig p;
    if (n.has("hamiltonian") == n.has("hamiltonians"))
        field_error(n.sub("hamiltonian"), "give exactly one of 'hamiltonian' or 'hamiltonians'");
    if (n.has("hamiltonian")) {
        p.hamiltonians.push_back(parse_hamiltonian(n.object("hamiltonian")));
    } else {
        const json& a = n.raw("hamiltonians");
        if (!a.is_array() || a.empty()) field_error(n.sub("hamiltonians"), "expected a nonempty array");
        for (std::size_t i = 0; i < a.size(); ++i)
            p.hamiltonians.push_back(parse_hamiltonian(Node(a[i], n.sub("hamiltonians") + "[" + std::to_string(i) + "]")));
    }
    if (n.has("diffusion") && n.has("diffusions"))
        field_error(n.sub("diffusion"), "give at most one of 'diffusion' or 'diffusions'");
    if (n.has("diffusions")) {
        const json& a = n.raw("diffusions");
        if (!a.is_array() || a.empty()) field_error(n.sub("diffusions"), "expected a nonempty array");
        for (std::size_t i = 0; i < a.size(); ++i)
            p.diffusions.push_back(parse_diffusion(Node(a[i], n.sub("diffusions") + "[" + std::to_string(i) + "]")));
    } else if (n.has("diffusion")) {
        p.diffusions.push_back(parse_diffusion(n.object("diffusion")));
    } else {
        p.diffusions.push_back(DiffusionConfig{});
    }
    if (n.has("coupling")) {
        const json& c = n.raw("coupling");
        std::string path = n.sub("coupling");
        if (!c.is_array()) field_error(path, "expected an m x m array");
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (!c[i].is_array()) field_error(path, "expected an m x m array");
            std::vector<double> row;
            for (std::size_t k = 0; k < c[i].size(); ++k)
                row.push_back(Node::number_at(c[i][k], path + "[" + std::to_string(i) + "][" + std::to_string(k) + "]"));
            rows.push_back(std::move(row));
        }
        p.coupling = std::move(rows);
    }
    p.epsilon = n.number("epsilon", 1.0);
    if (!(p.epsilon > 0.0)) field_error(n.sub("epsilon"), "must be positive");
    p.eta = n.optional_number("eta");
    if (p.eta && !(*p.eta >= 0.0)) field_error(n.sub("eta"), "must be nonnegative");
    p.discrete_manufactured = n.boolean("discrete_manufactured", true);
    if (n.has("numerics")) p.numerics = parse_numerics(n.object("numerics"));
    return p;
}

json problem_json(const ProblemConfig& p) {
    json j;
    if (p.hamiltonians.size() == 1) {
        j["hamiltonian"] = hamiltonian_json(p.hamiltonians.front());
    } else {
        j["hamiltonians"] = json::array();
        for (const auto& h : p.hamiltonians) j["hamiltonians"].push_back(hamiltonian_json(h));
    }
    if (p.diffusions.size() == 1) {
        j["diffusion"] = diffusion_json(p.diffusions.front());
    } else {
        j["diffusions"] = json::array();
        for (const auto& d : p.diffusions) j["diffusions"].push_back(diffusion_json(d));
    }
    if (p.coupling) j["coupling"] = *p.coupling;
    j["epsilon"] = p.epsilon;
    if (p.eta) j["eta"] = *p.eta;
    j["discrete_manufactured"] = p.discrete_manufactured;
    j["numerics"] = numerics_json(p.numerics);
    return j;
}

InitialConfig parse_initial(const Node& n) {
    n.only({"kind", "amplitude", "teeth", "terms"});
    InitialConfig ic;
    ic.kind = n.required_string("kind");
    if (!contains(initial_kinds, ic.kind))
        field_error(n.sub("kind"), "unknown initial kind '" + ic.kind + "' (known: " + join(initial_kinds) + ")");
    ic.amplitude = n.number("amplitude", ic.amplitude);
    ic.teeth = int(n.integer("teeth", ic.teeth));
    if (ic.teeth < 1) field_error(n.sub("teeth"), "must be at least 1");
    if (n.has("terms")) ic.terms = parse_trig(n.raw("terms"), n.sub("terms"));
    if (ic.kind == "trig" && ic.terms.empty()) field_error(n.sub("terms"), "trig initial data needs terms");
    return ic;
}

json initial_json(const InitialConfig& ic) {
    json j = {{"kind", ic.kind}};
    if (ic.kind == "sawtooth") {
        j["amplitude"] = ic.amplitude;
        j["teeth"] = ic.teeth;
    } else if (ic.kind == "trig") {
        j["terms"] = trig_json(ic.terms);
    }
    return j;
}

double default_tol(const std::string& kind) {
    if (kind == "energy") return 1e-8;
    if (kind == "representation") return 1e-6;
    if (kind == "estimate_sweep") return 1e-9;
    return 1e-10;
}

std::vector<std::string> stage_fields(const std::string& kind) {
    std::vector<std::string> f = {"kind", "name"};
    const std::vector<std::string> erg = {"window", "max_time", "newton_switch", "newton", "newton_max_iterations"};
    auto add = [&](std::initializer_list<const char*> l) { f.insert(f.end(), l.begin(), l.end()); };
    if (kind == "validate") add({"samples"});
    if (kind == "ergodic") {
        add({"epsilons", "tol", "known_constant"});
        f.insert(f.end(), erg.begin(), erg.end());
    }
    if (kind == "forward") add({"T", "dt", "initial", "snapshots"});
    if (kind == "adjoint") add({"x0", "component", "mass_tolerance", "positivity_tolerance", "snapshots"});
    if (kind == "energy") add({"tol"});
    if (kind == "representation") add({"tol", "refinements"});
    if (kind == "estimate_sweep") {
        add({"epsilons", "tol", "initial", "closeness", "x0", "component", "exponent", "mass_tolerance",
             "positivity_tolerance"});
        f.insert(f.end(), erg.begin(), erg.end());
    }
    if (kind == "rate_sweep") add({"epsilons", "initial", "exponent"});
    if (kind == "longtime") add({"T", "initial"});
    return f;
}

StageConfig parse_stage(const Node& n) {
    StageConfig s;
    s.kind = n.required_string("kind");
    if (!contains(stage_kinds, s.kind))
        field_error(n.sub("kind"), "unknown stage kind '" + s.kind + "' (known: " + join(stage_kinds) + ")");
    n.only(stage_fields(s.kind));
    s.name = n.string("name", s.kind);
    s.epsilons = n.numbers("epsilons");
    s.known_constant = n.optional_number("known_constant");
    s.tol = n.number("tol", default_tol(s.kind));
    if (!(s.tol > 0.0)) field_error(n.sub("tol"), "must be positive");
    s.ergodic.window = n.number("window", s.ergodic.window);
    s.ergodic.max_time = n.number("max_time", s.ergodic.max_time);
    s.ergodic.newton_switch = n.number("newton_switch", s.ergodic.newton_switch);
    s.ergodic.newton = n.boolean("newton", s.ergodic.newton);
    s.ergodic.newton_max_iterations = int(n.integer("newton_max_iterations", s.ergodic.newton_max_iterations));
    s.T = n.number("T", 1.0);
    if (!(s.T > 0.0)) field_error(n.sub("T"), "must be positive");
    s.dt = n.optional_number("dt");
    if (s.dt && !(*s.dt > 0.0)) field_error(n.sub("dt"), "must be positive");
    if (n.has("initial")) {
        const json& a = n.raw("initial");
        if (a.is_array()) {
            for (std::size_t i = 0; i < a.size(); ++i)
                s.initial.push_back(parse_initial(Node(a[i], n.sub("initial") + "[" + std::to_string(i) + "]")));
            if (s.initial.empty()) field_error(n.sub("initial"), "expected at least one entry");
        } else {
            s.initial.push_back(parse_initial(n.object("initial")));
        }
    }
    long long snaps = n.integer("snapshots", 5);
    if (snaps < 2) field_error(n.sub("snapshots"), "must be at least 2");
    s.snapshots = std::size_t(snaps);
    if (n.has("x0")) {
        long long x0 = n.integer("x0", 0);
        if (x0 < 0) field_error(n.sub("x0"), "must be a node index");
        s.x0 = std::size_t(x0);
    }
    if (n.has("component")) s.component = int(n.integer("component", 0));
    s.adjoint.mass_tolerance = n.number("mass_tolerance", 1e-10);
    s.adjoint.positivity_tolerance = n.number("positivity_tolerance", 1e-12);
    s.refinements = int(n.integer("refinements", 0));
    if (s.refinements < 0) field_error(n.sub("refinements"), "must be nonnegative");
    long long samples = n.integer("samples", 10000);
    if (samples < 10) field_error(n.sub("samples"), "must be at least 10");
    s.samples = std::size_t(samples);
    s.exponent = n.number("exponent", 0.25);
    s.closeness = n.boolean("closeness", true);
    return s;
}

json stage_json(const StageConfig& s) {
    json j = {{"kind", s.kind}, {"name", s.name}};
    auto fields = stage_fields(s.kind);
    auto want = [&](const char* k) { return contains(fields, k); };
    if (want("samples")) j["samples"] = s.samples;
    if (want("epsilons")) j["epsilons"] = s.epsilons;
    if (want("tol")) j["tol"] = s.tol;
    if (want("known_constant") && s.known_constant) j["known_constant"] = *s.known_constant;
    if (want("window")) {
        j["window"] = s.ergodic.window;
        j["max_time"] = s.ergodic.max_time;
        j["newton_switch"] = s.ergodic.newton_switch;
        j["newton"] = s.ergodic.newton;
        j["newton_max_iterations"] = s.ergodic.newton_max_iterations;
    }
    if (want("T")) j["T"] = s.T;
    if (want("dt") && s.dt) j["dt"] = *s.dt;
    if (want("initial") && !s.initial.empty()) {
        if (s.initial.size() == 1) {
            j["initial"] = initial_json(s.initial.front());
        } else {
            j["initial"] = json::array();
            for (const auto& ic : s.initial) j["initial"].push_back(initial_json(ic));
        }
    }
    if (want("snapshots")) j["snapshots"] = s.snapshots;
    if (want("x0") && s.x0) j["x0"] = *s.x0;
    if (want("component") && s.component) j["component"] = *s.component;
    if (want("mass_tolerance")) {
        j["mass_tolerance"] = s.adjoint.mass_tolerance;
        j["positivity_tolerance"] = s.adjoint.positivity_tolerance;
    }
    if (want("refinements")) j["refinements"] = s.refinements;
    if (want("exponent")) j["exponent"] = s.exponent;
    if (want("closeness")) j["closeness"] = s.closeness;
    return j;
}

// ---------------------------------------------------------------------------
// problem construction

Diffusion make_diffusion(const DiffusionConfig& d) {
    if (d.family == "zero") return Diffusion::zero();
    if (d.family == "constant") return Diffusion::constant(d.amplitude);
    if (d.family == "sin2") return Diffusion::sin2(d.amplitude);
    if (d.family == "abs_sin") return Diffusion::abs_sin(d.amplitude);
    return Diffusion::sigma_sigma_t(d.amplitude);
}

bool is_manufactured(const ProblemConfig& p) { return p.hamiltonians.front().family == "manufactured"; }

std::vector<SmoothFunction> manufactured_targets(const ProblemConfig& p) {
    std::vector<SmoothFunction> t;
    for (const auto& h : p.hamiltonians) t.push_back(SmoothFunction::from(h.corrector));
    return t;
}

std::optional<CouplingMatrix> make_coupling(const ProblemConfig& p) {
    if (!p.coupling) return std::nullopt;
    std::vector<double> flat;
    for (const auto& row : *p.coupling) flat.insert(flat.end(), row.begin(), row.end());
    return CouplingMatrix(int(p.coupling->size()), flat);
}

/// Continuous problem (closed-form potentials) without the node correction.
ProblemSpec continuous_problem(const ExperimentConfig& c) {
    const ProblemConfig& pc = c.problem;
    const std::size_t m = pc.hamiltonians.size();
    std::vector<Diffusion> ds;
    for (const auto& d : pc.diffusions) ds.push_back(make_diffusion(d));
    std::vector<Diffusion> per(m, ds.front());
    if (ds.size() == m) per = ds;
    auto coupling = make_coupling(pc);

    std::vector<Hamiltonian> hs;
    if (is_manufactured(pc)) {
        auto targets = manufactured_targets(pc);
        if (coupling) {
            hs = manufacture_system_ergodic(targets, per, *coupling, c.dim).hamiltonians;
        } else {
            hs.push_back(manufacture_ergodic(targets.front(), per.front(), c.dim).hamiltonian);
        }
    } else {
        for (const auto& h : pc.hamiltonians) hs.push_back(Hamiltonian::quadratic(h.potential, h.drift, h.kappa));
    }
    ProblemSpec p;
    if (coupling) {
        p = make_system(hs, ds, *coupling, pc.epsilon, pc.eta);
    } else {
        p = make_problem(hs.front(), ds.front(), pc.epsilon, pc.eta);
    }
    p.pinned_eta = pc.eta;
    p.numerics = pc.numerics;
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// output helpers

std::string num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

class Csv {
public:
    Csv(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw Error("cannot write " + path.string());
        row_strings(header);
    }
    void row(const std::vector<double>& values) {
        std::vector<std::string> s;
        for (double v : values) s.push_back(num(v));
        row_strings(s);
    }
    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

void write_dat(const std::filesystem::path& path, const std::string& xlabel, const std::string& ylabel,
               const std::vector<double>& x, const std::vector<double>& y) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "# " << xlabel << ' ' << ylabel << '\n';
    for (std::size_t i = 0; i < x.size(); ++i) out << num(x[i]) << ' ' << num(y[i]) << '\n';
}

std::vector<std::size_t> snapshot_indices(std::size_t count, std::size_t snapshots) {
    std::vector<std::size_t> idx;
    if (count == 0) return idx;
    std::size_t k = std::min(snapshots, count);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = k == 1 ? count - 1 : (i * (count - 1) + (k - 1) / 2) / (k - 1);
        if (idx.empty() || idx.back() != j) idx.push_back(j);
    }
    return idx;
}

void write_fields(const std::filesystem::path& path, const PeriodicGrid& grid, int components,
                  const std::vector<double>& times, const std::vector<std::vector<double>>& states,
                  std::size_t snapshots) {
    Csv csv(path, {"time", "component", "node", "x1", "x2", "value"});
    const std::size_t n = grid.size();
    for (std::size_t i : snapshot_indices(states.size(), snapshots))
        for (int c = 0; c < components; ++c)
            for (std::size_t k = 0; k < n; ++k) {
                Point x = grid.node(k);
                csv.row({times[i], double(c), double(k), x[0], grid.dim() == 2 ? x[1] : 0.0,
                         states[i][std::size_t(c) * n + k]});
            }
}

/// Largest ratio value(eps_{k+1}) / value(eps_k) along a descending sweep.
double max_growth(const std::vector<double>& v) {
    double g = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i - 1] > 0.0) g = std::max(g, v[i] / v[i - 1]);
    return g;
}

std::optional<LogLogFit> try_fit(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (y[i] > 0.0 && std::isfinite(y[i])) {
            xs.push_back(x[i]);
            ys.push_back(y[i]);
        }
    if (xs.size() < 3) return std::nullopt;
    return fit_loglog(xs, ys);
}

// ---------------------------------------------------------------------------
// runner

struct RunState {
    const ExperimentConfig& cfg;
    PeriodicGrid grid;
    ProblemSpec problem;
    std::filesystem::path dir;

    std::unique_ptr<Trajectory> traj;
    std::unique_ptr<Linearization> lin;
    std::unique_ptr<AdjointDensity> sigma;
    std::unique_ptr<ErgodicSolution> ergodic;
    /// artifact -> name of the stage that last tried to produce it, and whether it succeeded
    std::map<std::string, std::pair<std::string, bool>> artifacts;
    std::vector<std::pair<std::string, std::string>> plots;  // (dat file, title)
};

InitialData initial_data(const std::vector<InitialConfig>& ic, int m) {
    return [ic, m](const ProblemSpec&, const PeriodicGrid& grid) {
        std::vector<ScalarField> out;
        for (int c = 0; c < m; ++c) {
            const InitialConfig& x = ic.size() == 1 ? ic.front() : ic[std::size_t(c)];
            if (x.kind == "zero") out.push_back(ScalarField::constant(grid, 0.0));
            else if (x.kind == "sawtooth") out.push_back(sawtooth_initial(grid, x.amplitude, x.teeth));
            else if (x.kind == "trig") out.push_back(trig_initial(grid, x.terms));
            else throw ConfigurationError("corrector initial data is resolved by the stage");
        }
        return out;
    };
}

bool wants_corrector(const StageConfig& s) {
    return std::any_of(s.initial.begin(), s.initial.end(), [](const InitialConfig& i) { return i.kind == "corrector"; });
}

std::vector<InitialConfig> initial_or_default(const StageConfig& s) {
    if (!s.initial.empty()) return s.initial;
    return {InitialConfig{}};
}

std::vector<std::string> requirements(const StageConfig& s) {
    if (s.kind == "adjoint") return {"trajectory"};
    if (s.kind == "energy" || s.kind == "representation") return {"trajectory", "adjoint"};
    if (s.kind == "key_estimates") return {"trajectory", "adjoint", "ergodic"};
    if (s.kind == "longtime") return {"ergodic"};
    if (s.kind == "forward" && wants_corrector(s)) return {"ergodic"};
    return {};
}

std::string produces(const StageConfig& s) {
    if (s.kind == "forward") return "trajectory";
    if (s.kind == "adjoint") return "adjoint";
    if (s.kind == "ergodic") return "ergodic";
    return "";
}

void add_plot(RunState& st, StageResult& r, const std::string& file, const std::string& title) {
    r.outputs.push_back(file);
    st.plots.emplace_back(file, title);
}

void stage_validate(RunState& st, const StageConfig& s, StageResult& r) {
    const auto& p = st.problem;
    std::string file = s.name + ".csv";
    Csv csv(st.dir / file, {"component", "hypothesis", "applicable", "passed", "empirical", "bound"});
    r.outputs.push_back(file);
    int failures = 0;
    for (int c = 0; c < p.components(); ++c) {
        auto rep = validate_pair(p.hamiltonians[std::size_t(c)], p.diffusion(c), st.grid.dim(), s.samples);
        for (const auto& chk : rep.checks) {
            csv.row_strings({std::to_string(c), chk.hypothesis, chk.applicable ? "1" : "0", chk.passed ? "1" : "0",
                             num(chk.empirical), num(chk.bound)});
            if (chk.applicable) r.metrics[chk.hypothesis + "_" + std::to_string(c)] = chk.empirical;
            if (!chk.passed) ++failures;
        }
    }
    if (p.coupling) {
        auto rep = validate_coupling(*p.coupling);
        for (const auto& chk : rep.checks) {
            csv.row_strings({"all", chk.hypothesis, "1", chk.passed ? "1" : "0", num(chk.empirical), num(chk.bound)});
            if (!chk.passed) ++failures;
        }
    }
    r.metrics["failures"] = failures;
    if (failures) throw HypothesisViolation("validate", std::to_string(failures) + " hypothesis checks failed");
}

void stage_ergodic(RunState& st, const StageConfig& s, StageResult& r) {
    std::vector<double> eps = s.epsilons.empty() ? std::vector<double>{st.problem.epsilon} : s.epsilons;
    SweepTable t = viscosity_sweep(st.problem, st.grid, eps, s.tol, s.known_constant, s.ergodic);
    std::string file = s.name + ".csv";
    Csv csv(st.dir / file, {"epsilon", "eta", "Hbar", "grad_norm", "residual", "wall_time"});
    r.outputs.push_back(file);
    for (const auto& row : t.rows)
        csv.row({row.epsilon, row.eta, row.hbar, row.grad_norm, row.residual,
                 st.cfg.output.timing ? row.wall_time : 0.0});
    const auto& last = t.rows.back();
    r.metrics["Hbar"] = last.hbar;
    r.metrics["eta"] = last.eta;
    r.metrics["grad_variation"] = t.grad_variation;
    double res = 0.0;
    for (const auto& row : t.rows) res = std::max(res, row.residual);
    r.metrics["max_residual"] = res;
    if (t.richardson) r.metrics["richardson"] = *t.richardson;
    if (t.reference) r.metrics["reference"] = *t.reference;
    if (t.fit) {
        r.metrics["slope"] = t.fit->slope;
        r.metrics["fit_residual"] = t.fit->residual;
    }
    if (t.reference) {
        std::vector<double> x, y;
        for (const auto& row : t.rows) {
            x.push_back(row.epsilon);
            y.push_back(std::abs(row.hbar - *t.reference));
            QuantityRecord q{"Hbar_error", row.epsilon, y.back(), std::nullopt, std::nullopt};
            if (t.fit) q.slope = t.fit->slope;
            r.quantities.push_back(q);
        }
        std::string dat = s.name + ".dat";
        write_dat(st.dir / dat, "epsilon", "|Hbar-c|", x, y);
        add_plot(st, r, dat, s.name + ": |Hbar - c| vs epsilon");
    }
    st.ergodic = std::make_unique<ErgodicSolution>(t.solutions.back());
    std::string cfile = s.name + "_corrector.csv";
    write_fields(st.dir / cfile, st.grid, st.ergodic->corrector.size() > 0 ? int(st.ergodic->corrector.size()) : 1,
                 {0.0}, {stack(st.ergodic->corrector)}, 1);
    r.outputs.push_back(cfile);
}

std::vector<ScalarField> resolve_initial(RunState& st, const StageConfig& s, const ProblemSpec& p) {
    auto ic = initial_or_default(s);
    const int m = p.components();
    if (ic.size() != 1 && int(ic.size()) != m)
        throw ConfigurationError("stage '" + s.name + "': initial needs one entry or one per component");
    std::vector<ScalarField> out;
    for (int c = 0; c < m; ++c) {
        const InitialConfig& x = ic.size() == 1 ? ic.front() : ic[std::size_t(c)];
        if (x.kind == "corrector") {
            if (!st.ergodic) throw ConfigurationError("corrector initial data needs an ergodic stage");
            out.push_back(st.ergodic->v(c));
        } else {
            out.push_back(initial_data({x}, 1)(p, st.grid).front());
        }
    }
    return out;
}

void stage_forward(RunState& st, const StageConfig& s, StageResult& r) {
    auto u0 = resolve_initial(st, s, st.problem);
    ForwardOptions fo;
    fo.dt = s.dt;
    st.sigma.reset();
    st.lin.reset();
    auto [traj, rep] = solve_system_cauchy(st.problem, u0, s.T, fo);
    st.traj = std::make_unique<Trajectory>(std::move(traj));
    r.metrics["steps"] = double(rep.steps);
    r.metrics["dt"] = rep.dt;
    r.metrics["max_gradient"] = rep.max_gradient;
    r.metrics["max_time_derivative"] = rep.max_time_derivative;
    r.metrics["min_explicit_diagonal"] = rep.min_explicit_diagonal;
    r.metrics["linear_iterations"] = double(rep.linear_iterations);
    r.metrics["rate_value"] = rate_value(*st.traj);
    std::string file = s.name + ".csv";
    write_fields(st.dir / file, st.grid, st.traj->components(), st.traj->times, st.traj->states, s.snapshots);
    r.outputs.push_back(file);
}

void stage_adjoint(RunState& st, const StageConfig& s, StageResult& r) {
    auto [node, comp] = argmax_time_derivative(*st.traj);
    if (s.x0) node = *s.x0;
    if (s.component) comp = *s.component;
    st.lin = std::make_unique<Linearization>(*st.traj);
    st.sigma.reset();
    auto sigma = solve_system_adjoint(*st.lin, node, comp, st.traj->problem.epsilon, s.adjoint);
    st.sigma = std::make_unique<AdjointDensity>(std::move(sigma));
    r.metrics["x0"] = double(node);
    r.metrics["component"] = comp;
    r.metrics["max_mass_error"] = st.sigma->max_mass_error;
    r.metrics["min_sigma"] = st.sigma->min_value;
    std::string file = s.name + ".csv";
    write_fields(st.dir / file, st.grid, st.sigma->components, st.sigma->times, st.sigma->states, s.snapshots);
    r.outputs.push_back(file);
}

void stage_energy(RunState& st, const StageConfig& s, StageResult& r) {
    EnergyTrace et = energy_trace(*st.traj, *st.sigma);
    std::string file = s.name + ".csv";
    Csv csv(st.dir / file, {"time", "energy"});
    for (std::size_t i = 0; i < et.times.size(); ++i) csv.row({et.times[i], et.energy[i]});
    r.outputs.push_back(file);
    std::string dat = s.name + ".dat";
    std::vector<double> dev;
    for (double e : et.energy) dev.push_back(e - et.energy.front());
    write_dat(st.dir / dat, "t", "E(t)-E(0)", et.times, dev);
    add_plot(st, r, dat, s.name + ": energy deviation");
    r.metrics["energy0"] = et.energy.front();
    r.metrics["drift"] = et.drift;
    if (et.drift > s.tol) throw ConservationError("energy drift " + num(et.drift) + " exceeds " + num(s.tol));
}

void stage_representation(RunState& st, const StageConfig& s, StageResult& r) {
    std::string file = s.name + ".csv";
    Csv csv(st.dir / file, {"dt", "lhs", "rhs", "gap"});
    r.outputs.push_back(file);
    RepresentationCheck rc = representation_check(*st.traj, *st.sigma);
    const double dt0 = st.traj->dt;
    csv.row({dt0, rc.lhs, rc.rhs, rc.gap});
    r.metrics["lhs"] = rc.lhs;
    r.metrics["rhs"] = rc.rhs;
    r.metrics["gap"] = rc.gap;
    r.metrics["dt"] = dt0;
    const double allowed = std::max(s.tol, 5.0 * dt0 * dt0) * std::max(1.0, std::abs(rc.lhs));
    r.metrics["allowed_gap"] = allowed;

    // same source, same initial data, dt halved each level
    double prev = rc.gap;
    double dt = dt0;
    for (int level = 1; level <= s.refinements; ++level) {
        dt *= 0.5;
        ForwardOptions fo;
        fo.dt = dt;
        std::vector<ScalarField> u0 = st.traj->fields(0);
        auto [traj, rep] = solve_system_cauchy(st.traj->problem, u0, st.traj->times.back(), fo);
        Linearization lin(traj);
        auto sigma = solve_system_adjoint(lin, rc.node, rc.component, traj.problem.epsilon);
        RepresentationCheck rr = representation_check(traj, sigma);
        csv.row({traj.dt, rr.lhs, rr.rhs, rr.gap});
        r.metrics["gap_" + std::to_string(level)] = rr.gap;
        r.metrics["ratio_" + std::to_string(level)] = rr.gap > 0.0 ? prev / rr.gap : INFINITY;
        prev = rr.gap;
    }
    if (rc.gap > allowed) throw ConservationError("representation gap " + num(rc.gap) + " exceeds " + num(allowed));
}

void stage_key_estimates(RunState& st, const StageConfig& s, StageResult& r) {
    EstimateReport e = key_estimates(*st.traj, *st.ergodic, *st.sigma);
    std::string file = s.name + ".csv";
    Csv csv(st.dir / file, {"epsilon", "eta", "I1", "I2", "II", "esti1", "general1", "general2", "coupling"});
    csv.row({e.epsilon, e.eta, e.i1, e.i2, e.ii, e.esti1, e.general1, e.general2, e.coupling.value_or(NAN)});
    r.outputs.push_back(file);
    r.metrics = {{"I1", e.i1}, {"I2", e.i2}, {"II", e.ii}, {"esti1", e.esti1}, {"general1", e.general1},
                 {"general2", e.general2}};
    if (e.coupling) r.metrics["coupling"] = *e.coupling;
}

void stage_estimate_sweep(RunState& st, const StageConfig& s, StageResult& r) {
    EstimateSweepOptions o;
    auto ic = initial_or_default(s);
    o.start_from_corrector = std::all_of(ic.begin(), ic.end(), [](const InitialConfig& i) { return i.kind == "corrector"; });
    if (!o.start_from_corrector) {
        if (wants_corrector(s)) throw ConfigurationError("estimate_sweep: corrector initial data must be used for every component");
        o.initial = initial_data(ic, st.problem.components());
    }
    o.ergodic_tol = s.tol;
    o.ergodic = s.ergodic;
    o.closeness = s.closeness;
    o.x0 = s.x0;
    o.component = s.component;
    o.adjoint = s.adjoint;
    std::vector<double> eps = s.epsilons.empty() ? std::vector<double>{st.problem.epsilon} : s.epsilons;
    auto rows = estimate_sweep(st.problem, st.grid, eps, o);

    std::string file = s.name + ".csv";
    Csv csv(st.dir / file, {"epsilon", "eta", "dt", "steps", "Hbar", "I1", "I2", "II", "esti1", "general1",
                            "general2", "coupling", "rate_value", "closeness", "energy_drift", "mass_error",
                            "min_sigma", "lhs", "rhs", "gap"});
    r.outputs.push_back(file);
    std::vector<double> e, i1, i2, ii, es, g1, g2, cq, rate, clo;
    double drift = 0, mass = 0, smin = 0, gap = 0, gmax = 0, dmin = 1;
    for (const auto& row : rows) {
        const auto& k = row.estimates;
        csv.row({row.epsilon, row.eta, row.dt, double(row.steps), row.hbar, k.i1, k.i2, k.ii, k.esti1, k.general1,
                 k.general2, k.coupling.value_or(NAN), row.rate_value, row.closeness.value_or(NAN), row.energy_drift,
                 row.mass_error, row.min_sigma, row.representation.lhs, row.representation.rhs, row.representation.gap});
        e.push_back(row.epsilon);
        i1.push_back(k.i1);
        i2.push_back(k.i2);
        ii.push_back(k.ii);
        es.push_back(k.esti1);
        g1.push_back(k.general1);
        g2.push_back(k.general2);
        if (k.coupling) cq.push_back(*k.coupling);
        rate.push_back(row.rate_value);
        if (row.closeness) clo.push_back(*row.closeness);
        drift = std::max(drift, row.energy_drift);
        mass = std::max(mass, row.mass_error);
        smin = std::min(smin, row.min_sigma);
        gap = std::max(gap, row.representation.gap / std::max(1.0, std::abs(row.representation.lhs)));
        gmax = std::max(gmax, row.max_gradient);
        dmin = std::min(dmin, row.min_explicit_diagonal);
    }
    auto record = [&](const std::string& q, const std::vector<double>& v, std::optional<double> power) {
        if (v.size() != e.size()) return;
        std::optional<double> bound;
        if (power) bound = envelope_constant(e, v, *power);
        auto fit = try_fit(e, v);
        double mx = *std::max_element(v.begin(), v.end());
        r.metrics["max_" + q] = mx;
        r.metrics["growth_" + q] = max_growth(v);
        if (bound) r.metrics["envelope_" + q] = *bound;
        if (fit) r.metrics["slope_" + q] = fit->slope;
        for (std::size_t i = 0; i < v.size(); ++i) {
            QuantityRecord rec{q, e[i], v[i], bound, std::nullopt};
            if (fit) rec.slope = fit->slope;
            r.quantities.push_back(rec);
        }
        std::string dat = s.name + "_" + q + ".dat";
        write_dat(st.dir / dat, "epsilon", q, e, v);
        add_plot(st, r, dat, s.name + ": " + q + " vs epsilon");
    };
    record("I1", i1, std::nullopt);
    record("I2", i2, std::nullopt);
    record("II", ii, 0.5);
    record("esti1", es, std::nullopt);
    record("general1", g1, std::nullopt);
    record("general2", g2, std::nullopt);
    if (!cq.empty()) record("coupling", cq, 1.0);
    record("rate", rate, s.exponent);
    if (!clo.empty()) record("closeness", clo, 1.0);
    r.metrics["max_energy_drift"] = drift;
    r.metrics["max_mass_error"] = mass;
    r.metrics["min_sigma"] = smin;
    r.metrics["max_relative_gap"] = gap;
    r.metrics["max_gradient"] = gmax;
    r.metrics["min_explicit_diagonal"] = dmin;
    r.metrics["exponent"] = s.exponent;
}

void stage_rate_sweep(RunState& st, const StageConfig& s, StageResult& r) {
    auto ic = initial_or_default(s);
    InitialData u0;
    if (wants_corrector(s)) {
        if (ic.size() != 1) throw ConfigurationError("rate_sweep: corrector initial data must be used for every component");
        double tol = s.tol;
        u0 = [tol](const ProblemSpec& p, const PeriodicGrid& g) { return solve_system_ergodic(p, g, tol).corrector; };
    } else {
        u0 = initial_data(ic, st.problem.components());
    }
    std::vector<double> eps = s.epsilons;
    RateFit fit = rate_sweep(st.problem, st.grid, eps, u0, s.exponent);
    std::string file = s.name + ".csv";
    Csv csv(st.dir / file, {"epsilon", "value"});
    for (std::size_t i = 0; i < fit.epsilons.size(); ++i) csv.row({fit.epsilons[i], fit.values[i]});
    r.outputs.push_back(file);
    std::string dat = s.name + ".dat";
    write_dat(st.dir / dat, "epsilon", "eps*|w_t|", fit.epsilons, fit.values);
    add_plot(st, r, dat, s.name + ": rate vs epsilon");
    r.metrics["envelope"] = fit.envelope;
    r.metrics["exponent"] = fit.exponent;
    r.metrics["rows"] = double(fit.values.size());
    if (fit.fit) {
        r.metrics["slope"] = fit.fit->slope;
        r.metrics["fit_residual"] = fit.fit->residual;
    }
    for (std::size_t i = 0; i < fit.epsilons.size(); ++i) {
        QuantityRecord q{"rate", fit.epsilons[i], fit.values[i], fit.envelope, std::nullopt};
        if (fit.fit) q.slope = fit.fit->slope;
        r.quantities.push_back(q);
    }
}

void stage_longtime(RunState& st, const StageConfig& s, StageResult& r) {
    ProblemSpec p = st.problem.with_epsilon(1.0, st.ergodic->eta);
    auto u0 = resolve_initial(st, s, p);
    LargeTimeSeries lt = large_time_convergence(p, u0, s.T, *st.ergodic);
    std::string file = s.name + ".csv";
    Csv csv(st.dir / file, {"time", "distance", "raw", "monotone"});
    for (std::size_t i = 0; i < lt.times.size(); ++i)
        csv.row({lt.times[i], lt.distance[i], lt.raw[i], lt.monotone[i] ? 1.0 : 0.0});
    r.outputs.push_back(file);
    std::string dat = s.name + ".dat";
    write_dat(st.dir / dat, "t", "distance", lt.times, lt.distance);
    add_plot(st, r, dat, s.name + ": constant-adjusted distance");
    r.metrics["final_distance"] = lt.distance.back();
    r.metrics["final_raw"] = lt.raw.back();
    r.metrics["all_monotone"] = lt.all_monotone ? 1.0 : 0.0;
    r.metrics["slack"] = lt.slack;
    r.metrics["Hbar"] = st.ergodic->ergodic_constant;
}

void run_stage(RunState& st, const StageConfig& s, StageResult& r) {
    if (s.kind == "validate") stage_validate(st, s, r);
    else if (s.kind == "ergodic") stage_ergodic(st, s, r);
    else if (s.kind == "forward") stage_forward(st, s, r);
    else if (s.kind == "adjoint") stage_adjoint(st, s, r);
    else if (s.kind == "energy") stage_energy(st, s, r);
    else if (s.kind == "representation") stage_representation(st, s, r);
    else if (s.kind == "key_estimates") stage_key_estimates(st, s, r);
    else if (s.kind == "estimate_sweep") stage_estimate_sweep(st, s, r);
    else if (s.kind == "rate_sweep") stage_rate_sweep(st, s, r);
    else if (s.kind == "longtime") stage_longtime(st, s, r);
}

json metrics_json(const std::map<std::string, double>& m) {
    json j = json::object();
    for (const auto& [k, v] : m) {
        if (std::isfinite(v)) j[k] = v;
        else j[k] = nullptr;
    }
    return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig parse_config(const json& j) {
    Node root(j, "");
    root.only({"experiment", "grid", "problem", "pipeline", "output"});
    ExperimentConfig c;
    c.experiment = root.string("experiment", c.experiment);
    Node g = root.object("grid");
    g.only({"dim", "N"});
    c.dim = int(g.integer("dim", 1));
    c.N = int(g.integer("N", 256));
    c.problem = parse_problem(root.object("problem"));
    if (!root.has("pipeline") || !root.raw("pipeline").is_array())
        field_error("pipeline", "expected an array of stages");
    const json& pl = root.raw("pipeline");
    for (std::size_t i = 0; i < pl.size(); ++i)
        c.pipeline.push_back(parse_stage(Node(pl[i], "pipeline[" + std::to_string(i) + "]")));
    if (root.has("output")) {
        Node o = root.object("output");
        o.only({"directory", "timing", "plots"});
        c.output.directory = o.string("directory", "out");
        c.output.timing = o.boolean("timing", false);
        c.output.plots = o.boolean("plots", true);
    }
    validate_config(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigurationError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["experiment"] = c.experiment;
    j["grid"] = {{"dim", c.dim}, {"N", c.N}};
    j["problem"] = problem_json(c.problem);
    j["pipeline"] = json::array();
    for (const auto& s : c.pipeline) j["pipeline"].push_back(stage_json(s));
    j["output"] = {{"directory", c.output.directory.string()}, {"timing", c.output.timing}, {"plots", c.output.plots}};
    return j;
}

void validate_config(const ExperimentConfig& c) {
    if (c.dim != 1 && c.dim != 2) field_error("grid.dim", "must be 1 or 2");
    if (c.N < 4) field_error("grid.N", "must be at least 4");
    const ProblemConfig& p = c.problem;
    const std::size_t m = p.hamiltonians.size();
    if (m == 0) field_error("problem.hamiltonian", "required field is missing");
    bool man = is_manufactured(p);
    for (std::size_t i = 0; i < m; ++i)
        if ((p.hamiltonians[i].family == "manufactured") != man)
            field_error("problem.hamiltonians[" + std::to_string(i) + "].family",
                        "manufactured and closed-form families cannot be mixed");
    if (p.diffusions.size() != 1 && p.diffusions.size() != m)
        field_error("problem.diffusions", "give one shared diffusion or one per component");
    for (std::size_t i = 0; i < p.diffusions.size(); ++i)
        if (p.diffusions[i].family == "sigma_sigma_t" && c.dim != 2)
            field_error("problem.diffusion.family", "sigma_sigma_t needs grid.dim = 2");
    if (m > 1 && !p.coupling) field_error("problem.coupling", "systems need a coupling matrix");
    if (p.coupling) {
        if (p.coupling->size() != m)
            field_error("problem.coupling", "expected a " + std::to_string(m) + " x " + std::to_string(m) + " matrix");
        for (const auto& row : *p.coupling)
            if (row.size() != m) field_error("problem.coupling", "rows must have " + std::to_string(m) + " entries");
        if (m < 2) field_error("problem.coupling", "a coupling matrix needs at least 2 components");
        make_coupling(p)->size();
        validate_coupling(*make_coupling(p)).raise_if_failed();
    }

    std::set<std::string> names;
    std::set<std::string> available;
    for (std::size_t i = 0; i < c.pipeline.size(); ++i) {
        const StageConfig& s = c.pipeline[i];
        std::string path = "pipeline[" + std::to_string(i) + "]";
        if (!names.insert(s.name).second) field_error(path + ".name", "duplicate stage name '" + s.name + "'");
        for (std::size_t k = 0; k < s.epsilons.size(); ++k) {
            if (!(s.epsilons[k] > 0.0)) field_error(path + ".epsilons", "values must be positive");
            if (k > 0 && !(s.epsilons[k] < s.epsilons[k - 1]))
                field_error(path + ".epsilons", "values must be sorted descending");
        }
        if ((s.kind == "rate_sweep") && s.epsilons.size() < 4)
            field_error(path + ".epsilons", "a rate sweep needs at least 4 values");
        if (!s.initial.empty() && s.initial.size() != 1 && s.initial.size() != m)
            field_error(path + ".initial", "give one entry or one per component");
        if (s.component && (*s.component < 0 || std::size_t(*s.component) >= m))
            field_error(path + ".component", "out of range");
        if (s.x0 && *s.x0 >= std::size_t(std::pow(c.N, c.dim))) field_error(path + ".x0", "node index out of range");
        if (s.kind == "ergodic" || s.kind == "estimate_sweep") {
            if (!(s.ergodic.window > 0.0) || !(s.ergodic.max_time > s.ergodic.window))
                field_error(path + ".window", "window must be positive and below max_time");
        }
        if (s.kind == "ergodic" || s.kind == "longtime" || s.kind == "estimate_sweep") {
            bool eta_zero = p.eta && *p.eta == 0.0;
            if (eta_zero) field_error("problem.eta", "stage '" + s.name + "' needs eta > 0");
        }
        if (s.kind == "longtime" && s.T < 1.0) field_error(path + ".T", "must be at least 1");
        for (const auto& need : requirements(s))
            if (!available.count(need))
                field_error(path + ".kind", "stage '" + s.name + "' needs an earlier stage producing the " + need);
        std::string made = produces(s);
        if (!made.empty()) available.insert(made);
    }

    // problem hypotheses on the closed-form data (the node correction only changes V on the grid)
    ProblemSpec spec = continuous_problem(c);
    for (int i = 0; i < spec.components(); ++i)
        validate_pair(spec.hamiltonians[std::size_t(i)], spec.diffusion(i), c.dim, 1000).raise_if_failed();
}

ProblemSpec build_problem(const ExperimentConfig& c, const PeriodicGrid& grid) {
    ProblemSpec p = continuous_problem(c);
    if (is_manufactured(c.problem) && c.problem.discrete_manufactured)
        p = manufacture_discrete(p, grid, manufactured_targets(c.problem));
    return p;
}

std::string to_string(StageStatus s) {
    switch (s) {
        case StageStatus::passed: return "passed";
        case StageStatus::failed: return "failed";
        case StageStatus::skipped: return "skipped";
    }
    return "?";
}

bool RunManifest::passed() const {
    return std::all_of(stages.begin(), stages.end(), [](const StageResult& s) { return s.status == StageStatus::passed; });
}

const StageResult& RunManifest::stage(const std::string& name) const {
    for (const auto& s : stages)
        if (s.name == name) return s;
    throw ConfigurationError("no stage named '" + name + "' in this run");
}

std::string config_hash(const ExperimentConfig& c) {
    std::string text = to_json(c).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunManifest run_experiment(const ExperimentConfig& config) {
    validate_config(config);
    PeriodicGrid grid = make_grid(config.dim, config.N);
    RunState st{config, grid, build_problem(config, grid), config.output.directory, {}, {}, {}, {}, {}, {}};
    std::filesystem::create_directories(st.dir);

    RunManifest man;
    man.experiment = config.experiment;
    man.config_hash = config_hash(config);
    man.version = "hjlab 0.1.0";

    for (const auto& s : config.pipeline) {
        StageResult r;
        r.name = s.name;
        r.kind = s.kind;
        for (const auto& need : requirements(s)) {
            auto it = st.artifacts.find(need);
            if (it != st.artifacts.end() && !it->second.second) {
                r.status = StageStatus::skipped;
                r.message = "skipped: dependency '" + it->second.first + "' did not pass";
                break;
            }
        }
        if (r.message.empty()) {
            auto t0 = std::chrono::steady_clock::now();
            try {
                run_stage(st, s, r);
                r.status = StageStatus::passed;
            } catch (const std::exception& e) {
                r.status = StageStatus::failed;
                r.message = e.what();
            }
            r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        std::string made = produces(s);
        if (!made.empty()) st.artifacts[made] = {s.name, r.status == StageStatus::passed};
        man.stages.push_back(std::move(r));
    }

    json summary = {{"experiment", config.experiment}, {"stages", json::array()}};
    for (const auto& r : man.stages) {
        json js = {{"name", r.name}, {"status", to_string(r.status)}, {"metrics", metrics_json(r.metrics)}};
        if (!r.quantities.empty()) {
            json q = json::array();
            for (const auto& rec : r.quantities) {
                json x = {{"quantity", rec.quantity}, {"epsilon", rec.epsilon}, {"value", rec.value}};
                x["bound_constant"] = rec.bound_constant ? json(*rec.bound_constant) : json(nullptr);
                x["slope"] = rec.slope ? json(*rec.slope) : json(nullptr);
                q.push_back(x);
            }
            js["quantities"] = q;
        }
        if (!r.message.empty()) js["message"] = r.message;
        summary["stages"].push_back(js);
    }
    write_json(st.dir / "summary.json", summary);

    if (config.output.plots && !st.plots.empty()) {
        std::ofstream gp(st.dir / "plots.gp");
        gp << "# gnuplot -persist plots.gp\nset key left top\n";
        for (const auto& [file, title] : st.plots) {
            bool sweep = file.find("epsilon") != std::string::npos || title.find("vs epsilon") != std::string::npos;
            gp << (sweep ? "set logscale xy\n" : "unset logscale\n");
            gp << "plot '" << file << "' using 1:2 with linespoints title '" << title << "'\npause -1\n";
        }
    }

    json mj = {{"experiment", man.experiment},
               {"config_hash", man.config_hash},
               {"version", man.version},
               {"catalog",
                {{"hamiltonian", hamiltonian_families}, {"diffusion", diffusion_families}, {"stage", stage_kinds}}},
               {"stages", json::array()}};
    for (const auto& r : man.stages) {
        json js = {{"name", r.name},
                   {"kind", r.kind},
                   {"status", to_string(r.status)},
                   {"wall_time", config.output.timing ? r.wall_time : 0.0},
                   {"outputs", r.outputs}};
        if (!r.message.empty()) js["message"] = r.message;
        mj["stages"].push_back(js);
    }
    mj["outputs"] = {"summary.json", "manifest.json"};
    write_json(st.dir / "manifest.json", mj);
    return man;
}

// ---------------------------------------------------------------------------
// presets

namespace {

TrigPolynomial term(int k1, int k2, double amp, double phase = 0.0) { return TrigPolynomial::cosine({k1, k2}, amp, phase); }

std::vector<double> dyadic(int from, int to) {
    std::vector<double> e;
    for (int k = from; k <= to; ++k) e.push_back(std::ldexp(1.0, -k));
    return e;
}

HamiltonianConfig manufactured_h(TrigPolynomial v) {
    HamiltonianConfig h;
    h.family = "manufactured";
    h.corrector = std::move(v);
    return h;
}

ExperimentConfig scalar_base(const std::string& name) {
    ExperimentConfig c;
    c.experiment = name;
    c.dim = 1;
    c.N = 256;
    c.problem.hamiltonians = {manufactured_h(term(1, 0, 0.2) + term(2, 0, 0.05, 0.3))};
    c.problem.diffusions = {DiffusionConfig{"sin2", 0.5}};
    c.problem.numerics.gradient_bound = 4.0;
    c.output.directory = "out/" + name;
    return c;
}

ExperimentConfig system_base(const std::string& name, int m) {
    ExperimentConfig c = scalar_base(name);
    c.problem.hamiltonians.clear();
    for (int i = 0; i < m; ++i) c.problem.hamiltonians.push_back(manufactured_h(term(1, 0, 0.2, 0.7 * i)));
    std::vector<std::vector<double>> coupling(std::size_t(m), std::vector<double>(std::size_t(m), 0.0));
    CouplingMatrix cm = m == 2 ? CouplingMatrix::two_component(1.0) : CouplingMatrix::chain(m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) coupling[std::size_t(i)][std::size_t(j)] = cm(i, j);
    c.problem.coupling = coupling;
    return c;
}

StageConfig stage(const std::string& kind) {
    StageConfig s;
    s.kind = kind;
    s.name = kind;
    s.tol = default_tol(kind);
    s.adjoint.mass_tolerance = 1e-10;
    s.adjoint.positivity_tolerance = 1e-12;
    return s;
}

InitialConfig sawtooth(double amp) {
    InitialConfig ic;
    ic.kind = "sawtooth";
    ic.amplitude = amp;
    return ic;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"rate-scalar", "rate-system", "energy-audit", "ergodic-sweep", "coupling-audit", "longtime"};
}

ExperimentConfig preset(const std::string& name) {
    if (name == "rate-scalar") {
        ExperimentConfig c = scalar_base(name);
        StageConfig v = stage("validate");
        StageConfig e = stage("estimate_sweep");
        e.epsilons = dyadic(2, 6);
        e.initial = {sawtooth(0.5)};
        e.exponent = 0.25;
        c.pipeline = {v, e};
        return c;
    }
    if (name == "rate-system" || name == "coupling-audit") {
        int m = name == "rate-system" ? 2 : 3;
        ExperimentConfig c = system_base(name, m);
        StageConfig v = stage("validate");
        StageConfig e = stage("estimate_sweep");
        e.epsilons = dyadic(2, 6);
        for (int i = 0; i < m; ++i) e.initial.push_back(sawtooth(0.5 + 0.2 * i));
        e.exponent = 0.5;
        e.closeness = false;
        c.pipeline = {v, e};
        return c;
    }
    if (name == "energy-audit") {
        ExperimentConfig c = scalar_base(name);
        c.problem.epsilon = 0.125;
        c.problem.numerics.solver_tolerance = 1e-12;
        StageConfig f = stage("forward");
        f.T = 1.0;
        f.initial = {sawtooth(0.5)};
        StageConfig r = stage("representation");
        r.refinements = 1;
        c.pipeline = {f, stage("adjoint"), stage("energy"), r};
        return c;
    }
    if (name == "ergodic-sweep") {
        ExperimentConfig c = scalar_base(name);
        StageConfig e = stage("ergodic");
        e.epsilons = dyadic(2, 6);
        e.tol = 1e-12;
        e.known_constant = 0.0;
        c.pipeline = {e};
        return c;
    }
    if (name == "longtime") {
        ExperimentConfig c;
        c.experiment = name;
        c.dim = 1;
        c.N = 512;
        HamiltonianConfig h;
        h.potential = term(1, 0, 1.0);
        c.problem.hamiltonians = {h};
        c.problem.diffusions = {DiffusionConfig{"zero", 0.0}};
        c.problem.eta = 1e-6;
        c.problem.numerics.gradient_bound = 4.0;
        c.output.directory = "out/" + name;
        StageConfig e = stage("ergodic");
        e.epsilons = {1.0};
        e.tol = 1e-10;
        StageConfig l = stage("longtime");
        l.T = 100.0;
        InitialConfig zero;
        zero.kind = "zero";
        l.initial = {zero};
        c.pipeline = {e, l};
        return c;
    }
    throw ConfigurationError("unknown preset '" + name + "' (known: " + join(preset_names()) + ")");
}

}  // namespace hjlab
