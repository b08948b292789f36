#include "almostsure/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "almostsure/errors.hpp"
#include "almostsure/markov_core.hpp"
#include "almostsure/sa_core.hpp"
#include "almostsure/trajectory.hpp"

namespace almostsure::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Eigen::Index idx(std::size_t i) {
    return static_cast<Eigen::Index>(i);
}

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ParseError(path + ": " + message);
}

std::string child(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

std::string item(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) {
        fail(path.empty() ? "config" : path, "expected an object");
    }
    for (const auto& [key, value] : obj.items()) {
        if (allowed.count(key) == 0) {
            fail(child(path, key), "unknown key");
        }
    }
}

double get_double(const json& j, const std::string& path) {
    if (!j.is_number()) {
        fail(path, "expected a number");
    }
    return j.get<double>();
}

std::size_t get_size(const json& j, const std::string& path) {
    if (j.is_number_unsigned()) {
        return j.get<std::size_t>();
    }
    if (j.is_number_integer()) {
        const auto v = j.get<std::int64_t>();
        if (v < 0) {
            fail(path, "expected a nonnegative integer");
        }
        return static_cast<std::size_t>(v);
    }
    if (j.is_number_float()) {
        const double v = j.get<double>();
        if (v >= 0.0 && v == std::floor(v) && v < 1.8e19) {
            return static_cast<std::size_t>(v);
        }
    }
    fail(path, "expected a nonnegative integer");
}

std::uint64_t get_seed(const json& j, const std::string& path) {
    if (j.is_string()) {
        try {
            return trajectory::parse_seed(j.get<std::string>());
        } catch (const std::exception& e) {
            fail(path, e.what());
        }
    }
    return get_size(j, path);
}

bool get_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) {
        fail(path, "expected true or false");
    }
    return j.get<bool>();
}

std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) {
        fail(path, "expected a string");
    }
    return j.get<std::string>();
}

Vector get_vector(const json& j, const std::string& path) {
    if (!j.is_array()) {
        fail(path, "expected an array of numbers");
    }
    Vector v(idx(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(idx(i)) = get_double(j[i], item(path, i));
    }
    return v;
}

Matrix get_matrix(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) {
        fail(path, "expected a nonempty array of rows");
    }
    std::size_t cols = 0;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array()) {
            fail(item(path, i), "expected a row array");
        }
        if (i == 0) {
            cols = j[i].size();
        } else if (j[i].size() != cols) {
            fail(item(path, i), "expected " + std::to_string(cols) + " entries, found " + std::to_string(j[i].size()));
        }
    }
    Matrix m(idx(j.size()), idx(cols));
    for (std::size_t i = 0; i < j.size(); ++i) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(idx(i), idx(c)) = get_double(j[i][c], item(item(path, i), c));
        }
    }
    return m;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v(i));
    }
    return out;
}

json matrix_json(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out.push_back(vector_json(m.row(i).transpose()));
    }
    return out;
}

bool same(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

template <typename T>
bool same_opt(const std::optional<T>& a, const std::optional<T>& b) {
    if (a.has_value() != b.has_value()) {
        return false;
    }
    return !a || same(*a, *b);
}

fs::path resolve(const std::string& base_dir, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : fs::path(base_dir) / path;
}

std::variant<GeneratedMdp, ExplicitMdp> parse_mdp(const json& j, const std::string& path,
                                                 const std::string& base_dir) {
    if (j.is_object() && j.contains("generator")) {
        check_keys(j, path, {"generator"});
        const std::string gpath = child(path, "generator");
        const json& g = j["generator"];
        check_keys(g, gpath, {"states", "actions", "gamma", "seed"});
        GeneratedMdp out;
        for (const char* key : {"states", "gamma", "seed"}) {
            if (!g.contains(key)) {
                fail(child(gpath, key), "required");
            }
        }
        out.states = get_size(g["states"], child(gpath, "states"));
        if (g.contains("actions")) {
            out.actions = get_size(g["actions"], child(gpath, "actions"));
        }
        out.gamma = get_double(g["gamma"], child(gpath, "gamma"));
        out.seed = get_seed(g["seed"], child(gpath, "seed"));
        if (out.states == 0 || out.actions == 0) {
            fail(gpath, "states and actions must be positive");
        }
        return out;
    }
    check_keys(j, path, {"gamma", "reward", "transition", "transition_file", "init"});
    ExplicitMdp out;
    if (!j.contains("gamma")) {
        fail(child(path, "gamma"), "required");
    }
    if (!j.contains("reward")) {
        fail(child(path, "reward"), "required");
    }
    out.gamma = get_double(j["gamma"], child(path, "gamma"));
    out.reward = get_matrix(j["reward"], child(path, "reward"));
    if (j.contains("transition") == j.contains("transition_file")) {
        fail(child(path, "transition"), "give exactly one of transition or transition_file");
    }
    if (j.contains("transition")) {
        out.transition = get_matrix(j["transition"], child(path, "transition"));
    } else {
        const std::string tpath = child(path, "transition_file");
        const fs::path file = resolve(base_dir, get_string(j["transition_file"], tpath));
        if (!fs::exists(file)) {
            fail(tpath, "file not found: " + file.string());
        }
        try {
            out.transition = markov::read_matrix_file(file.string());
        } catch (const Error& e) {
            fail(tpath, e.what());
        }
    }
    if (j.contains("init")) {
        out.init = get_vector(j["init"], child(path, "init"));
    }
    return out;
}

FeatureSpec parse_features(const json& j, const std::string& path, const std::string& base_dir) {
    FeatureSpec out;
    if (j.is_string()) {
        if (j.get<std::string>() != "tabular") {
            fail(path, "expected \"tabular\", a matrix, {\"file\": ...} or {\"generator\": ...}");
        }
        out.kind = FeatureSpec::Kind::Tabular;
        return out;
    }
    if (j.is_array()) {
        out.kind = FeatureSpec::Kind::Explicit;
        out.matrix = get_matrix(j, path);
        return out;
    }
    check_keys(j, path, {"file", "generator"});
    if (j.contains("file") == j.contains("generator")) {
        fail(path, "give exactly one of file or generator");
    }
    if (j.contains("file")) {
        out.kind = FeatureSpec::Kind::File;
        out.path = get_string(j["file"], child(path, "file"));
        if (!fs::exists(resolve(base_dir, out.path))) {
            fail(child(path, "file"), "file not found: " + resolve(base_dir, out.path).string());
        }
        return out;
    }
    const std::string gpath = child(path, "generator");
    const json& g = j["generator"];
    check_keys(g, gpath, {"dim", "seed", "scale"});
    if (!g.contains("dim") || !g.contains("seed")) {
        fail(gpath, "dim and seed are required");
    }
    out.kind = FeatureSpec::Kind::Generated;
    out.dim = get_size(g["dim"], child(gpath, "dim"));
    out.seed = get_seed(g["seed"], child(gpath, "seed"));
    if (g.contains("scale")) {
        out.scale = get_double(g["scale"], child(gpath, "scale"));
    }
    return out;
}

std::vector<std::uint64_t> parse_seeds(const json& j, const std::string& path) {
    std::vector<std::uint64_t> out;
    if (j.is_object()) {
        check_keys(j, path, {"count", "first"});
        if (!j.contains("count")) {
            fail(child(path, "count"), "required");
        }
        const std::size_t count = get_size(j["count"], child(path, "count"));
        const std::uint64_t first = j.contains("first") ? get_seed(j["first"], child(path, "first")) : 1;
        for (std::size_t i = 0; i < count; ++i) {
            out.push_back(first + i);
        }
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) {
            out.push_back(get_seed(j[i], item(path, i)));
        }
    } else {
        fail(path, "expected an array of seeds or {\"count\": N, \"first\": K}");
    }
    if (out.size() < 2) {
        fail(path, "at least 2 seeds are required");
    }
    return out;
}

harness::Thresholds parse_thresholds(const json& j, const std::string& path) {
    check_keys(j, path, {"final_error_max", "relative", "decay_factor_min"});
    harness::Thresholds t;
    if (j.contains("final_error_max")) {
        t.final_error_max = get_double(j["final_error_max"], child(path, "final_error_max"));
    }
    if (j.contains("relative")) {
        t.relative_to_initial = get_bool(j["relative"], child(path, "relative"));
    }
    if (j.contains("decay_factor_min")) {
        t.decay_factor_min = get_double(j["decay_factor_min"], child(path, "decay_factor_min"));
    }
    if (!(t.final_error_max >= 0.0)) {
        fail(child(path, "final_error_max"), "must be nonnegative");
    }
    if (!(t.decay_factor_min > 0.0)) {
        fail(child(path, "decay_factor_min"), "must be positive");
    }
    return t;
}

Tolerances parse_tolerances(const json& j, const std::string& path) {
    check_keys(j, path,
               {"lyapunov_samples", "anchors", "max_dense_steps", "mc_samples", "mc_anchors", "mds_analytic_tol",
                "mds_z_max", "assumption_seed"});
    Tolerances t;
    auto size_field = [&](const char* key, std::size_t& dst) {
        if (j.contains(key)) {
            dst = get_size(j[key], child(path, key));
        }
    };
    auto double_field = [&](const char* key, double& dst) {
        if (j.contains(key)) {
            dst = get_double(j[key], child(path, key));
        }
    };
    size_field("lyapunov_samples", t.lyapunov_samples);
    size_field("anchors", t.anchors);
    size_field("max_dense_steps", t.max_dense_steps);
    size_field("mc_samples", t.mc_samples);
    size_field("mc_anchors", t.mc_anchors);
    double_field("mds_analytic_tol", t.mds_analytic_tol);
    double_field("mds_z_max", t.mds_z_max);
    if (j.contains("assumption_seed")) {
        t.assumption_seed = get_seed(j["assumption_seed"], child(path, "assumption_seed"));
    }
    return t;
}

void write_or_print(const fs::path& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    if (out_path.has_parent_path()) {
        fs::create_directories(out_path.parent_path());
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        throw InvalidArgument("cannot write " + out_path.string());
    }
    out << text;
}

}  // namespace

bool operator==(const CliConfig& a, const CliConfig& b) {
    if (a.mdp.index() != b.mdp.index()) {
        return false;
    }
    if (const auto* ga = std::get_if<GeneratedMdp>(&a.mdp)) {
        const auto& gb = std::get<GeneratedMdp>(b.mdp);
        if (ga->states != gb.states || ga->actions != gb.actions || ga->gamma != gb.gamma || ga->seed != gb.seed) {
            return false;
        }
    } else {
        const auto& ea = std::get<ExplicitMdp>(a.mdp);
        const auto& eb = std::get<ExplicitMdp>(b.mdp);
        if (!same(ea.reward, eb.reward) || !same(ea.transition, eb.transition) || ea.gamma != eb.gamma ||
            !same_opt(ea.init, eb.init)) {
            return false;
        }
    }
    if (a.features.has_value() != b.features.has_value()) {
        return false;
    }
    if (a.features) {
        const auto& fa = *a.features;
        const auto& fb = *b.features;
        if (fa.kind != fb.kind || !same(fa.matrix, fb.matrix) || fa.path != fb.path || fa.dim != fb.dim ||
            fa.seed != fb.seed || fa.scale != fb.scale) {
            return false;
        }
    }
    const auto& ta = a.tolerances;
    const auto& tb = b.tolerances;
    const bool tol_equal = ta.lyapunov_samples == tb.lyapunov_samples && ta.anchors == tb.anchors &&
                           ta.max_dense_steps == tb.max_dense_steps && ta.mc_samples == tb.mc_samples &&
                           ta.mc_anchors == tb.mc_anchors && ta.mds_analytic_tol == tb.mds_analytic_tol &&
                           ta.mds_z_max == tb.mds_z_max && ta.assumption_seed == tb.assumption_seed;
    return tol_equal && a.id == b.id && a.experiment == b.experiment && same_opt(a.policy, b.policy) &&
           a.validate_features == b.validate_features && a.schedule == b.schedule && a.seeds == b.seeds &&
           a.horizon == b.horizon && a.checkpoints == b.checkpoints && a.thresholds == b.thresholds &&
           same_opt(a.w0, b.w0) && same_opt(a.q0, b.q0) && same_opt(a.initial_states, b.initial_states) &&
           a.base_dir == b.base_dir;
}

CliConfig parse_config(const json& doc, const fs::path& base_dir) {
    check_keys(doc, "",
               {"id", "experiment", "mdp", "policy", "features", "validate_features", "schedule", "seeds", "horizon",
                "checkpoints", "thresholds", "w0", "q0", "initial_states", "tolerances"});
    CliConfig c;
    c.base_dir = base_dir.string();
    for (const char* key : {"experiment", "mdp", "seeds", "horizon"}) {
        if (!doc.contains(key)) {
            fail(key, "required");
        }
    }
    try {
        c.experiment = harness::parse_experiment(get_string(doc["experiment"], "experiment"));
    } catch (const ParseError& e) {
        if (std::string(e.what()).rfind("experiment:", 0) == 0) {
            throw;
        }
        fail("experiment", e.what());
    }
    c.id = doc.contains("id") ? get_string(doc["id"], "id") : harness::to_string(c.experiment);
    c.mdp = parse_mdp(doc["mdp"], "mdp", c.base_dir);
    if (doc.contains("policy")) {
        const json& p = doc["policy"];
        if (p.is_string()) {
            if (p.get<std::string>() != "uniform") {
                fail("policy", "expected \"uniform\" or a matrix");
            }
        } else {
            c.policy = get_matrix(p, "policy");
        }
    }
    const bool q = harness::is_q_learning(c.experiment);
    if (doc.contains("features")) {
        if (q) {
            fail("features", "not used by Q-learning experiments");
        }
        c.features = parse_features(doc["features"], "features", c.base_dir);
    } else if (!q) {
        fail("features", "required for TD experiments");
    }
    if (doc.contains("validate_features")) {
        c.validate_features = get_bool(doc["validate_features"], "validate_features");
    }
    if (doc.contains("schedule")) {
        c.schedule = get_string(doc["schedule"], "schedule");
    }
    try {
        c.schedule = algorithms::StepSchedule::parse(c.schedule).to_string();
    } catch (const Error& e) {
        fail("schedule", e.what());
    }
    c.seeds = parse_seeds(doc["seeds"], "seeds");
    c.horizon = get_size(doc["horizon"], "horizon");
    if (doc.contains("checkpoints")) {
        const json& cp = doc["checkpoints"];
        if (cp.is_string()) {
            if (cp.get<std::string>() != "geometric") {
                fail("checkpoints", "expected \"geometric\" or an array of steps");
            }
        } else {
            if (!cp.is_array()) {
                fail("checkpoints", "expected \"geometric\" or an array of steps");
            }
            for (std::size_t i = 0; i < cp.size(); ++i) {
                const std::size_t step = get_size(cp[i], item("checkpoints", i));
                if (step > c.horizon) {
                    fail(item("checkpoints", i), "beyond the horizon " + std::to_string(c.horizon));
                }
                if (!c.checkpoints.empty() && step <= c.checkpoints.back()) {
                    fail(item("checkpoints", i), "checkpoints must be strictly increasing");
                }
                c.checkpoints.push_back(step);
            }
        }
    }
    if (doc.contains("thresholds")) {
        c.thresholds = parse_thresholds(doc["thresholds"], "thresholds");
    }
    if (doc.contains("w0")) {
        if (q) {
            fail("w0", "not used by Q-learning experiments; use q0");
        }
        c.w0 = get_vector(doc["w0"], "w0");
    }
    if (doc.contains("q0")) {
        if (!q) {
            fail("q0", "not used by TD experiments; use w0");
        }
        c.q0 = get_matrix(doc["q0"], "q0");
    }
    if (doc.contains("initial_states")) {
        c.initial_states = get_vector(doc["initial_states"], "initial_states");
    }
    if (doc.contains("tolerances")) {
        c.tolerances = parse_tolerances(doc["tolerances"], "tolerances");
    }
    return c;
}

CliConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(path.string() + ": cannot open config file");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return parse_config(doc, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

json to_json(const CliConfig& c) {
    json doc;
    doc["id"] = c.id;
    doc["experiment"] = harness::to_string(c.experiment);
    if (const auto* g = std::get_if<GeneratedMdp>(&c.mdp)) {
        doc["mdp"] = {{"generator", {{"states", g->states}, {"actions", g->actions}, {"gamma", g->gamma}, {"seed", g->seed}}}};
    } else {
        const auto& e = std::get<ExplicitMdp>(c.mdp);
        json m{{"gamma", e.gamma}, {"reward", matrix_json(e.reward)}, {"transition", matrix_json(e.transition)}};
        if (e.init) {
            m["init"] = vector_json(*e.init);
        }
        doc["mdp"] = m;
    }
    doc["policy"] = c.policy ? matrix_json(*c.policy) : json("uniform");
    if (c.features) {
        const auto& f = *c.features;
        switch (f.kind) {
            case FeatureSpec::Kind::Tabular:
                doc["features"] = "tabular";
                break;
            case FeatureSpec::Kind::Explicit:
                doc["features"] = matrix_json(f.matrix);
                break;
            case FeatureSpec::Kind::File:
                doc["features"] = {{"file", f.path}};
                break;
            case FeatureSpec::Kind::Generated:
                doc["features"] = {{"generator", {{"dim", f.dim}, {"seed", f.seed}, {"scale", f.scale}}}};
                break;
        }
    }
    doc["validate_features"] = c.validate_features;
    doc["schedule"] = c.schedule;
    doc["seeds"] = c.seeds;
    doc["horizon"] = c.horizon;
    doc["checkpoints"] = c.checkpoints.empty() ? json("geometric") : json(c.checkpoints);
    doc["thresholds"] = {{"final_error_max", c.thresholds.final_error_max},
                         {"relative", c.thresholds.relative_to_initial},
                         {"decay_factor_min", c.thresholds.decay_factor_min}};
    if (c.w0) {
        doc["w0"] = vector_json(*c.w0);
    }
    if (c.q0) {
        doc["q0"] = matrix_json(*c.q0);
    }
    if (c.initial_states) {
        doc["initial_states"] = vector_json(*c.initial_states);
    }
    const auto& t = c.tolerances;
    doc["tolerances"] = {{"lyapunov_samples", t.lyapunov_samples}, {"anchors", t.anchors},
                         {"max_dense_steps", t.max_dense_steps},   {"mc_samples", t.mc_samples},
                         {"mc_anchors", t.mc_anchors},             {"mds_analytic_tol", t.mds_analytic_tol},
                         {"mds_z_max", t.mds_z_max},               {"assumption_seed", t.assumption_seed}};
    return doc;
}

harness::ExperimentConfig build_experiment(const CliConfig& c, std::size_t jobs) {
    mdp::MdpSpec model = [&] {
        if (const auto* g = std::get_if<GeneratedMdp>(&c.mdp)) {
            return harness::random_mdp(g->states, g->actions, g->gamma, g->seed);
        }
        const auto& e = std::get<ExplicitMdp>(c.mdp);
        const auto n = static_cast<std::size_t>(e.reward.rows());
        return mdp::MdpSpec::create(e.reward, e.transition, e.gamma,
                                    e.init ? *e.init : Vector::Constant(idx(n), 1.0 / static_cast<double>(n)));
    }();
    const std::size_t n = model.num_states();
    const std::size_t na = model.num_actions();
    mdp::Policy policy = c.policy ? mdp::Policy::create(*c.policy) : mdp::Policy::uniform(n, na);
    const auto schedule = algorithms::StepSchedule::parse(c.schedule);

    harness::ExperimentConfig out;
    out.experiment_id = c.id;
    out.experiment = c.experiment;
    out.seeds = c.seeds;
    out.horizon = c.horizon;
    out.checkpoints = c.checkpoints;
    out.thresholds = c.thresholds;
    out.jobs = jobs;
    if (c.initial_states) {
        out.initial_states = markov::StochasticVec::from(*c.initial_states);
    }

    if (harness::is_q_learning(c.experiment)) {
        Matrix q0 = c.q0 ? *c.q0 : Matrix::Zero(idx(n), idx(na));
        out.problem = algorithms::QLearningSpec::create(std::move(model), std::move(policy), schedule,
                                                        std::move(q0), false);
        return out;
    }

    auto chain = mdp::induce_chain(model, policy);
    const FeatureSpec& f = *c.features;
    mdp::FeatureMap features = [&] {
        switch (f.kind) {
            case FeatureSpec::Kind::Tabular:
                return mdp::FeatureMap::tabular(n);
            case FeatureSpec::Kind::Explicit:
                return mdp::FeatureMap::create(f.matrix, c.validate_features);
            case FeatureSpec::Kind::File:
                return mdp::FeatureMap::create(markov::read_matrix_file(resolve(c.base_dir, f.path).string()),
                                               c.validate_features);
            case FeatureSpec::Kind::Generated:
                return harness::random_features(n, f.dim, f.seed, f.scale);
        }
        throw InvalidArgument("unknown feature kind");
    }();
    Vector w0 = c.w0 ? *c.w0 : Vector::Zero(idx(features.feature_dim()));
    mdp::TdOptions options;
    options.require_negative_definite = c.validate_features;
    out.problem = algorithms::LinearTdSpec::create(std::move(chain), std::move(features), model.discount(), schedule,
                                                   std::move(w0), options);
    return out;
}

int cmd_analyze_chain(const fs::path& matrix_path, const fs::path& out_path, const Flags& flags, std::ostream& err) {
    try {
        const auto p = markov::validate_stochastic(markov::read_matrix_file(matrix_path.string()));
        const double tol = flags.tol.value_or(1e-13);
        std::ostringstream out;
        out << std::setprecision(17);
        out << "states = " << p.size() << '\n';
        const bool irreducible = markov::is_irreducible(p);
        out << "irreducible = " << (irreducible ? "true" : "false") << '\n';
        out << "aperiodic = " << (markov::is_aperiodic(p) ? "true" : "false") << '\n';
        if (irreducible) {
            out << "period = " << markov::period(p, 0) << '\n';
        }
        const auto cert = markov::doeblin_certificate(p);
        if (cert) {
            out << "doeblin = Present\n";
            markov::write_certificate(out, *cert);
            out << "contraction_factor = " << markov::contraction_factor(*cert) << '\n';
        } else {
            out << "doeblin = Absent\n";
        }
        if (irreducible) {
            const Vector mu = cert ? markov::stationary_distribution(p, tol).probs() : markov::stationary_by_linear_solve(p);
            const Vector residual = (mu.transpose() * p.rows()).transpose() - mu;
            out << "stationary =";
            for (Eigen::Index i = 0; i < mu.size(); ++i) {
                out << ' ' << mu(i);
            }
            out << '\n' << "stationary_residual = " << residual.lpNorm<1>() << '\n';
        } else {
            out << "stationary = not unique\n";
        }
        if (cert) {
            const auto mix = markov::mixing_certificate(p, 100);
            out << "mixing_prefactor_C = " << mix.prefactor_C << '\n';
            out << "mixing_rate_rho = " << mix.rate_rho << '\n';
            out << "mixing_horizon_checked = " << mix.horizon_checked << '\n';
            out << "mixing_worst_margin = " << mix.worst_margin << '\n';
        }
        write_or_print(out_path, out.str());
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

int cmd_run(const fs::path& config_path, const fs::path& out_dir, const Flags& flags, std::ostream& err) {
    try {
        auto config = load_config(config_path);
        if (flags.seed) {
            for (std::size_t i = 0; i < config.seeds.size(); ++i) {
                config.seeds[i] = *flags.seed + i;
            }
        }
        const auto experiment = build_experiment(config, flags.jobs);
        const auto report = harness::run_experiment(experiment);
        fs::create_directories(out_dir);
        {
            std::ofstream trace(out_dir / "trace.csv", std::ios::binary);
            harness::write_trace_csv(trace, report);
        }
        {
            std::ofstream summary(out_dir / "report.txt", std::ios::binary);
            harness::write_report_txt(summary, report);
        }
        return harness::exit_status(report.verdict.verdict);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

int cmd_check_assumptions(const fs::path& config_path, const fs::path& out_path, const Flags& flags,
                          std::ostream& err) {
    try {
        const auto config = load_config(config_path);
        const auto experiment = build_experiment(config, flags.jobs);
        harness::AssumptionOptions options;
        const auto& t = config.tolerances;
        options.seed = flags.seed.value_or(t.assumption_seed);
        options.anchors = t.anchors;
        options.max_dense_steps = t.max_dense_steps;
        options.lyapunov_samples = t.lyapunov_samples;
        options.mc_samples = t.mc_samples;
        options.mc_anchors = t.mc_anchors;
        options.mds_analytic_tol = flags.tol.value_or(t.mds_analytic_tol);
        options.mds_z_max = t.mds_z_max;
        const auto report = harness::check_assumptions(experiment, options);
        std::ostringstream out;
        sa::write_report(out, report);
        write_or_print(out_path, out.str());
        return report.passed() ? 0 : 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

int cmd_rs_demo(double z0, double C, std::size_t steps, std::ostream& out) {
    const auto envelope = sa::robbins_siegmund_envelope(z0, algorithms::StepSchedule::inv_poly(1.0, 2), C, steps);
    out << "n,z\n" << std::setprecision(17);
    for (std::size_t n = 0; n < envelope.trace.size(); ++n) {
        out << n << ',' << envelope.trace[n] << '\n';
    }
    return 0;
}

int run_main(int argc, char** argv) {
    CLI::App app{"almostsure: Markov chain certificates and stochastic-approximation experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    Flags flags;
    std::string seed_text;
    app.add_option("--jobs", flags.jobs, "Worker threads for per-seed runs (0 = all cores)");
    app.add_option("--seed", seed_text, "Seed override (decimal or 0x hex)");
    app.add_option("--tol", flags.tol, "Tolerance override");

    std::string matrix_path;
    std::string out_path;
    std::string config_path;
    double z0 = 1.0;
    double rs_c = 1.0;
    std::size_t steps = 100;

    auto* analyze = app.add_subcommand("analyze-chain", "Certify a transition matrix file");
    analyze->add_option("matrix", matrix_path, "Whitespace matrix file")->required();
    analyze->add_option("--out", out_path, "Report path (stdout when omitted)");

    auto* run = app.add_subcommand("run", "Run a convergence experiment");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    std::string run_dir = "out";
    run->add_option("--out", run_dir, "Output directory")->capture_default_str();

    auto* check = app.add_subcommand("check-assumptions", "Check drift, noise and recursion assumptions");
    check->add_option("--config", config_path, "Experiment config (JSON)")->required();
    check->add_option("--out", out_path, "Report path (stdout when omitted)");

    auto* demo = app.add_subcommand("rs-demo", "Print the Robbins-Siegmund envelope with T_n = 1/(n+2)");
    demo->add_option("--z0", z0, "Initial value")->default_val(1.0);
    demo->add_option("--c", rs_c, "Noise constant C")->default_val(1.0);
    demo->add_option("--steps", steps, "Number of steps")->default_val(100);
    demo->add_option("--out", out_path, "CSV path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    if (!seed_text.empty()) {
        try {
            flags.seed = trajectory::parse_seed(seed_text);
        } catch (const std::exception& e) {
            std::cerr << "error: --seed: " << e.what() << '\n';
            return 1;
        }
    }

    if (analyze->parsed()) {
        return cmd_analyze_chain(matrix_path, out_path, flags, std::cerr);
    }
    if (run->parsed()) {
        const int code = cmd_run(config_path, run_dir, flags, std::cerr);
        if (code != 1) {
            std::cout << "wrote " << (fs::path(run_dir) / "trace.csv").string() << " and report.txt (exit " << code
                      << ")\n";
        }
        return code;
    }
    if (check->parsed()) {
        return cmd_check_assumptions(config_path, out_path, flags, std::cerr);
    }
    try {
        std::ostringstream out;
        cmd_rs_demo(z0, rs_c, steps, out);
        write_or_print(out_path, out.str());
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace almostsure::cli
