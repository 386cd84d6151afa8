#include "rem/model_config.hpp"

#include <fstream>

#include "rem/hash.hpp"
#include "rem/serialize_util.hpp"

namespace rem {

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                    const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok)
            throw std::invalid_argument(std::string("unknown key in ") + where + ": " + it.key());
    }
}

nlohmann::json spec_to_json(const StatisticSpec& sp) {
    nlohmann::json j;
    j["kind"] = stat_kind_name(sp.kind);
    j["scaling"] = sp.scaling == Scaling::standardized ? "standardized" : "raw";
    if (!sp.attr1.empty()) j["attr1"] = sp.attr1;
    if (!sp.attr2.empty()) j["attr2"] = sp.attr2;
    if (sp.kind == StatKind::interaction) j["parents"] = {sp.parent_i, sp.parent_j};
    return j;
}

StatisticSpec spec_from_json(const nlohmann::json& j) {
    reject_unknown(j, {"kind", "scaling", "attr1", "attr2", "parents"}, "statistic entry");
    StatisticSpec sp;
    const std::string kind = j.at("kind").get<std::string>();
    const auto parsed = parse_stat_kind(kind);
    if (!parsed) throw std::invalid_argument("unknown statistic kind: " + kind);
    sp.kind = *parsed;
    if (j.contains("scaling")) {
        const std::string s = j["scaling"].get<std::string>();
        if (s == "standardized")
            sp.scaling = Scaling::standardized;
        else if (s == "raw")
            sp.scaling = Scaling::raw;
        else
            throw std::invalid_argument("unknown scaling: " + s);
    }
    if (j.contains("attr1")) sp.attr1 = j["attr1"].get<std::string>();
    if (j.contains("attr2")) sp.attr2 = j["attr2"].get<std::string>();
    if (j.contains("parents")) {
        const auto& p = j["parents"];
        if (!p.is_array() || p.size() != 2)
            throw std::invalid_argument("interaction parents must be a pair of indices");
        sp.parent_i = p[0].get<int>();
        sp.parent_j = p[1].get<int>();
    }
    return sp;
}

}  // namespace

nlohmann::json ModelConfig::to_json() const {
    nlohmann::json j;
    j["model"] = model_kind_name(model);
    if (n_actors > 0) j["n_actors"] = n_actors;
    j["statistics"] = nlohmann::json::array();
    for (const auto& sp : specs) j["statistics"].push_back(spec_to_json(sp));
    if (!fixed_effects.empty()) j["fixed_effects"] = fixed_effects;
    j["seed"] = seed;
    j["format"] = format == OutputFormat::table ? "table" : "json";

    nlohmann::json fj;
    fj["grad_tol"] = fit.grad_tol;
    fj["max_iterations"] = fit.max_iterations;
    fj["max_halvings"] = fit.max_halvings;
    fj["beta_bound"] = fit.beta_bound;
    fj["ridge"] = fit.ridge;
    fj["include_terminal"] = fit.include_terminal;
    fj["materialize_budget"] = fit.materialize_budget;
    j["fit"] = fj;

    nlohmann::json sj;
    sj["mode"] = pool_mode_name(pool_mode);
    sj["min_batch"] = stream.min_batch;
    sj["carry_history"] = stream.carry_history;
    if (prior) {
        sj["prior"]["mean"] = vec_to_json(prior->mean);
        sj["prior"]["covariance"] = mat_to_json(prior->covariance);
    }
    j["stream"] = sj;

    nlohmann::json mj;
    mj["method"] = ml_method == MlMethod::bayesian ? "bayesian" : "frequentist";
    mj["tol"] = multilevel.tol;
    mj["max_sweeps"] = multilevel.max_sweeps;
    mj["sigma_floor"] = multilevel.sigma_floor;
    mj["marginal_weights"] = multilevel.marginal_weights;
    nlohmann::json gj;
    gj["eta"] = gibbs.eta;
    if (gibbs.d.size() > 0) gj["d"] = vec_to_json(gibbs.d);
    gj["iterations"] = gibbs.iterations;
    gj["burn_in"] = gibbs.burn_in;
    gj["thin"] = gibbs.thin;
    gj["chains"] = gibbs.chains;
    mj["gibbs"] = gj;
    j["multilevel"] = mj;
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    reject_unknown(j,
                   {"model", "n_actors", "statistics", "fixed_effects", "seed", "format", "fit",
                    "stream", "multilevel"},
                   "model config");
    ModelConfig c;
    if (j.contains("model")) {
        const std::string m = j["model"].get<std::string>();
        if (m == "temporal")
            c.model = ModelKind::temporal;
        else if (m == "ordinal")
            c.model = ModelKind::ordinal;
        else
            throw std::invalid_argument("unknown model kind: " + m);
    }
    if (j.contains("n_actors")) {
        c.n_actors = j["n_actors"].get<int>();
        if (c.n_actors < 2) throw std::invalid_argument("n_actors must be at least 2");
    }
    if (!j.contains("statistics") || !j["statistics"].is_array() || j["statistics"].empty())
        throw std::invalid_argument("model config needs a non-empty statistics list");
    for (const auto& sj : j["statistics"]) c.specs.push_back(spec_from_json(sj));
    if (j.contains("fixed_effects"))
        c.fixed_effects = j["fixed_effects"].get<std::vector<std::string>>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("format")) {
        const std::string f = j["format"].get<std::string>();
        if (f == "table")
            c.format = OutputFormat::table;
        else if (f == "json")
            c.format = OutputFormat::json;
        else
            throw std::invalid_argument("unknown format: " + f);
    }
    if (j.contains("fit")) {
        const auto& fj = j["fit"];
        reject_unknown(fj,
                       {"grad_tol", "max_iterations", "max_halvings", "beta_bound", "ridge",
                        "include_terminal", "materialize_budget"},
                       "fit options");
        if (fj.contains("grad_tol")) c.fit.grad_tol = fj["grad_tol"].get<double>();
        if (fj.contains("max_iterations")) c.fit.max_iterations = fj["max_iterations"].get<int>();
        if (fj.contains("max_halvings")) c.fit.max_halvings = fj["max_halvings"].get<int>();
        if (fj.contains("beta_bound")) c.fit.beta_bound = fj["beta_bound"].get<double>();
        if (fj.contains("ridge")) c.fit.ridge = fj["ridge"].get<double>();
        if (fj.contains("include_terminal"))
            c.fit.include_terminal = fj["include_terminal"].get<bool>();
        if (fj.contains("materialize_budget"))
            c.fit.materialize_budget = fj["materialize_budget"].get<std::size_t>();
    }
    if (j.contains("stream")) {
        const auto& sj = j["stream"];
        reject_unknown(sj, {"mode", "min_batch", "carry_history", "prior"}, "stream options");
        if (sj.contains("mode")) c.pool_mode = parse_pool_mode(sj["mode"].get<std::string>());
        if (sj.contains("min_batch")) {
            c.stream.min_batch = sj["min_batch"].get<int>();
            if (c.stream.min_batch < 1) throw std::invalid_argument("min_batch must be at least 1");
        }
        if (sj.contains("carry_history")) c.stream.carry_history = sj["carry_history"].get<bool>();
        if (sj.contains("prior")) {
            reject_unknown(sj["prior"], {"mean", "covariance"}, "prior");
            GaussianPrior pr;
            pr.mean = vec_from_json(sj["prior"].at("mean"));
            pr.covariance = mat_from_json(sj["prior"].at("covariance"));
            pr.validate();
            if (pr.mean.size() != static_cast<Eigen::Index>(c.specs.size()))
                throw std::invalid_argument("prior dimension does not match the statistics");
            c.prior = std::move(pr);
        }
    }
    if (j.contains("multilevel")) {
        const auto& mj = j["multilevel"];
        reject_unknown(mj, {"method", "tol", "max_sweeps", "sigma_floor", "marginal_weights", "gibbs"},
                       "multilevel options");
        if (mj.contains("method")) {
            const std::string m = mj["method"].get<std::string>();
            if (m == "bayesian")
                c.ml_method = MlMethod::bayesian;
            else if (m == "frequentist")
                c.ml_method = MlMethod::frequentist;
            else
                throw std::invalid_argument("unknown multilevel method: " + m);
        }
        if (mj.contains("tol")) c.multilevel.tol = mj["tol"].get<double>();
        if (mj.contains("max_sweeps")) c.multilevel.max_sweeps = mj["max_sweeps"].get<int>();
        if (mj.contains("sigma_floor")) c.multilevel.sigma_floor = mj["sigma_floor"].get<double>();
        if (mj.contains("marginal_weights"))
            c.multilevel.marginal_weights = mj["marginal_weights"].get<bool>();
        if (mj.contains("gibbs")) {
            const auto& gj = mj["gibbs"];
            reject_unknown(gj, {"eta", "d", "iterations", "burn_in", "thin", "chains"},
                           "gibbs options");
            if (gj.contains("eta")) c.gibbs.eta = gj["eta"].get<double>();
            if (gj.contains("d")) c.gibbs.d = vec_from_json(gj["d"]);
            if (gj.contains("iterations")) c.gibbs.iterations = gj["iterations"].get<int>();
            if (gj.contains("burn_in")) c.gibbs.burn_in = gj["burn_in"].get<int>();
            if (gj.contains("thin")) c.gibbs.thin = gj["thin"].get<int>();
            if (gj.contains("chains")) c.gibbs.chains = gj["chains"].get<int>();
            c.gibbs.validate();
        }
    }
    c.gibbs.seed = c.seed;  // one config-level seed drives all sampling
    c.fixed_indices();      // validates the name resolution early
    return c;
}

std::string ModelConfig::config_hash() const {
    return hex64(fnv1a64(to_json().dump()));
}

std::vector<std::string> ModelConfig::effect_names() const {
    std::vector<std::string> names;
    for (const auto& sp : specs) names.push_back(sp.name(specs));
    return names;
}

std::vector<int> ModelConfig::fixed_indices() const {
    const std::vector<std::string> names = effect_names();
    std::vector<int> idx;
    for (const auto& fe : fixed_effects) {
        bool found = false;
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == fe) {
                idx.push_back(static_cast<int>(i));
                found = true;
                break;
            }
        if (!found) throw std::invalid_argument("fixed effect not in the statistics list: " + fe);
    }
    return idx;
}

ModelConfig load_model_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config is not valid JSON: " + std::string(e.what()));
    }
    return ModelConfig::from_json(j);
}

}  // namespace rem
