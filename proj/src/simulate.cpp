#include "rem/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "rem/serialize_util.hpp"

namespace rem {

void SimDesign::validate() const {
    if (n_actors < 2) throw std::invalid_argument("design needs at least 2 actors");
    if (specs.empty()) throw std::invalid_argument("design has no statistics");
    validate_specs(specs, attributes);
    attributes.require_complete(n_actors);
    const int p = static_cast<int>(specs.size());
    if (multilevel()) {
        if (static_cast<int>(events_per_cluster.size()) != n_clusters)
            throw std::invalid_argument("events_per_cluster must list one size per cluster");
        for (int m : events_per_cluster)
            if (m < 1) throw std::invalid_argument("every cluster needs at least 1 event");
        if (mu_true.size() != p) throw std::invalid_argument("mu_true length must match the statistics");
        if (sigma_true.rows() != p || sigma_true.cols() != p)
            throw std::invalid_argument("sigma_true must be P x P");
        if (!sigma_true.isApprox(sigma_true.transpose(), 1e-10))
            throw std::invalid_argument("sigma_true must be symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_true);
        if (es.eigenvalues().minCoeff() < -1e-10)
            throw std::invalid_argument("sigma_true must be positive semidefinite");
    } else {
        if (n_events < 1) throw std::invalid_argument("design needs at least 1 event");
        if (beta_true.size() != p)
            throw std::invalid_argument("beta_true length must match the statistics");
    }
}

EventSequence simulate_sequence(int n_actors, const std::vector<StatisticSpec>& specs,
                                const ActorAttributes& attrs, const Eigen::VectorXd& beta,
                                int n_events, Rng& rng) {
    const RiskSet risk(n_actors);
    HistoryState hist(n_actors);
    EventSequence seq;
    seq.n_actors = n_actors;
    seq.onset = 0.0;
    seq.events.reserve(static_cast<std::size_t>(n_events));
    double t = 0.0;
    for (int m = 0; m < n_events; ++m) {
        const Eigen::MatrixXd x = compute_slice(hist, specs, attrs, risk);
        const Eigen::VectorXd eta = x * beta;
        Eigen::Index worst_row = 0;
        const double mx = eta.maxCoeff(&worst_row);
        if (mx > 700.0) {
            // Name the column contributing most to the blown-up exponent.
            Eigen::Index worst_col = 0;
            (x.row(worst_row).transpose().cwiseProduct(beta)).cwiseAbs().maxCoeff(&worst_col);
            throw NumericalError("rate overflow while simulating event " + std::to_string(m) +
                                 ": statistic '" + specs[static_cast<std::size_t>(worst_col)].name(specs) +
                                 "' drives a log-rate of " + std::to_string(mx));
        }
        const Eigen::VectorXd lam = eta.array().exp();
        const double total = lam.sum();
        t += rng.exponential(total);
        const auto [s, r] = risk.dyad(rng.categorical(lam, total));
        const Event ev{t, s, r};
        seq.events.push_back(ev);
        hist.update(ev);
    }
    seq.end_time = t;  // observation closes with the final event
    require_valid(seq);
    return seq;
}

EventSequence simulate_sequence(const SimDesign& design) {
    design.validate();
    if (design.multilevel())
        throw std::invalid_argument("multilevel designs use simulate_clusters");
    Rng rng(design.seed);
    return simulate_sequence(design.n_actors, design.specs, design.attributes, design.beta_true,
                             design.n_events, rng);
}

ClusterSim simulate_clusters(const SimDesign& design) {
    design.validate();
    if (!design.multilevel())
        throw std::invalid_argument("single-stream designs use simulate_sequence");
    const int k = design.n_clusters;
    const int p = static_cast<int>(design.specs.size());

    Rng master(design.seed);
    ClusterSim out;
    out.beta_true.resize(k, p);
    {
        // All effect draws come from one substream so the per-cluster event
        // streams stay aligned regardless of how many effects are drawn.
        Rng beta_rng = master.child(0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(design.sigma_true);
        const Eigen::MatrixXd sqrt_sigma =
            es.eigenvectors() *
            es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
            es.eigenvectors().transpose();
        for (int i = 0; i < k; ++i) {
            Eigen::VectorXd z(p);
            for (int j = 0; j < p; ++j) z[j] = beta_rng.normal();
            out.beta_true.row(i) = (design.mu_true + sqrt_sigma * z).transpose();
        }
    }
    for (int i = 0; i < k; ++i) {
        Rng rng = master.child(static_cast<std::uint64_t>(i) + 1);
        out.sequences.push_back(simulate_sequence(design.n_actors, design.specs, design.attributes,
                                                  out.beta_true.row(i).transpose(),
                                                  design.events_per_cluster[static_cast<std::size_t>(i)],
                                                  rng));
        char id[8];
        std::snprintf(id, sizeof id, "c%02d", i);
        out.cluster_ids.emplace_back(id);
    }
    return out;
}

namespace {

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
    StatisticSpec sp;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "kind" && it.key() != "scaling" && it.key() != "attr1" &&
            it.key() != "attr2" && it.key() != "parents")
            throw std::invalid_argument("unknown key in statistic entry: " + it.key());
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

nlohmann::json attributes_to_json(const ActorAttributes& attrs) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& name : attrs.names()) {
        const AttributeColumn& col = attrs.column(name);
        if (col.numeric) {
            nlohmann::json arr = nlohmann::json::array();
            for (double v : col.values) arr.push_back(v);
            j["numeric"][name] = arr;
        } else {
            nlohmann::json codes = nlohmann::json::array();
            for (int v : col.codes) codes.push_back(v);
            j["categorical"][name] = {{"codes", codes}, {"levels", col.levels}};
        }
    }
    return j;
}

ActorAttributes attributes_from_json(const nlohmann::json& j) {
    ActorAttributes attrs;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "numeric" && it.key() != "categorical")
            throw std::invalid_argument("unknown key in attributes: " + it.key());
    if (j.contains("numeric"))
        for (auto it = j["numeric"].begin(); it != j["numeric"].end(); ++it)
            attrs.add_numeric(it.key(), it.value().get<std::vector<double>>());
    if (j.contains("categorical"))
        for (auto it = j["categorical"].begin(); it != j["categorical"].end(); ++it)
            attrs.add_categorical(it.key(), it.value().at("codes").get<std::vector<int>>(),
                                  it.value().at("levels").get<std::vector<std::string>>());
    return attrs;
}

}  // namespace

nlohmann::json design_to_json(const SimDesign& design) {
    nlohmann::json j;
    j["n_actors"] = design.n_actors;
    j["seed"] = design.seed;
    j["statistics"] = nlohmann::json::array();
    for (const auto& sp : design.specs) j["statistics"].push_back(spec_to_json(sp));
    if (design.multilevel()) {
        j["n_clusters"] = design.n_clusters;
        j["events_per_cluster"] = design.events_per_cluster;
        j["mu_true"] = vec_to_json(design.mu_true);
        j["sigma_true"] = mat_to_json(design.sigma_true);
    } else {
        j["n_events"] = design.n_events;
        j["beta_true"] = vec_to_json(design.beta_true);
    }
    if (!design.attributes.empty()) j["attributes"] = attributes_to_json(design.attributes);
    if (!design.notes.empty()) j["notes"] = design.notes;
    return j;
}

SimDesign design_from_json(const nlohmann::json& j) {
    static const char* known[] = {"n_actors", "seed",        "statistics",         "n_clusters",
                                  "events_per_cluster", "mu_true", "sigma_true",   "n_events",
                                  "beta_true", "attributes",  "notes"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw std::invalid_argument("unknown key in design: " + it.key());
    }
    SimDesign d;
    d.n_actors = j.at("n_actors").get<int>();
    if (j.contains("seed")) d.seed = j["seed"].get<std::uint64_t>();
    for (const auto& sj : j.at("statistics")) d.specs.push_back(spec_from_json(sj));
    if (j.contains("attributes")) d.attributes = attributes_from_json(j["attributes"]);
    if (j.contains("notes"))
        for (const auto& n : j["notes"]) d.notes.push_back(n.get<std::string>());
    if (j.contains("n_clusters")) {
        d.n_clusters = j["n_clusters"].get<int>();
        d.events_per_cluster = j.at("events_per_cluster").get<std::vector<int>>();
        d.mu_true = vec_from_json(j.at("mu_true"));
        d.sigma_true = mat_from_json(j.at("sigma_true"));
    } else {
        d.n_events = j.at("n_events").get<int>();
        d.beta_true = vec_from_json(j.at("beta_true"));
    }
    d.validate();
    return d;
}

SimDesign load_design_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open design file: " + path);
    nlohmann::json j;
    in >> j;
    return design_from_json(j);
}

nlohmann::json truth_json(const SimDesign& design, const ClusterSim* clusters) {
    nlohmann::json j;
    j["n_actors"] = design.n_actors;
    j["seed"] = design.seed;
    nlohmann::json names = nlohmann::json::array();
    for (const auto& sp : design.specs) names.push_back(sp.name(design.specs));
    j["effects"] = names;
    if (design.multilevel()) {
        j["mu_true"] = vec_to_json(design.mu_true);
        j["sigma_true"] = mat_to_json(design.sigma_true);
        j["events_per_cluster"] = design.events_per_cluster;
        if (clusters) {
            j["cluster_ids"] = clusters->cluster_ids;
            j["beta_true"] = mat_to_json(clusters->beta_true);
        }
    } else {
        j["beta_true"] = vec_to_json(design.beta_true);
        j["n_events"] = design.n_events;
    }
    if (!design.notes.empty()) j["notes"] = design.notes;
    return j;
}

SimDesign stream_reproduction_design(std::uint64_t seed) {
    SimDesign d;
    d.n_actors = 25;
    d.n_events = 5000;
    d.seed = seed;
    auto stat = [&](StatKind k) {
        StatisticSpec sp;
        sp.kind = k;
        sp.scaling = k == StatKind::intercept ? Scaling::raw : Scaling::standardized;
        d.specs.push_back(sp);
        return static_cast<int>(d.specs.size()) - 1;
    };
    auto inter = [&](int i, int j) {
        StatisticSpec sp;
        sp.kind = StatKind::interaction;
        sp.parent_i = i;
        sp.parent_j = j;
        d.specs.push_back(sp);
    };
    stat(StatKind::intercept);
    const int inertia = stat(StatKind::inertia);
    const int recip = stat(StatKind::reciprocity);
    const int ind_rec = stat(StatKind::indegree_receiver);
    const int ind_snd = stat(StatKind::indegree_sender);
    const int out_rec = stat(StatKind::outdegree_receiver);
    const int out_snd = stat(StatKind::outdegree_sender);
    const int otp = stat(StatKind::otp);
    const int itp = stat(StatKind::itp);
    stat(StatKind::osp);
    stat(StatKind::isp);
    inter(inertia, recip);
    inter(ind_rec, ind_snd);
    inter(out_rec, out_snd);
    inter(otp, itp);
    d.beta_true.resize(15);
    d.beta_true << -5.0,            // intercept
        0.01, 0.01,                 // inertia, reciprocity
        -0.02, -0.02,               // in-degree receiver, in-degree sender
        -0.02, -0.01,               // out-degree receiver, out-degree sender
        0.02, -0.02,                // outgoing / incoming two-paths
        0.01, -0.01,                // outgoing / incoming shared partners
        -0.01, -0.05, -0.02, -0.01; // the four interactions
    d.notes = {
        "network statistics standardized within each event across the risk set",
        "the printed effect list labels both degree-of-sender values 'indSnd'; "
        "out-degree sender takes -0.01 here"};
    return d;
}

SimDesign multilevel_reproduction_design(std::uint64_t seed) {
    SimDesign d;
    d.n_actors = 10;
    d.seed = seed;
    d.n_clusters = 30;
    d.events_per_cluster.assign(30, 0);
    for (int i = 0; i < 30; ++i)
        d.events_per_cluster[static_cast<std::size_t>(i)] = i < 10 ? 50 : (i < 20 ? 500 : 2000);
    auto stat = [&](StatKind k) {
        StatisticSpec sp;
        sp.kind = k;
        sp.scaling =
            (k == StatKind::intercept || k == StatKind::ps_AB_XA || k == StatKind::ps_AB_XB)
                ? Scaling::raw
                : Scaling::standardized;
        d.specs.push_back(sp);
    };
    stat(StatKind::intercept);
    stat(StatKind::inertia);
    stat(StatKind::reciprocity);
    stat(StatKind::otp);
    stat(StatKind::itp);
    stat(StatKind::ps_AB_XA);
    stat(StatKind::ps_AB_XB);
    d.mu_true.resize(7);
    d.mu_true << -4.0, 0.2, 0.15, 0.1, -0.1, 0.3, 0.2;
    // Heterogeneity SDs of 0.15-0.3: large enough that the between-cluster
    // spread stays identifiable above the sampling noise of the small
    // (50-event) cluster fits.
    d.sigma_true = Eigen::MatrixXd::Zero(7, 7);
    d.sigma_true.diagonal() << 0.09, 0.04, 0.04, 0.0225, 0.0225, 0.04, 0.04;
    d.notes = {"cluster sizes: 10 x 50, 10 x 500, 10 x 2000",
               "count statistics standardized within each event; turn-taking indicators raw"};
    return d;
}

}  // namespace rem
