#include "rem/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "rem/baseline.hpp"
#include "rem/csv.hpp"
#include "rem/estimate.hpp"
#include "rem/hash.hpp"
#include "rem/model_config.hpp"
#include "rem/multilevel.hpp"
#include "rem/serialize_util.hpp"
#include "rem/simulate.hpp"
#include "rem/stream.hpp"

namespace rem {

namespace {

namespace fs = std::filesystem;

constexpr double kZ975 = 1.959963984540054;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> format;
};

OutputFormat resolve_format(const ModelConfig& cfg, const Overrides& ov) {
    if (!ov.format) return cfg.format;
    if (*ov.format == "table") return OutputFormat::table;
    if (*ov.format == "json") return OutputFormat::json;
    throw std::invalid_argument("unknown format: " + *ov.format);
}

nlohmann::json meta_json(const std::string& config_hash) {
    nlohmann::json j;
    j["version"] = kToolVersion;
    j["config_hash"] = config_hash;
    return j;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::invalid_argument("cannot write file: " + path);
    f << text;
    if (!f.good()) throw std::invalid_argument("failed while writing file: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string sanitize_filename(const std::string& name) {
    std::string out;
    for (char c : name)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

// Table-1 layout: point estimate, 95% interval bounds, interval width.
std::string estimates_table(const std::vector<std::string>& names, const Eigen::VectorXd& est,
                            const Eigen::VectorXd& se) {
    std::string out =
        "effect                          estimate        2.5%       97.5%       width\n";
    char line[160];
    for (Eigen::Index i = 0; i < est.size(); ++i) {
        const double lo = est[i] - kZ975 * se[i];
        const double hi = est[i] + kZ975 * se[i];
        std::snprintf(line, sizeof line, "%-28s %11.4f %11.4f %11.4f %11.4f\n",
                      names[static_cast<std::size_t>(i)].c_str(), est[i], lo, hi, hi - lo);
        out += line;
    }
    return out;
}

nlohmann::json estimates_json(const std::vector<std::string>& names, const Eigen::VectorXd& est,
                              const Eigen::VectorXd& se) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < est.size(); ++i) {
        nlohmann::json row;
        row["effect"] = names[static_cast<std::size_t>(i)];
        row["estimate"] = est[i];
        row["se"] = se[i];
        row["ci95"] = {est[i] - kZ975 * se[i], est[i] + kZ975 * se[i]};
        row["width"] = 2.0 * kZ975 * se[i];
        arr.push_back(std::move(row));
    }
    return arr;
}

ActorAttributes load_attributes(const std::string& path, std::vector<std::string>* labels) {
    if (path.empty()) return ActorAttributes{};
    return read_attributes_csv_file(path, labels);
}

LoadedEvents load_events(const std::string& path, const ModelConfig& cfg,
                         const std::vector<std::string>& labels) {
    return read_events_csv_file(path,
                                cfg.n_actors > 0 ? std::optional<int>(cfg.n_actors) : std::nullopt,
                                labels.empty() ? nullptr : &labels);
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const std::string& design_path, const std::string& preset,
                 const std::string& out_dir, const Overrides& ov, std::ostream& out) {
    SimDesign design;
    if (!preset.empty()) {
        if (preset == "stream")
            design = stream_reproduction_design();
        else if (preset == "multilevel")
            design = multilevel_reproduction_design();
        else
            throw std::invalid_argument("unknown preset: " + preset);
    } else if (!design_path.empty()) {
        design = load_design_file(design_path);
    } else {
        throw std::invalid_argument("simulate needs --design or --preset");
    }
    if (ov.seed) design.seed = *ov.seed;
    design.validate();

    fs::create_directories(out_dir);
    const nlohmann::json dj = design_to_json(design);
    const std::string hash = hex64(fnv1a64(dj.dump()));
    write_text_file((fs::path(out_dir) / "design.json").string(), dj.dump(2) + "\n");

    nlohmann::json truth;
    if (design.multilevel()) {
        const ClusterSim cs = simulate_clusters(design);
        write_clustered_events_csv_file((fs::path(out_dir) / "events.csv").string(), cs.sequences,
                                        cs.cluster_ids);
        truth = truth_json(design, &cs);
        int total = 0;
        for (const auto& s : cs.sequences) total += s.n_events();
        out << "simulated " << cs.sequences.size() << " clusters, " << total << " events\n";
    } else {
        const EventSequence seq = simulate_sequence(design);
        write_events_csv_file((fs::path(out_dir) / "events.csv").string(), seq);
        truth = truth_json(design);
        out << "simulated 1 network, " << seq.n_events() << " events, time span [0, "
            << seq.last_time() << "]\n";
    }
    truth["meta"] = meta_json(hash);
    write_text_file((fs::path(out_dir) / "truth.json").string(), truth.dump(2) + "\n");
    out << "wrote " << (fs::path(out_dir) / "events.csv").string() << ", design.json, truth.json\n";
    return 0;
}

// --------------------------------------------------------------------- fit

nlohmann::json fit_output_json(const FitResult& fr, const std::string& config_hash) {
    nlohmann::json j;
    j["meta"] = meta_json(config_hash);
    j["model"] = fr.model;
    j["spec_hash"] = fr.spec_hash;
    j["n_events"] = fr.n_events;
    j["converged"] = fr.converged;
    j["iterations"] = fr.iterations;
    j["loglik"] = fr.loglik;
    j["gradient_inf_norm"] = fr.gradient_inf_norm;
    j["dropped_columns"] = fr.dropped;
    j["warnings"] = fr.warnings;
    const Eigen::VectorXd se = fr.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    j["estimates"] = estimates_json(fr.names, fr.beta, se);
    return j;
}

int cmd_fit(const std::string& config_path, const std::string& events_path,
            const std::string& attrs_path, const std::string& out_path, const Overrides& ov,
            std::ostream& out, std::ostream& err) {
    ModelConfig cfg = load_model_config(config_path);
    if (ov.seed) cfg.seed = *ov.seed;
    std::vector<std::string> labels;
    const ActorAttributes attrs = load_attributes(attrs_path, &labels);
    const LoadedEvents le = load_events(events_path, cfg, labels);
    if (le.sequences.size() != 1)
        throw std::invalid_argument(
            "fit expects a single-network events file; clustered files go through `multilevel fit`");

    const FitResult fr = fit_rem(le.sequences.front(), cfg.specs, attrs, cfg.model, cfg.fit);
    const nlohmann::json doc = fit_output_json(fr, cfg.config_hash());
    if (!out_path.empty()) write_text_file(out_path, doc.dump(2) + "\n");
    if (resolve_format(cfg, ov) == OutputFormat::table) {
        const Eigen::VectorXd se = fr.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
        out << estimates_table(fr.names, fr.beta, se);
        out << "log-likelihood " << fr.loglik << ", " << fr.n_events << " events, "
            << (fr.converged ? "converged" : "NOT converged") << " in " << fr.iterations
            << " iterations\n";
    } else {
        out << doc.dump(2) << "\n";
    }
    for (const auto& w : fr.warnings) err << "warning: " << w << "\n";
    if (!fr.converged) {
        err << "error: fit did not converge\n";
        return 2;
    }
    return 0;
}

// ------------------------------------------------------------------ stream

ModelConfig stream_config(const std::string& config_path, const Overrides& ov) {
    ModelConfig cfg = load_model_config(config_path);
    if (ov.seed) cfg.seed = *ov.seed;
    if (cfg.n_actors < 2)
        throw std::invalid_argument("streams need an explicit n_actors in the config");
    return cfg;
}

int cmd_stream_init(const std::string& config_path, const std::string& attrs_path,
                    const std::string& checkpoint_path, const Overrides& ov, std::ostream& out) {
    const ModelConfig cfg = stream_config(config_path, ov);
    std::vector<std::string> labels;
    const ActorAttributes attrs = load_attributes(attrs_path, &labels);
    validate_specs(cfg.specs, attrs);
    const std::string hash =
        spec_hash(model_kind_name(cfg.model), cfg.n_actors, cfg.specs);
    PooledState state =
        init_stream(cfg.pool_mode, static_cast<int>(cfg.specs.size()), cfg.prior, hash);
    StreamSession session(std::move(state), cfg.specs, attrs, cfg.model, cfg.n_actors, cfg.stream);
    session.save(checkpoint_path);
    out << "initialized " << pool_mode_name(cfg.pool_mode) << " stream ("
        << cfg.specs.size() << " effects, " << cfg.n_actors << " actors) -> " << checkpoint_path
        << "\n";
    return 0;
}

int cmd_stream_push(const std::string& config_path, const std::string& checkpoint_path,
                    const std::string& events_path, const std::string& attrs_path,
                    const std::string& out_path, const Overrides& ov, std::ostream& out,
                    std::ostream& err) {
    const ModelConfig cfg = stream_config(config_path, ov);
    std::vector<std::string> labels;
    const ActorAttributes attrs = load_attributes(attrs_path, &labels);
    StreamSession session = StreamSession::load(checkpoint_path, cfg.specs, attrs, cfg.model,
                                                cfg.n_actors, cfg.stream);
    const LoadedEvents le = load_events(events_path, cfg, labels);
    if (le.sequences.size() != 1)
        throw std::invalid_argument("stream pushes take single-network event files");
    if (!le.actor_labels.empty() && labels.empty())
        throw std::invalid_argument(
            "stream pushes need integer actor ids, or an attribute file fixing the label order");

    const std::optional<FitResult> fit = session.push(le.sequences.front().events);
    session.save(checkpoint_path);
    if (fit) {
        if (!out_path.empty())
            write_text_file(out_path, fit_output_json(*fit, cfg.config_hash()).dump(2) + "\n");
        const PooledState& st = session.state();
        if (resolve_format(cfg, ov) == OutputFormat::table) {
            const Eigen::VectorXd se = st.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
            out << estimates_table(cfg.effect_names(), st.mean, se);
        }
        out << "batch " << st.batches_seen << " pooled: " << fit->n_events
            << " events, frontier t=" << st.last_time << "\n";
        for (const auto& w : fit->warnings) err << "warning: " << w << "\n";
    } else {
        out << "buffered " << session.pending().size()
            << " events (below the minimum batch size)\n";
    }
    return 0;
}

int cmd_stream_status(const std::string& checkpoint_path, const std::string& format,
                      std::ostream& out) {
    const nlohmann::json j = parse_checkpoint_json(read_text_file(checkpoint_path));
    if (format == "json") {
        nlohmann::json s;
        for (const char* k : {"mode", "model", "spec_hash", "p", "n_actors", "batches_seen",
                              "last_time", "min_batch", "carry_history"})
            s[k] = j.at(k);
        s["pending_events"] = j.at("pending").size();
        s["meta"]["version"] = kToolVersion;
        out << s.dump(2) << "\n";
    } else {
        out << "mode:          " << j.at("mode").get<std::string>() << "\n"
            << "model:         " << j.at("model").get<std::string>() << "\n"
            << "effects:       " << j.at("p").get<int>() << "\n"
            << "actors:        " << j.at("n_actors").get<int>() << "\n"
            << "batches seen:  " << j.at("batches_seen").get<int>() << "\n"
            << "frontier time: " << j.at("last_time").get<double>() << "\n"
            << "pending:       " << j.at("pending").size() << " events\n"
            << "spec hash:     " << j.at("spec_hash").get<std::string>() << "\n";
    }
    return 0;
}

int cmd_stream_export(const std::string& config_path, const std::string& checkpoint_path,
                      const std::string& out_path, const Overrides& ov, std::ostream& out) {
    const ModelConfig cfg = stream_config(config_path, ov);
    const nlohmann::json j = parse_checkpoint_json(read_text_file(checkpoint_path));
    const std::string expect = spec_hash(model_kind_name(cfg.model), cfg.n_actors, cfg.specs);
    if (j.at("spec_hash").get<std::string>() != expect)
        throw std::invalid_argument("spec mismatch: checkpoint was built from a different model");
    const int p = j.at("p").get<int>();
    const Eigen::VectorXd mean = vec_from_json(j.at("mean"));
    const Eigen::MatrixXd cov = mat_from_rowmajor(j.at("covariance"), p);
    const Eigen::VectorXd se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();

    nlohmann::json doc;
    doc["meta"] = meta_json(cfg.config_hash());
    doc["spec_hash"] = expect;
    doc["mode"] = j.at("mode");
    doc["batches_seen"] = j.at("batches_seen");
    doc["last_time"] = j.at("last_time");
    doc["estimates"] = estimates_json(cfg.effect_names(), mean, se);
    if (!out_path.empty()) write_text_file(out_path, doc.dump(2) + "\n");
    if (resolve_format(cfg, ov) == OutputFormat::table)
        out << estimates_table(cfg.effect_names(), mean, se);
    else
        out << doc.dump(2) << "\n";
    return 0;
}

// -------------------------------------------------------------- multilevel

int cmd_multilevel_fit(const std::string& config_path, const std::string& events_path,
                       const std::string& attrs_path, const std::string& out_path,
                       const std::string& draws_path, const Overrides& ov, std::ostream& out,
                       std::ostream& err) {
    ModelConfig cfg = load_model_config(config_path);
    if (ov.seed) {
        cfg.seed = *ov.seed;
        cfg.gibbs.seed = *ov.seed;
    }
    std::vector<std::string> labels;
    const ActorAttributes attrs = load_attributes(attrs_path, &labels);
    const LoadedEvents le = load_events(events_path, cfg, labels);
    if (le.sequences.size() < 2)
        throw std::invalid_argument("multilevel fit needs a clustered events file (cluster column)");

    const ClusterFitReport rep = fit_clusters(le.sequences, le.cluster_ids, cfg.specs, attrs,
                                              cfg.model, cfg.fixed_indices(), cfg.fit);
    for (const auto& ex : rep.excluded) err << "warning: excluded cluster " << ex << "\n";

    nlohmann::json doc;
    doc["meta"] = meta_json(cfg.config_hash());
    doc["clusters_used"] = rep.fits.size();
    doc["clusters_excluded"] = rep.excluded;

    int code = 0;
    if (cfg.ml_method == ModelConfig::MlMethod::frequentist) {
        if (rep.n_fixed > 0)
            throw std::invalid_argument(
                "fixed effects need the bayesian multilevel method; the moment iteration handles "
                "fully random effects only");
        const MultilevelEstimate est = fit_random_effects_freq(rep.fits, cfg.multilevel);
        doc["method"] = "frequentist";
        doc["converged"] = est.converged;
        doc["sweeps"] = est.sweeps;
        doc["estimates"] = estimates_json(rep.random_names, est.mu, est.se_mu);
        doc["sigma"] = mat_to_json(est.sigma);
        doc["sigma_sd"] = vec_to_json(est.sigma.diagonal().cwiseSqrt());
        doc["delta"] = mat_to_json(est.delta);
        doc["cluster_ids"] = est.cluster_ids;
        {
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& r :
                 shrinkage_report(rep.fits, est.mu, est.delta, rep.random_names)) {
                nlohmann::json rj;
                rj["cluster"] = r.cluster_id;
                rj["effect"] = r.effect;
                rj["n_events"] = r.n_events;
                rj["mle"] = r.mle;
                rj["multilevel"] = r.multilevel;
                rj["shrinkage"] = r.shrinkage;
                rows.push_back(std::move(rj));
            }
            doc["shrinkage"] = std::move(rows);
        }
        if (resolve_format(cfg, ov) == OutputFormat::table) {
            out << estimates_table(rep.random_names, est.mu, est.se_mu);
            out << "heterogeneity sd:";
            for (int i = 0; i < est.sigma.rows(); ++i)
                out << ' ' << std::sqrt(std::max(0.0, est.sigma(i, i)));
            out << "\n"
                << (est.converged ? "converged" : "NOT converged") << " in " << est.sweeps
                << " sweeps over " << rep.fits.size() << " clusters\n";
        } else {
            out << doc.dump(2) << "\n";
        }
        if (!est.converged) {
            err << "error: moment iteration did not converge\n";
            code = 2;
        }
    } else {
        const GibbsResult res = gibbs_mixed(rep.fits, cfg.gibbs, rep.fixed_names, rep.random_names);
        doc["method"] = "bayesian";
        doc["chains"] = cfg.gibbs.chains;
        doc["retained_per_chain"] = res.retained_per_chain();
        doc["max_rhat"] = res.max_rhat;
        doc["all_sigma_pd"] = res.all_sigma_pd;
        auto summary_row = [](const ParamSummary& s) {
            nlohmann::json rj;
            rj["effect"] = s.name;
            rj["estimate"] = s.mean;
            rj["se"] = s.sd;
            rj["ci95"] = {s.q025, s.q975};
            rj["width"] = s.q975 - s.q025;
            rj["rhat"] = s.rhat;
            rj["ess"] = s.ess;
            rj["mcse"] = s.mcse;
            return rj;
        };
        // "estimates" mirrors the other subcommands: one row per population
        // effect. The heterogeneity and augmentation parameters keep their
        // full summaries separately.
        nlohmann::json effects = nlohmann::json::array();
        nlohmann::json extras = nlohmann::json::array();
        const int n_effects = res.n_fixed + res.n_random;
        for (int i = 0; i < static_cast<int>(res.summaries.size()); ++i) {
            if (i < n_effects)
                effects.push_back(summary_row(res.summaries[static_cast<std::size_t>(i)]));
            else
                extras.push_back(summary_row(res.summaries[static_cast<std::size_t>(i)]));
        }
        doc["estimates"] = std::move(effects);
        doc["summaries"] = std::move(extras);
        doc["posterior_mean_sigma"] = mat_to_json(res.posterior_mean_sigma());
        doc["delta_mean"] = mat_to_json(res.delta_mean);
        doc["cluster_ids"] = res.cluster_ids;
        if (!draws_path.empty()) {
            std::ofstream df(draws_path);
            if (!df) throw std::invalid_argument("cannot write file: " + draws_path);
            res.write_draws_csv(df);
        }
        if (resolve_format(cfg, ov) == OutputFormat::table) {
            out << "effect                          estimate        2.5%       97.5%       width\n";
            char line[160];
            const int show = res.n_fixed + res.n_random;
            for (int i = 0; i < show; ++i) {
                const ParamSummary& s = res.summaries[static_cast<std::size_t>(i)];
                std::snprintf(line, sizeof line, "%-28s %11.4f %11.4f %11.4f %11.4f\n",
                              s.name.c_str(), s.mean, s.q025, s.q975, s.q975 - s.q025);
                out << line;
            }
            out << "max split-chain R-hat " << res.max_rhat << " over "
                << res.retained_per_chain() << " retained draws x " << cfg.gibbs.chains
                << " chains\n";
        } else {
            out << doc.dump(2) << "\n";
        }
        if (res.max_rhat > 1.01)
            err << "warning: chains may not have mixed (max R-hat " << res.max_rhat << ")\n";
    }
    if (!out_path.empty()) write_text_file(out_path, doc.dump(2) + "\n");
    return code;
}

// ----------------------------------------------------------------- compare

int cmd_compare(const std::string& design_path, const std::string& preset,
                const std::vector<int>& batch_sizes, const std::string& out_dir,
                const Overrides& ov, std::ostream& out) {
    SimDesign design;
    if (!preset.empty()) {
        if (preset != "stream") throw std::invalid_argument("compare supports --preset stream");
        design = stream_reproduction_design();
    } else if (!design_path.empty()) {
        design = load_design_file(design_path);
    } else {
        throw std::invalid_argument("compare needs --design or --preset");
    }
    if (ov.seed) design.seed = *ov.seed;
    if (design.multilevel())
        throw std::invalid_argument("compare works on single-stream designs");
    if (batch_sizes.empty()) throw std::invalid_argument("compare needs --batch-sizes");
    for (int b : batch_sizes)
        if (b < 1 || b > design.n_events)
            throw std::invalid_argument("batch sizes must lie in [1, n_events]");

    fs::create_directories(out_dir);
    const std::string hash = hex64(fnv1a64(design_to_json(design).dump()));
    const EventSequence seq = simulate_sequence(design);
    out << "simulated " << seq.n_events() << " events over " << design.n_actors << " actors\n";
    std::vector<std::string> names;
    for (const auto& sp : design.specs) names.push_back(sp.name(design.specs));
    const std::string shash =
        spec_hash(model_kind_name(ModelKind::temporal), design.n_actors, design.specs);

    for (int b : batch_sizes) {
        // Streaming side: cumulative history (mirrors the exact comparator's
        // statistics), onset-corrected batches, fixed-effect pooling.
        StreamOptions sopts;
        sopts.min_batch = b;
        sopts.carry_history = true;
        StreamSession session(init_stream(PoolMode::frequentist,
                                          static_cast<int>(design.specs.size()), std::nullopt,
                                          shash),
                              design.specs, design.attributes, ModelKind::temporal,
                              design.n_actors, sopts);
        std::vector<PooledStep> pooled;
        const int n_batches = seq.n_events() / b;
        for (int i = 0; i < n_batches; ++i) {
            const std::vector<Event> chunk(seq.events.begin() + static_cast<std::ptrdiff_t>(i) * b,
                                           seq.events.begin() +
                                               static_cast<std::ptrdiff_t>(i + 1) * b);
            const auto t0 = std::chrono::steady_clock::now();
            const std::optional<FitResult> fit = session.push(chunk);
            const auto t1 = std::chrono::steady_clock::now();
            if (!fit) continue;
            PooledStep ps;
            ps.prefix_events = (i + 1) * b;
            ps.mean = session.state().mean;
            ps.covariance = session.state().covariance;
            ps.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
            ps.state_bytes = session.state().memory_footprint_bytes();
            ps.spec_hash = shash;
            pooled.push_back(std::move(ps));
        }

        // Exact side: around ten full-prefix refits, always including the end.
        std::vector<int> boundaries;
        const int step = std::max(1, n_batches / 10);
        for (int i = step; i <= n_batches; i += step) boundaries.push_back(i * b);
        if (boundaries.empty() || boundaries.back() != n_batches * b)
            boundaries.push_back(n_batches * b);
        FitOptions fopts;
        const ExactStreamResult exact =
            fit_exact_stream(seq, boundaries, design.specs, design.attributes,
                             ModelKind::temporal, fopts);

        const ComparisonReport rep = compare(exact, pooled, names);
        nlohmann::json doc = rep.to_json();
        doc["meta"] = meta_json(hash);
        doc["batch_size"] = b;
        const std::string base = (fs::path(out_dir) / ("compare_batch" + std::to_string(b))).string();
        write_text_file(base + ".json", doc.dump(2) + "\n");

        // Per-effect traces for plotting estimate paths with both intervals.
        for (std::size_t e = 0; e < names.size(); ++e) {
            std::ostringstream tr;
            tr << "prefix_events,exact,exact_lo,exact_hi,pooled,pooled_lo,pooled_hi,flagged\n";
            tr.precision(17);
            for (const auto& st : rep.steps) {
                const EffectComparison& ec = st.effects[e];
                tr << st.prefix_events << ',' << ec.exact << ',' << ec.exact - ec.exact_width / 2
                   << ',' << ec.exact + ec.exact_width / 2 << ',' << ec.pooled << ','
                   << ec.pooled - ec.pooled_width / 2 << ',' << ec.pooled + ec.pooled_width / 2
                   << ',' << (ec.flagged ? 1 : 0) << "\n";
            }
            write_text_file(base + "_" + sanitize_filename(names[e]) + ".csv", tr.str());
        }
        if (ov.format && *ov.format == "table") {
            rep.write_table(out);
        }
        const ComparisonStep& last = rep.steps.back();
        int flagged = 0;
        for (const auto& ec : last.effects) flagged += ec.flagged ? 1 : 0;
        out << "batch " << b << ": " << rep.steps.size() << " comparison points, final prefix "
            << last.prefix_events << ", " << flagged << " effect(s) beyond 2 pooled SEs -> "
            << base << ".json\n";
    }
    return 0;
}

// ---------------------------------------------------------------- validate

int cmd_validate(const std::string& events_path, const std::string& attrs_path,
                 std::ostream& out) {
    std::vector<std::string> labels;
    const ActorAttributes attrs = load_attributes(attrs_path, &labels);
    const LoadedEvents le =
        read_events_csv_file(events_path, std::nullopt, labels.empty() ? nullptr : &labels);
    int total = 0;
    for (std::size_t i = 0; i < le.sequences.size(); ++i) {
        const EventSequence& s = le.sequences[i];
        const ValidationReport r = validate_sequence(s);
        if (!r.ok())
            throw std::invalid_argument(
                (le.sequences.size() == 1 ? events_path : "cluster " + le.cluster_ids[i]) + ": " +
                r.summary());
        if (!attrs.empty()) attrs.require_complete(s.n_actors);
        total += s.n_events();
    }
    out << events_path << ": OK - " << le.sequences.size() << " network(s), " << total
        << " events\n";
    return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"relational event models with meta-analytic pooling"};
    app.name("rem");
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(0, 1);

    Overrides ov;
    std::uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "override the config/design seed")
                         ->envname("REM_SEED");
    int threads = 0;
    app.add_option("--threads", threads, "linear-algebra thread cap (0 = library default)")
        ->envname("REM_THREADS");
    std::string format;
    auto* fmt_opt = app.add_option("--format", format, "output format")
                        ->check(CLI::IsMember({"json", "table"}))
                        ->envname("REM_FORMAT");

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate synthetic event data from a design");
    std::string sim_design, sim_preset, sim_out;
    sim->add_option("--design", sim_design, "design JSON file");
    sim->add_option("--preset", sim_preset, "shipped design: stream or multilevel");
    sim->add_option("--out", sim_out, "output directory")->required();

    // fit
    auto* fit = app.add_subcommand("fit", "maximum-likelihood fit of one sequence");
    std::string fit_config, fit_events, fit_attrs, fit_out;
    fit->add_option("--config", fit_config, "model config JSON")->required();
    fit->add_option("--events", fit_events, "events CSV")->required();
    fit->add_option("--attributes", fit_attrs, "actor attributes CSV");
    fit->add_option("--out", fit_out, "write the fit JSON here");

    // stream + nested subcommands
    auto* stream = app.add_subcommand("stream", "batchwise pooled estimation");
    stream->require_subcommand(1);
    std::string st_config, st_attrs, st_checkpoint, st_events, st_out, st_format = "table";
    auto* st_init = stream->add_subcommand("init", "start a stream checkpoint");
    st_init->add_option("--config", st_config, "model config JSON")->required();
    st_init->add_option("--attributes", st_attrs, "actor attributes CSV");
    st_init->add_option("--checkpoint", st_checkpoint, "checkpoint path")->required();
    auto* st_push = stream->add_subcommand("push", "ingest a batch of events");
    st_push->add_option("--config", st_config, "model config JSON")->required();
    st_push->add_option("--attributes", st_attrs, "actor attributes CSV");
    st_push->add_option("--checkpoint", st_checkpoint, "checkpoint path")->required();
    st_push->add_option("--events", st_events, "batch events CSV")->required();
    st_push->add_option("--out", st_out, "write the batch-fit JSON here");
    auto* st_status = stream->add_subcommand("status", "inspect a checkpoint");
    st_status->add_option("--checkpoint", st_checkpoint, "checkpoint path")->required();
    auto* st_export = stream->add_subcommand("export", "write the pooled estimate");
    st_export->add_option("--config", st_config, "model config JSON")->required();
    st_export->add_option("--checkpoint", st_checkpoint, "checkpoint path")->required();
    st_export->add_option("--out", st_out, "write the estimate JSON here");

    // multilevel
    auto* ml = app.add_subcommand("multilevel", "random/mixed-effects pooling across clusters");
    ml->require_subcommand(1);
    auto* ml_fit = ml->add_subcommand("fit", "fit clusters and pool them");
    std::string ml_config, ml_events, ml_attrs, ml_out, ml_draws;
    ml_fit->add_option("--config", ml_config, "model config JSON")->required();
    ml_fit->add_option("--events", ml_events, "clustered events CSV")->required();
    ml_fit->add_option("--attributes", ml_attrs, "actor attributes CSV");
    ml_fit->add_option("--out", ml_out, "write the result JSON here");
    ml_fit->add_option("--draws", ml_draws, "write raw sampler draws CSV here");

    // compare
    auto* cmp = app.add_subcommand("compare", "exact full refits vs stream pooling");
    std::string cmp_design, cmp_preset, cmp_out;
    std::vector<int> cmp_batches;
    cmp->add_option("--design", cmp_design, "design JSON file");
    cmp->add_option("--preset", cmp_preset, "shipped design: stream");
    cmp->add_option("--batch-sizes", cmp_batches, "comma-separated batch sizes")
        ->required()
        ->delimiter(',');
    cmp->add_option("--out", cmp_out, "output directory")->required();

    // validate
    auto* val = app.add_subcommand("validate", "check an events file");
    std::string val_events, val_attrs;
    val->add_option("events", val_events, "events CSV")->required();
    val->add_option("--attributes", val_attrs, "actor attributes CSV");

    // Global flags (--seed/--threads/--format) may sit before or after the
    // subcommand name: unmatched subcommand options fall through to the app.
    const std::function<void(CLI::App*)> allow_globals = [&](CLI::App* node) {
        for (CLI::App* sub : node->get_subcommands({})) {
            sub->fallthrough();
            allow_globals(sub);
        }
    };
    allow_globals(&app);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    if (*seed_opt) ov.seed = seed_val;
    if (*fmt_opt) ov.format = format;
    if (threads > 0) Eigen::setNbThreads(threads);

    try {
        if (sim->parsed()) return cmd_simulate(sim_design, sim_preset, sim_out, ov, out);
        if (fit->parsed()) return cmd_fit(fit_config, fit_events, fit_attrs, fit_out, ov, out, err);
        if (stream->parsed()) {
            if (st_init->parsed())
                return cmd_stream_init(st_config, st_attrs, st_checkpoint, ov, out);
            if (st_push->parsed())
                return cmd_stream_push(st_config, st_checkpoint, st_events, st_attrs, st_out, ov,
                                       out, err);
            if (st_status->parsed())
                return cmd_stream_status(st_checkpoint, ov.format.value_or(st_format), out);
            if (st_export->parsed())
                return cmd_stream_export(st_config, st_checkpoint, st_out, ov, out);
        }
        if (ml->parsed() && ml_fit->parsed())
            return cmd_multilevel_fit(ml_config, ml_events, ml_attrs, ml_out, ml_draws, ov, out,
                                      err);
        if (cmp->parsed())
            return cmd_compare(cmp_design, cmp_preset, cmp_batches, cmp_out, ov, out);
        if (val->parsed()) return cmd_validate(val_events, val_attrs, out);
        out << app.help();
        return 0;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "unexpected failure: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace rem
