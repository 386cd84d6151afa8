#include "rem/estimate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>

#include <json.hpp>

#include "rem/serialize_util.hpp"

namespace rem {

namespace {

// Restricts a parent source to a subset of columns (used when within-sample
// constant columns are dropped for a batch).
class ColumnSubsetSource final : public SliceSource {
  public:
    ColumnSubsetSource(SliceSource& parent, std::vector<int> keep)
        : parent_(&parent), keep_(std::move(keep)) {}
    void reset() override { parent_->reset(); }
    const Eigen::MatrixXd& next() override { return select(parent_->next()); }
    const Eigen::MatrixXd& terminal() override { return select(parent_->terminal()); }
    int n_events() const override { return parent_->n_events(); }
    int n_cols() const override { return static_cast<int>(keep_.size()); }
    std::size_t peak_bytes() const override {
        return parent_->peak_bytes() + static_cast<std::size_t>(buf_.size()) * sizeof(double);
    }

  private:
    const Eigen::MatrixXd& select(const Eigen::MatrixXd& x) {
        buf_.resize(x.rows(), static_cast<int>(keep_.size()));
        for (int c = 0; c < static_cast<int>(keep_.size()); ++c)
            buf_.col(c) = x.col(keep_[static_cast<std::size_t>(c)]);
        return buf_;
    }
    SliceSource* parent_;
    std::vector<int> keep_;
    Eigen::MatrixXd buf_;
};

// One pass over the slices: which columns are constant across the whole
// sample, and which are constant within every event (degenerate for the
// order-based likelihood where per-event level shifts cancel)?
struct ColumnScan {
    std::vector<bool> globally_constant;
    std::vector<bool> eventwise_constant;
};

ColumnScan scan_columns(SliceSource& slices, bool with_terminal) {
    const int p = slices.n_cols();
    ColumnScan scan;
    scan.globally_constant.assign(static_cast<std::size_t>(p), true);
    scan.eventwise_constant.assign(static_cast<std::size_t>(p), true);
    Eigen::VectorXd gmin = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::infinity());
    Eigen::VectorXd gmax = -gmin;
    slices.reset();
    const int m = slices.n_events();
    for (int i = 0; i < m; ++i) {
        const Eigen::MatrixXd& x = slices.next();
        for (int c = 0; c < p; ++c) {
            const double lo = x.col(c).minCoeff(), hi = x.col(c).maxCoeff();
            if (hi != lo) scan.eventwise_constant[static_cast<std::size_t>(c)] = false;
            gmin[c] = std::min(gmin[c], lo);
            gmax[c] = std::max(gmax[c], hi);
        }
    }
    if (with_terminal) {
        const Eigen::MatrixXd& x = slices.terminal();
        for (int c = 0; c < p; ++c) {
            const double lo = x.col(c).minCoeff(), hi = x.col(c).maxCoeff();
            if (hi != lo) scan.eventwise_constant[static_cast<std::size_t>(c)] = false;
            gmin[c] = std::min(gmin[c], lo);
            gmax[c] = std::max(gmax[c], hi);
        }
    }
    for (int c = 0; c < p; ++c)
        scan.globally_constant[static_cast<std::size_t>(c)] = gmax[c] == gmin[c];
    return scan;
}

std::vector<std::string> dependent_column_names(const Eigen::MatrixXd& a,
                                                const std::vector<StatisticSpec>& specs,
                                                const std::vector<int>& keep) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::Index rank = qr.rank();
    std::vector<std::string> names;
    for (Eigen::Index i = rank; i < a.cols(); ++i) {
        int kept_idx = static_cast<int>(qr.colsPermutation().indices()[i]);
        int spec_idx = keep[static_cast<std::size_t>(kept_idx)];
        names.push_back(specs[static_cast<std::size_t>(spec_idx)].name(specs));
    }
    return names;
}

[[noreturn]] void rank_deficient_error(const Eigen::MatrixXd& a,
                                       const std::vector<StatisticSpec>& specs,
                                       const std::vector<int>& keep) {
    std::string msg = "rank-deficient design; collinear columns:";
    for (const auto& n : dependent_column_names(a, specs, keep)) msg += " " + n;
    throw NumericalError(msg);
}

}  // namespace

FitResult fit_rem(const EventSequence& seq, const std::vector<StatisticSpec>& specs,
                  const ActorAttributes& attrs, ModelKind kind, const FitOptions& opts,
                  FitProfile* profile) {
    const auto t0 = std::chrono::steady_clock::now();
    require_valid(seq);
    validate_specs(specs, attrs);
    if (!attrs.empty()) attrs.require_complete(seq.n_actors);
    if (kind == ModelKind::ordinal) {
        for (const auto& sp : specs)
            if (sp.kind == StatKind::intercept)
                throw std::invalid_argument("intercept unidentified in ordinal model");
    }
    const int p = static_cast<int>(specs.size());
    if (p == 0) throw std::invalid_argument("empty statistic spec");
    if (seq.events.empty()) throw std::invalid_argument("cannot fit an empty event sequence");

    FitResult res;
    res.model = model_kind_name(kind);
    res.spec_hash = spec_hash(res.model, seq.n_actors, specs);
    res.n_events = seq.n_events();
    for (const auto& sp : specs) res.names.push_back(sp.name(specs));
    if (res.n_events < p)
        res.warnings.push_back("fewer events (" + std::to_string(res.n_events) +
                               ") than parameters (" + std::to_string(p) + ")");

    EventSequence work_seq = seq;
    if (!opts.include_terminal) work_seq.end_time = work_seq.last_time();
    const bool with_terminal = kind == ModelKind::temporal && work_seq.end_time > work_seq.last_time();

    // Slice provider: one materialized set reused across Newton passes when it
    // fits the budget, else an O(D*P) rolling recomputation per pass.
    RiskSet risk(work_seq.n_actors);
    const std::size_t est_bytes = (static_cast<std::size_t>(work_seq.n_events()) + 1) *
                                  static_cast<std::size_t>(risk.size()) *
                                  static_cast<std::size_t>(p) * sizeof(double);
    std::unique_ptr<SliceSource> source;
    if (opts.materialize_budget != 0 && est_bytes <= opts.materialize_budget)
        source = std::make_unique<MaterializedSliceSource>(work_seq, specs, attrs, std::size_t(0),
                                                           opts.initial_history);
    else
        source = std::make_unique<StreamingSliceSource>(work_seq, specs, attrs, opts.initial_history);

    // Small-sample safeguard: drop columns that cannot carry information in
    // this sample. Intercept is the exposure baseline, never dropped.
    ColumnScan scan = scan_columns(*source, with_terminal);
    std::vector<int> keep;
    for (int c = 0; c < p; ++c) {
        const bool is_intercept = specs[static_cast<std::size_t>(c)].kind == StatKind::intercept;
        const bool degenerate = kind == ModelKind::temporal
                                    ? (scan.globally_constant[static_cast<std::size_t>(c)] && !is_intercept)
                                    : scan.eventwise_constant[static_cast<std::size_t>(c)];
        if (degenerate) {
            res.dropped.push_back(c);
            res.warnings.push_back("dropped constant column " +
                                   specs[static_cast<std::size_t>(c)].name(specs));
        } else {
            keep.push_back(c);
        }
    }
    if (keep.empty()) throw NumericalError("all covariate columns are constant in this sample");

    std::unique_ptr<ColumnSubsetSource> subset;
    SliceSource* eval_source = source.get();
    if (!res.dropped.empty()) {
        subset = std::make_unique<ColumnSubsetSource>(*source, keep);
        eval_source = subset.get();
    }
    const int pk = static_cast<int>(keep.size());

    auto evaluate = [&](const Eigen::VectorXd& b) {
        return loglik(kind, work_seq, *eval_source, b, nullptr);
    };

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(pk);
    LogLikEval cur = evaluate(beta);

    // The design must have full rank before we iterate; exact collinearity
    // (duplicate columns and the like) is a modeling error, not a line-search
    // problem.
    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(-cur.hessian);
        if (qr.rank() < pk) rank_deficient_error(-cur.hessian, specs, keep);
    }

    bool converged = false;
    bool ridged = false;
    int iter = 0;
    std::string stop_note;
    while (iter < opts.max_iterations) {
        if (cur.gradient.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
            converged = true;
            break;
        }
        ++iter;
        Eigen::MatrixXd a = -cur.hessian;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
        bool bad = ldlt.info() != Eigen::Success ||
                   ldlt.vectorD().minCoeff() <= a.diagonal().cwiseAbs().maxCoeff() * 1e-14;
        if (bad) {
            if (ridged) rank_deficient_error(a, specs, keep);
            ridged = true;
            a.diagonal().array() += opts.ridge;
            ldlt.compute(a);
            if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
                rank_deficient_error(a, specs, keep);
        }
        Eigen::VectorXd dir = ldlt.solve(cur.gradient);

        double step = 1.0;
        bool improved = false;
        Eigen::VectorXd cand;
        LogLikEval cand_eval;
        for (int h = 0; h <= opts.max_halvings; ++h) {
            cand = beta + step * dir;
            try {
                cand_eval = evaluate(cand);
                if (cand_eval.value > cur.value) {
                    improved = true;
                    break;
                }
                // Near the optimum the gain falls below the log-likelihood's
                // floating-point resolution; accept steps that keep the value
                // (within rounding) while still shrinking the gradient.
                if (cand_eval.value >= cur.value - 1e-12 * (1.0 + std::abs(cur.value)) &&
                    cand_eval.gradient.lpNorm<Eigen::Infinity>() <
                        cur.gradient.lpNorm<Eigen::Infinity>()) {
                    improved = true;
                    break;
                }
            } catch (const NumericalError&) {
                // overflow along the path: shorten the step
            }
            step *= 0.5;
        }
        if (!improved) {
            stop_note = "line search stalled";
            break;
        }
        beta = cand;
        cur = cand_eval;
        if (beta.lpNorm<Eigen::Infinity>() > opts.beta_bound) {
            stop_note = "estimate diverged (|beta| exceeded " + std::to_string(opts.beta_bound) + ")";
            break;
        }
    }
    if (!converged && cur.gradient.lpNorm<Eigen::Infinity>() < opts.grad_tol) converged = true;
    if (!converged) {
        if (stop_note.empty()) stop_note = "iteration limit reached";
        res.warnings.push_back("not converged: " + stop_note +
                               "; gradient inf-norm = " + std::to_string(cur.gradient.lpNorm<Eigen::Infinity>()));
    }

    // Error covariance from the curvature at the optimum.
    Eigen::MatrixXd info_k = -cur.hessian;
    Eigen::MatrixXd cov_k;
    {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info_k);
        bool bad = ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0;
        if (bad) {
            info_k.diagonal().array() += opts.ridge;
            ldlt.compute(info_k);
            bad = ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0;
        }
        if (bad) {
            converged = false;
            res.warnings.push_back("error covariance not positive definite");
            cov_k = Eigen::MatrixXd::Zero(pk, pk);
            info_k = Eigen::MatrixXd::Zero(pk, pk);
        } else {
            cov_k = ldlt.solve(Eigen::MatrixXd::Identity(pk, pk));
            cov_k = ((cov_k + cov_k.transpose()) / 2.0).eval();
        }
    }

    res.beta = Eigen::VectorXd::Zero(p);
    res.covariance = Eigen::MatrixXd::Zero(p, p);
    res.information = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < pk; ++i) {
        res.beta[keep[static_cast<std::size_t>(i)]] = beta[i];
        for (int j = 0; j < pk; ++j) {
            res.covariance(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]) = cov_k(i, j);
            res.information(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]) = info_k(i, j);
        }
    }
    res.loglik = cur.value;
    res.converged = converged;
    res.iterations = iter;
    res.gradient_inf_norm = cur.gradient.lpNorm<Eigen::Infinity>();

    if (profile) {
        profile->wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        profile->peak_slice_bytes =
            source->peak_bytes() + (subset ? subset->peak_bytes() - source->peak_bytes() : 0);
        profile->iterations = iter;
    }
    return res;
}

std::string FitResult::to_json() const {
    nlohmann::json j;
    j["beta"] = vec_to_json(beta);
    j["covariance"] = mat_to_json(covariance);
    j["information"] = mat_to_json(information);
    j["loglik"] = loglik;
    j["n_events"] = n_events;
    j["converged"] = converged;
    j["iterations"] = iterations;
    j["gradient_inf_norm"] = gradient_inf_norm;
    j["dropped_columns"] = dropped;
    j["warnings"] = warnings;
    j["spec_hash"] = spec_hash;
    j["model"] = model;
    j["names"] = names;
    return j.dump(2);
}

FitResult FitResult::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    FitResult r;
    r.beta = vec_from_json(j.at("beta"));
    r.covariance = mat_from_json(j.at("covariance"));
    if (j.contains("information")) {
        r.information = mat_from_json(j.at("information"));
    } else {
        // fall back to inverting the covariance (exact state preferred)
        r.information = r.covariance.inverse();
    }
    r.loglik = j.at("loglik").get<double>();
    r.n_events = j.at("n_events").get<int>();
    r.converged = j.at("converged").get<bool>();
    r.iterations = j.value("iterations", 0);
    r.gradient_inf_norm = j.value("gradient_inf_norm", 0.0);
    r.dropped = j.value("dropped_columns", std::vector<int>{});
    r.warnings = j.value("warnings", std::vector<std::string>{});
    r.spec_hash = j.value("spec_hash", std::string{});
    r.model = j.value("model", std::string{"temporal"});
    r.names = j.value("names", std::vector<std::string>{});
    return r;
}

}  // namespace rem
