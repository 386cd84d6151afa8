#include "rem/stream.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rem/hash.hpp"
#include "rem/serialize_util.hpp"

namespace rem {

namespace {

std::vector<int> informed_indices(const Eigen::MatrixXd& precision) {
    std::vector<int> idx;
    for (int i = 0; i < precision.rows(); ++i)
        if (precision.row(i).cwiseAbs().maxCoeff() > 0.0) idx.push_back(i);
    return idx;
}

Eigen::MatrixXd extract_block(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(idx.size(), idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < idx.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                m(idx[i], idx[j]);
    return out;
}

}  // namespace

GaussianPrior GaussianPrior::flat(int p, double scale) {
    GaussianPrior pr;
    pr.mean = Eigen::VectorXd::Zero(p);
    pr.covariance = scale * Eigen::MatrixXd::Identity(p, p);
    return pr;
}

void GaussianPrior::validate() const {
    if (covariance.rows() != covariance.cols() || covariance.rows() != mean.size())
        throw std::invalid_argument("prior dimensions inconsistent");
    if (!covariance.isApprox(covariance.transpose(), 1e-10))
        throw std::invalid_argument("prior covariance not symmetric");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(covariance);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
        throw std::invalid_argument("prior covariance not positive definite");
}

const char* pool_mode_name(PoolMode m) {
    return m == PoolMode::frequentist ? "frequentist" : "bayesian";
}

PoolMode parse_pool_mode(const std::string& s) {
    if (s == "frequentist") return PoolMode::frequentist;
    if (s == "bayesian") return PoolMode::bayesian;
    throw std::invalid_argument("unknown pooling mode: " + s);
}

std::vector<int> PooledState::uninformed_columns() const {
    std::vector<int> out;
    if (batches_seen == 0 && mode == PoolMode::frequentist) {
        for (int i = 0; i < n_params(); ++i) out.push_back(i);
        return out;
    }
    const std::vector<int> informed = informed_indices(precision);
    std::size_t k = 0;
    for (int i = 0; i < n_params(); ++i) {
        if (k < informed.size() && informed[k] == i) ++k;
        else out.push_back(i);
    }
    return out;
}

void PooledState::refresh() {
    const int p = n_params();
    mean = Eigen::VectorXd::Zero(p);
    covariance = Eigen::MatrixXd::Zero(p, p);
    const std::vector<int> idx = informed_indices(precision);
    if (idx.empty()) return;
    Eigen::MatrixXd block = extract_block(precision, idx);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(block);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
        throw NumericalError("pooled precision not positive definite");
    Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(block.rows(), block.cols()));
    cov = ((cov + cov.transpose()) / 2.0).eval();
    Eigen::VectorXd ws(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) ws[static_cast<Eigen::Index>(i)] = weighted_sum[idx[i]];
    Eigen::VectorXd mu = cov * ws;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        mean[idx[i]] = mu[static_cast<Eigen::Index>(i)];
        for (std::size_t j = 0; j < idx.size(); ++j)
            covariance(idx[i], idx[j]) = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
}

std::size_t PooledState::memory_footprint_bytes() const {
    return sizeof(PooledState) + spec_hash.size() +
           static_cast<std::size_t>(precision.size() + covariance.size()) * sizeof(double) +
           static_cast<std::size_t>(weighted_sum.size() + mean.size()) * sizeof(double);
}

PooledState init_stream(PoolMode mode, int p, const std::optional<GaussianPrior>& prior,
                        const std::string& spec_hash) {
    if (p <= 0) throw std::invalid_argument("need at least one parameter");
    PooledState st;
    st.mode = mode;
    st.spec_hash = spec_hash;
    st.precision = Eigen::MatrixXd::Zero(p, p);
    st.weighted_sum = Eigen::VectorXd::Zero(p);
    if (mode == PoolMode::bayesian) {
        GaussianPrior pr = prior.value_or(GaussianPrior::flat(p));
        if (pr.mean.size() != p) throw std::invalid_argument("prior dimension mismatch");
        pr.validate();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(pr.covariance);
        st.precision = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
        st.precision = ((st.precision + st.precision.transpose()) / 2.0).eval();
        st.weighted_sum = st.precision * pr.mean;
    } else if (prior.has_value()) {
        throw std::invalid_argument("a prior only applies to bayesian pooling");
    }
    st.refresh();
    return st;
}

PooledState update_stream(const PooledState& state, const FitResult& fit) {
    if (fit.n_params() != state.n_params())
        throw std::invalid_argument("fit dimension does not match the pooled state");
    if (!state.spec_hash.empty() && !fit.spec_hash.empty() && fit.spec_hash != state.spec_hash)
        throw std::invalid_argument("spec mismatch: fit " + fit.spec_hash + " vs stream " +
                                    state.spec_hash);
    if (!fit.converged) throw std::invalid_argument("cannot pool a non-converged fit");

    const Eigen::MatrixXd& info = fit.information;
    if (!info.isApprox(info.transpose(), 1e-10))
        throw NumericalError("batch information matrix not symmetric");
    const std::vector<int> idx = informed_indices(info);
    if (idx.empty()) throw NumericalError("batch carries no information");
    {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(extract_block(info, idx));
        if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
            throw NumericalError("batch error covariance not positive definite");
    }

    PooledState next = state;
    if (next.spec_hash.empty()) next.spec_hash = fit.spec_hash;
    next.precision += info;
    next.weighted_sum += info * fit.beta;
    next.batches_seen += 1;
    next.refresh();
    return next;
}

PooledState pool_noniterative(const std::vector<FitResult>& fits, PoolMode mode,
                              const std::optional<GaussianPrior>& prior) {
    if (fits.empty()) throw std::invalid_argument("need at least one fit to pool");
    PooledState st = init_stream(mode, fits.front().n_params(), prior, fits.front().spec_hash);
    for (const FitResult& f : fits) {
        if (f.n_params() != st.n_params()) throw std::invalid_argument("fit dimensions differ");
        if (!st.spec_hash.empty() && !f.spec_hash.empty() && f.spec_hash != st.spec_hash)
            throw std::invalid_argument("spec mismatch across pooled fits");
        if (!f.converged) throw std::invalid_argument("cannot pool a non-converged fit");
        st.precision += f.information;
        st.weighted_sum += f.information * f.beta;
        st.batches_seen += 1;
    }
    st.refresh();
    return st;
}

std::pair<PooledState, FitResult> ingest_batch(const PooledState& state,
                                               const std::vector<Event>& raw_events, int n_actors,
                                               const std::vector<StatisticSpec>& specs,
                                               const ActorAttributes& attrs, ModelKind kind,
                                               const StreamOptions& opts,
                                               const HistoryState* carried) {
    if (raw_events.empty()) throw std::invalid_argument("empty batch");
    if (!(raw_events.front().time > state.last_time))
        throw std::invalid_argument("batch precedes stream frontier (batch starts at " +
                                    std::to_string(raw_events.front().time) + ", frontier at " +
                                    std::to_string(state.last_time) + ")");
    EventSequence seq;
    seq.events = raw_events;
    seq.n_actors = n_actors;
    seq.onset = state.last_time;
    seq.end_time = raw_events.back().time;

    FitOptions fopts = opts.fit;
    fopts.initial_history = opts.carry_history ? carried : nullptr;
    FitResult fit = fit_rem(seq, specs, attrs, kind, fopts);

    PooledState next = update_stream(state, fit);
    next.last_time = seq.end_time;
    return {std::move(next), std::move(fit)};
}

StreamSession::StreamSession(PooledState state, std::vector<StatisticSpec> specs,
                             ActorAttributes attrs, ModelKind kind, int n_actors,
                             StreamOptions opts)
    : state_(std::move(state)),
      specs_(std::move(specs)),
      attrs_(std::move(attrs)),
      kind_(kind),
      n_actors_(n_actors),
      opts_(opts) {
    const std::string expect = spec_hash(model_kind_name(kind_), n_actors_, specs_);
    if (state_.spec_hash.empty()) state_.spec_hash = expect;
    else if (state_.spec_hash != expect)
        throw std::invalid_argument("spec mismatch: state " + state_.spec_hash + " vs config " + expect);
    if (state_.n_params() != static_cast<int>(specs_.size()))
        throw std::invalid_argument("pooled state dimension does not match the spec list");
    if (opts_.carry_history) carried_.emplace(n_actors_);
}

std::optional<FitResult> StreamSession::push(const std::vector<Event>& raw_events) {
    if (raw_events.empty()) throw std::invalid_argument("empty batch");
    double frontier = pending_.empty() ? state_.last_time : pending_.back().time;
    for (const Event& e : raw_events) {
        if (!(e.time > frontier))
            throw std::invalid_argument("batch precedes stream frontier (event at " +
                                        std::to_string(e.time) + ", frontier at " +
                                        std::to_string(frontier) + ")");
        frontier = e.time;
    }
    pending_.insert(pending_.end(), raw_events.begin(), raw_events.end());
    if (static_cast<int>(pending_.size()) < opts_.min_batch) return std::nullopt;

    auto [next, fit] = ingest_batch(state_, pending_, n_actors_, specs_, attrs_, kind_, opts_,
                                    carried_ ? &*carried_ : nullptr);
    if (carried_)
        for (const Event& e : pending_) carried_->update(e);
    state_ = std::move(next);
    pending_.clear();
    return fit;
}

std::string StreamSession::checkpoint_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["mode"] = pool_mode_name(state_.mode);
    j["spec_hash"] = state_.spec_hash;
    j["p"] = state_.n_params();
    j["n_actors"] = n_actors_;
    j["model"] = model_kind_name(kind_);
    j["mean"] = vec_to_json(state_.mean);
    j["covariance"] = mat_to_rowmajor(state_.covariance);
    j["precision"] = mat_to_rowmajor(state_.precision);
    j["weighted_sum"] = vec_to_json(state_.weighted_sum);
    j["batches_seen"] = state_.batches_seen;
    j["last_time"] = state_.last_time;
    j["min_batch"] = opts_.min_batch;
    j["carry_history"] = opts_.carry_history;
    nlohmann::json pend = nlohmann::json::array();
    for (const Event& e : pending_) pend.push_back({e.time, e.sender, e.receiver});
    j["pending"] = std::move(pend);
    if (carried_) {
        nlohmann::json h;
        nlohmann::json counts = nlohmann::json::array();
        const auto& cm = carried_->counts_matrix();
        for (int i = 0; i < cm.rows(); ++i)
            for (int jj = 0; jj < cm.cols(); ++jj) counts.push_back(cm(i, jj));
        h["counts"] = std::move(counts);
        auto lists = [&](bool sent) {
            nlohmann::json a = nlohmann::json::array();
            for (int i = 0; i < n_actors_; ++i) {
                const auto& v = sent ? carried_->receivers_by_recency(i)
                                     : carried_->senders_by_recency(i);
                a.push_back(v);
            }
            return a;
        };
        h["sent_recency"] = lists(true);
        h["recv_recency"] = lists(false);
        if (carried_->last_event())
            h["last"] = {carried_->last_event()->time, carried_->last_event()->sender,
                         carried_->last_event()->receiver};
        else
            h["last"] = nullptr;
        j["history"] = std::move(h);
    }
    j["checksum"] = hex64(fnv1a64(j.dump()));
    return j.dump(2);
}

void StreamSession::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write checkpoint: " + path);
    out << checkpoint_json() << "\n";
}

nlohmann::json parse_checkpoint_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("checkpoint corrupt (not valid JSON): ") + e.what());
    }
    if (!j.contains("checksum")) throw std::invalid_argument("checkpoint corrupt (missing checksum)");
    const std::string stored = j.at("checksum").get<std::string>();
    j.erase("checksum");
    if (hex64(fnv1a64(j.dump())) != stored)
        throw std::invalid_argument("checkpoint corrupt (checksum mismatch)");
    if (j.at("version").get<int>() != 1)
        throw std::invalid_argument("unsupported checkpoint version");
    return j;
}

StreamSession StreamSession::from_checkpoint_json(const std::string& text,
                                                  std::vector<StatisticSpec> specs,
                                                  ActorAttributes attrs, ModelKind kind,
                                                  int n_actors, StreamOptions opts) {
    nlohmann::json j = parse_checkpoint_json(text);

    const int p = j.at("p").get<int>();
    PooledState st;
    st.mode = parse_pool_mode(j.at("mode").get<std::string>());
    st.spec_hash = j.at("spec_hash").get<std::string>();
    st.batches_seen = j.at("batches_seen").get<int>();
    st.last_time = j.at("last_time").get<double>();
    st.precision = mat_from_rowmajor(j.at("precision"), p);
    st.weighted_sum = vec_from_json(j.at("weighted_sum"));
    st.refresh();

    if (j.at("n_actors").get<int>() != n_actors)
        throw std::invalid_argument("checkpoint actor count does not match the config");
    if (j.at("model").get<std::string>() != model_kind_name(kind))
        throw std::invalid_argument("checkpoint model kind does not match the config");
    opts.min_batch = j.value("min_batch", opts.min_batch);
    opts.carry_history = j.value("carry_history", opts.carry_history);

    StreamSession sess(std::move(st), std::move(specs), std::move(attrs), kind, n_actors, opts);
    for (const auto& row : j.at("pending")) {
        Event e;
        e.time = row.at(0).get<double>();
        e.sender = row.at(1).get<ActorId>();
        e.receiver = row.at(2).get<ActorId>();
        sess.pending_.push_back(e);
    }
    if (opts.carry_history && j.contains("history")) {
        const auto& h = j.at("history");
        Eigen::MatrixXi counts(n_actors, n_actors);
        const auto& flat = h.at("counts");
        std::size_t k = 0;
        for (int i = 0; i < n_actors; ++i)
            for (int jj = 0; jj < n_actors; ++jj) counts(i, jj) = flat.at(k++).get<int>();
        auto lists = [&](const char* key) {
            std::vector<std::vector<ActorId>> v;
            for (const auto& row : h.at(key)) v.push_back(row.get<std::vector<ActorId>>());
            return v;
        };
        std::optional<Event> last;
        if (!h.at("last").is_null()) {
            Event e;
            e.time = h.at("last").at(0).get<double>();
            e.sender = h.at("last").at(1).get<ActorId>();
            e.receiver = h.at("last").at(2).get<ActorId>();
            last = e;
        }
        sess.carried_ = HistoryState::restore(counts, lists("sent_recency"), lists("recv_recency"), last);
    }
    return sess;
}

StreamSession StreamSession::load(const std::string& path, std::vector<StatisticSpec> specs,
                                  ActorAttributes attrs, ModelKind kind, int n_actors,
                                  StreamOptions opts) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open checkpoint: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_checkpoint_json(ss.str(), std::move(specs), std::move(attrs), kind, n_actors, opts);
}

}  // namespace rem
