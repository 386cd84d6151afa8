#include "rem/likelihood.hpp"

#include <cmath>
#include <ostream>

namespace rem {

namespace {

constexpr double kMaxExponent = 700.0;  // exp() overflows shortly above this

[[noreturn]] void overflow_error(const RiskSet& risk, int event, int dyad_idx) {
    auto [s, r] = risk.dyad(dyad_idx);
    throw NumericalError("rate overflow at event " + std::to_string(event) + " for dyad (" +
                         std::to_string(s) + "," + std::to_string(r) + ")");
}

void check_exponents(const Eigen::VectorXd& eta, const RiskSet& risk, int event) {
    int idx;
    if (eta.maxCoeff(&idx) > kMaxExponent) overflow_error(risk, event, idx);
}

void check_beta(const Eigen::VectorXd& beta, const SliceSource& slices) {
    if (beta.size() != slices.n_cols())
        throw std::invalid_argument("beta length " + std::to_string(beta.size()) +
                                    " does not match " + std::to_string(slices.n_cols()) +
                                    " covariate columns");
}

}  // namespace

const char* model_kind_name(ModelKind k) {
    return k == ModelKind::temporal ? "temporal" : "ordinal";
}

LogLikEval loglik_temporal(const EventSequence& seq, SliceSource& slices,
                           const Eigen::VectorXd& beta) {
    check_beta(beta, slices);
    require_valid(seq);
    const RiskSet risk(seq.n_actors);
    const int p = slices.n_cols();

    LogLikEval out;
    out.gradient = Eigen::VectorXd::Zero(p);
    out.hessian = Eigen::MatrixXd::Zero(p, p);

    slices.reset();
    Eigen::VectorXd eta, lam;
    Eigen::MatrixXd work;
    double prev = seq.onset;
    for (int m = 0; m < seq.n_events(); ++m) {
        const Event& ev = seq.events[static_cast<std::size_t>(m)];
        const Eigen::MatrixXd& x = slices.next();
        const double delta = ev.time - prev;
        prev = ev.time;
        eta.noalias() = x * beta;
        check_exponents(eta, risk, m);
        lam = eta.array().exp();
        const int obs = risk.index(ev.sender, ev.receiver);
        out.value += eta[obs] - delta * lam.sum();
        out.gradient += x.row(obs).transpose();
        out.gradient.noalias() -= delta * (x.transpose() * lam);
        work.noalias() = lam.asDiagonal() * x;
        out.hessian.noalias() -= delta * (x.transpose() * work);
    }
    const double delta_tau = seq.end_time - prev;
    if (delta_tau > 0.0) {
        const Eigen::MatrixXd& x = slices.terminal();
        eta.noalias() = x * beta;
        check_exponents(eta, risk, seq.n_events());
        lam = eta.array().exp();
        out.value -= delta_tau * lam.sum();
        out.gradient.noalias() -= delta_tau * (x.transpose() * lam);
        work.noalias() = lam.asDiagonal() * x;
        out.hessian.noalias() -= delta_tau * (x.transpose() * work);
    }
    return out;
}

LogLikEval loglik_ordinal(const EventSequence& seq, SliceSource& slices,
                          const Eigen::VectorXd& beta, const std::vector<StatisticSpec>* specs) {
    check_beta(beta, slices);
    require_valid(seq);
    if (specs) {
        for (const auto& sp : *specs)
            if (sp.kind == StatKind::intercept)
                throw std::invalid_argument("intercept unidentified in ordinal model");
    }
    const RiskSet risk(seq.n_actors);
    const int p = slices.n_cols();

    LogLikEval out;
    out.gradient = Eigen::VectorXd::Zero(p);
    out.hessian = Eigen::MatrixXd::Zero(p, p);

    slices.reset();
    Eigen::VectorXd eta, w, pi, mu;
    Eigen::MatrixXd work;
    for (int m = 0; m < seq.n_events(); ++m) {
        const Event& ev = seq.events[static_cast<std::size_t>(m)];
        const Eigen::MatrixXd& x = slices.next();
        eta.noalias() = x * beta;
        const double emax = eta.maxCoeff();
        w = (eta.array() - emax).exp();
        const double wsum = w.sum();
        pi = w / wsum;
        const int obs = risk.index(ev.sender, ev.receiver);
        out.value += eta[obs] - (emax + std::log(wsum));
        mu.noalias() = x.transpose() * pi;
        out.gradient += x.row(obs).transpose() - mu;
        work.noalias() = pi.asDiagonal() * x;
        out.hessian.noalias() -= x.transpose() * work;
        out.hessian.noalias() += mu * mu.transpose();
    }
    return out;
}

LogLikEval loglik(ModelKind kind, const EventSequence& seq, SliceSource& slices,
                  const Eigen::VectorXd& beta, const std::vector<StatisticSpec>* specs) {
    return kind == ModelKind::temporal ? loglik_temporal(seq, slices, beta)
                                       : loglik_ordinal(seq, slices, beta, specs);
}

void poisson_expand(const EventSequence& seq, SliceSource& slices,
                    const std::function<void(const PoissonRow&)>& sink) {
    require_valid(seq);
    const RiskSet risk(seq.n_actors);
    slices.reset();
    PoissonRow row;
    double prev = seq.onset;
    for (int m = 0; m < seq.n_events(); ++m) {
        const Event& ev = seq.events[static_cast<std::size_t>(m)];
        const Eigen::MatrixXd& x = slices.next();
        const double delta = ev.time - prev;
        prev = ev.time;
        if (!(delta > 0.0))
            throw std::invalid_argument("zero inter-event time at event " + std::to_string(m));
        const int obs = risk.index(ev.sender, ev.receiver);
        row.event = m;
        row.offset = std::log(delta);
        for (int d = 0; d < risk.size(); ++d) {
            row.dyad = d;
            row.y = d == obs ? 1 : 0;
            row.covariates = x.row(d);
            sink(row);
        }
    }
    const double delta_tau = seq.end_time - prev;
    if (delta_tau > 0.0) {
        const Eigen::MatrixXd& x = slices.terminal();
        row.event = seq.n_events();
        row.offset = std::log(delta_tau);
        row.y = 0;
        for (int d = 0; d < risk.size(); ++d) {
            row.dyad = d;
            row.covariates = x.row(d);
            sink(row);
        }
    }
}

PoissonEval poisson_loglik(const EventSequence& seq, SliceSource& slices,
                           const Eigen::VectorXd& beta) {
    check_beta(beta, slices);
    const int p = slices.n_cols();
    PoissonEval out;
    out.eval.gradient = Eigen::VectorXd::Zero(p);
    out.eval.hessian = Eigen::MatrixXd::Zero(p, p);
    const int m_total = seq.n_events();
    poisson_expand(seq, slices, [&](const PoissonRow& row) {
        const double lin = row.offset + row.covariates.dot(beta);
        if (lin > kMaxExponent)
            throw NumericalError("rate overflow at event " + std::to_string(row.event) +
                                 " for dyad index " + std::to_string(row.dyad));
        const double mu = std::exp(lin);
        out.eval.value += row.y * lin - mu;
        out.eval.gradient += (row.y - mu) * row.covariates.transpose();
        out.eval.hessian.noalias() -= mu * (row.covariates.transpose() * row.covariates);
        if (row.y == 1 && row.event < m_total) out.offset_constant += row.offset;
    });
    return out;
}

void write_poisson_csv(std::ostream& out, const EventSequence& seq, SliceSource& slices) {
    out << "event,dyad,y,offset";
    for (int j = 1; j <= slices.n_cols(); ++j) out << ",x" << j;
    out << "\n";
    out.precision(17);
    poisson_expand(seq, slices, [&](const PoissonRow& row) {
        out << row.event << ',' << row.dyad << ',' << row.y << ',' << row.offset;
        for (int j = 0; j < row.covariates.size(); ++j) out << ',' << row.covariates[j];
        out << "\n";
    });
}

}  // namespace rem
