#ifndef REM_LIKELIHOOD_HPP
#define REM_LIKELIHOOD_HPP

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rem/stats.hpp"
#include "rem/types.hpp"

namespace rem {

enum class ModelKind { temporal, ordinal };

const char* model_kind_name(ModelKind k);

struct LogLikEval {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

// Duration likelihood: piecewise-constant exponential rates between events,
// observed dyad's rate at each event time, plus the survival of every dyad on
// (t_M, tau] when the observation window extends past the last event.
// Rates are exp(x'beta); exponents above 700 raise a rate-overflow error.
LogLikEval loglik_temporal(const EventSequence& seq, SliceSource& slices,
                           const Eigen::VectorXd& beta);

// Order likelihood: multinomial-logit probability of the observed dyad at each
// step. Waiting times drop out, so does any intercept: passing specs that
// contain one is an error ("intercept unidentified in ordinal model").
LogLikEval loglik_ordinal(const EventSequence& seq, SliceSource& slices,
                          const Eigen::VectorXd& beta,
                          const std::vector<StatisticSpec>* specs = nullptr);

LogLikEval loglik(ModelKind kind, const EventSequence& seq, SliceSource& slices,
                  const Eigen::VectorXd& beta,
                  const std::vector<StatisticSpec>* specs = nullptr);

// One row of the Poisson-regression view of the duration model: every dyad at
// every event becomes a count observation with offset log(inter-event time).
struct PoissonRow {
    int event = 0;  // event index; n_events() for the terminal exposure rows
    int dyad = 0;   // RiskSet index
    int y = 0;
    double offset = 0.0;          // log Delta_m
    Eigen::RowVectorXd covariates;
};

// Streams the M*D rows (plus D terminal rows when tau > t_M) without ever
// materializing them. Exactly one y=1 row per event.
void poisson_expand(const EventSequence& seq, SliceSource& slices,
                    const std::function<void(const PoissonRow&)>& sink);

// Poisson log-likelihood over the expanded rows (log y! terms are zero for
// 0/1 counts). value differs from loglik_temporal by offset_constant =
// sum_m log Delta_m; gradient and hessian agree exactly.
struct PoissonEval {
    LogLikEval eval;
    double offset_constant = 0.0;
};
PoissonEval poisson_loglik(const EventSequence& seq, SliceSource& slices,
                           const Eigen::VectorXd& beta);

// Debug dump `event,dyad,y,offset,x1..xP` for cross-checks against GLM tools.
void write_poisson_csv(std::ostream& out, const EventSequence& seq, SliceSource& slices);

}  // namespace rem

#endif  // REM_LIKELIHOOD_HPP
