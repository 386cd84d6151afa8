#ifndef REM_ESTIMATE_HPP
#define REM_ESTIMATE_HPP

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rem/likelihood.hpp"
#include "rem/stats.hpp"
#include "rem/types.hpp"

namespace rem {

struct FitOptions {
    double grad_tol = 1e-8;
    int max_iterations = 100;
    int max_halvings = 50;
    double beta_bound = 50.0;      // ||beta||_inf beyond this counts as divergence
    double ridge = 1e-8;           // applied once if the negative Hessian is not PD
    bool include_terminal = true;  // survival term on (t_M, tau]
    // Covariate slices: materialize when the estimate fits the budget,
    // otherwise stream every Newton pass. 0 = always stream.
    std::size_t materialize_budget = std::size_t(1) << 31;
    // History carried in from earlier events (statistics then cover the full
    // past instead of restarting at the sample boundary).
    const HistoryState* initial_history = nullptr;
};

// Per-batch / per-cluster MLE with its error covariance: the pseudo-data all
// pooling builds on. Dropped (within-sample constant) columns keep their slot:
// beta 0, zero information row/col, so precision-weighted pooling ignores them.
struct FitResult {
    Eigen::VectorXd beta;        // length P, 0 at dropped columns
    Eigen::MatrixXd covariance;  // P x P, kept-block (-H)^-1 embedded, 0 rows/cols at dropped
    Eigen::MatrixXd information; // P x P, kept-block -H embedded, 0 rows/cols at dropped
    double loglik = 0.0;
    int n_events = 0;
    bool converged = false;
    int iterations = 0;
    double gradient_inf_norm = 0.0;
    std::vector<int> dropped;  // spec indices dropped for this sample
    std::vector<std::string> warnings;
    std::string spec_hash;
    std::string model = "temporal";
    std::vector<std::string> names;  // display names, spec order

    int n_params() const { return static_cast<int>(beta.size()); }
    std::string to_json() const;
    static FitResult from_json(const std::string& text);
};

struct FitProfile {
    double wall_seconds = 0.0;
    std::size_t peak_slice_bytes = 0;
    int iterations = 0;
};

FitResult fit_rem(const EventSequence& seq, const std::vector<StatisticSpec>& specs,
                  const ActorAttributes& attrs, ModelKind kind, const FitOptions& opts = {},
                  FitProfile* profile = nullptr);

}  // namespace rem

#endif  // REM_ESTIMATE_HPP
