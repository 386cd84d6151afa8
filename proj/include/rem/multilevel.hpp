#ifndef REM_MULTILEVEL_HPP
#define REM_MULTILEVEL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rem/estimate.hpp"
#include "rem/types.hpp"

namespace rem {

// Per-cluster pseudo-data: theta_hat stacks the fixed-effect block psi_hat
// (length F) over the random-effect block beta_hat (length P); omega_hat is
// the matching (F+P)x(F+P) error covariance.
struct ClusterFit {
    std::string cluster_id;
    Eigen::VectorXd theta_hat;
    Eigen::MatrixXd omega_hat;
    int n_fixed = 0;
    int n_events = 0;

    int n_random() const { return static_cast<int>(theta_hat.size()) - n_fixed; }
    Eigen::VectorXd psi_hat() const { return theta_hat.head(n_fixed); }
    Eigen::VectorXd beta_hat() const { return theta_hat.tail(n_random()); }
    void validate() const;  // dimensions + symmetric positive definite omega
};

struct MultilevelOptions {
    double tol = 1e-8;
    int max_sweeps = 10000;
    double sigma_floor = 1e-10;     // eigenvalue floor keeping Sigma invertible
    bool marginal_weights = false;  // sensitivity variant: weight the mean update
                                    // by (omega_k + Sigma)^-1 instead of omega_k^-1
};

struct MultilevelEstimate {
    Eigen::VectorXd mu;     // population means of the random effects
    Eigen::VectorXd psi;    // fixed effects (empty on the moment-iteration path)
    Eigen::MatrixXd delta;  // K x P cluster deviations
    Eigen::MatrixXd sigma;  // P x P heterogeneity covariance
    // Cluster-robust (sandwich) SEs for mu: with W_k = (omega_k + sigma)^-1 and
    // r_k = beta_k - mu, Var(mu) = A^-1 (sum_k W_k r_k r_k' W_k) A^-1 * K/(K-1),
    // A = sum_k W_k. Robust to the known downward bias of the point-deviation
    // Sigma estimator, which would make model-based SEs anti-conservative.
    Eigen::VectorXd se_mu;
    Eigen::VectorXd se_psi;
    bool converged = false;
    int sweeps = 0;
    int boundary_hits = 0;  // sweeps where the Sigma floor engaged
    bool monotone = true;   // joint log-likelihood never decreased (> 1e-10)
    std::vector<std::string> cluster_ids;
};

// Cyclic fixed-point iteration of the three moment estimators
//   delta_k = (omega_k^-1 + Sigma^-1)^-1 omega_k^-1 (beta_k - mu)
//   mu      = (sum omega_k^-1)^-1 sum omega_k^-1 (beta_k - delta_k)
//   Sigma   = K^-1 sum delta_k delta_k'
// until the largest parameter change drops below tol. Requires fully random
// effects (n_fixed = 0 on every cluster) and K >= 2.
MultilevelEstimate fit_random_effects_freq(const std::vector<ClusterFit>& fits,
                                           const MultilevelOptions& opts = {});

// Objective the iteration ascends (joint Gaussian log-likelihood of
// (beta_hat_k, delta_k) given mu, Sigma, up to constants). Exposed for the
// monotonicity property checks.
double random_effects_objective(const std::vector<ClusterFit>& fits, const Eigen::VectorXd& mu,
                                const Eigen::MatrixXd& delta, const Eigen::MatrixXd& sigma);

struct GibbsConfig {
    double eta = 2.0;    // Half-t degrees of freedom; 2 gives uniform correlations
    Eigen::VectorXd d;   // Half-t scales per random effect; empty = all 1e5
    int iterations = 5000;  // per chain, including burn-in
    int burn_in = 1000;
    int thin = 1;
    int chains = 4;
    std::uint64_t seed = 1;

    void validate() const;
    Eigen::VectorXd scales(int p) const;  // d padded to length p
};

struct ParamSummary {
    std::string name;
    double mean = 0, sd = 0, q025 = 0, q975 = 0;
    double rhat = 0, ess = 0, mcse = 0;
};

// Pooled output of all chains. Draws are retained post burn-in/thinning;
// delta draws are summarized on the fly (posterior means and split-chain
// scale reduction) rather than stored.
struct GibbsResult {
    int n_fixed = 0, n_random = 0, n_clusters = 0;
    std::vector<std::string> fixed_names, random_names, cluster_ids;
    // per chain: rows = retained iterations
    std::vector<Eigen::MatrixXd> theta_draws;  // cols: psi then mu (F+P)
    std::vector<Eigen::MatrixXd> sigma_draws;  // cols: vech(Sigma), lower triangle by column
    std::vector<Eigen::MatrixXd> alpha_draws;  // cols: P scale augmentations
    Eigen::MatrixXd delta_mean;                // K x P posterior means
    std::vector<ParamSummary> summaries;       // psi, mu, sigma (vech), alpha
    std::map<std::string, double> delta_rhat;  // split-chain R-hat per delta[k][p]
    double max_rhat = 0.0;                     // over every tracked parameter incl. delta
    bool all_sigma_pd = false;

    int retained_per_chain() const {
        return theta_draws.empty() ? 0 : static_cast<int>(theta_draws.front().rows());
    }
    Eigen::VectorXd posterior_mean_theta() const;
    Eigen::MatrixXd posterior_mean_sigma() const;
    const ParamSummary& summary(const std::string& name) const;
    // raw-draw CSV: chain,iteration,<param columns>
    void write_draws_csv(std::ostream& out) const;
};

// Blocked Gibbs sampler for the mixed-effects pool: flat prior on (psi, mu),
// histories (beta_k, psi_k) entering only through (theta_hat_k, omega_hat_k),
// Sigma under the matrix Half-t construction (Inverse-Wishart mixed over
// per-dimension Inverse-Gamma scales).
GibbsResult gibbs_mixed(const std::vector<ClusterFit>& fits, const GibbsConfig& cfg,
                        std::vector<std::string> fixed_names = {},
                        std::vector<std::string> random_names = {});

// Verification hooks -------------------------------------------------------

// Per-cluster derived quantities used by the sampler.
struct ClusterDerived {
    Eigen::MatrixXd omega_inv;  // (F+P)^2
    Eigen::MatrixXd s;          // conditional covariance of beta_hat given psi_hat
    Eigen::MatrixXd s_inv;
    Eigen::MatrixXd gain;       // omega_21 omega_11^-1 (P x F); empty when F=0
};
ClusterDerived derive_cluster(const ClusterFit& fit);

// Conditional N(mean, prec^-1) of delta_k given the rest. With F=0 the mean
// is exactly the moment iteration's delta update.
void delta_conditional(const ClusterFit& fit, const ClusterDerived& der, const Eigen::VectorXd& psi,
                       const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma_inv,
                       Eigen::VectorXd* mean_out, Eigen::MatrixXd* prec_out);

// Draws from the Sigma prior alone (alpha_i then Sigma | alpha); returns the
// correlation coordinates of each draw, one row per draw, lower triangle by
// column. Used by prior-predictive uniformity checks.
Eigen::MatrixXd sample_sigma_prior_correlations(int p, const GibbsConfig& cfg, int n_draws);

// Diagnostics ---------------------------------------------------------------

struct ShrinkageRow {
    std::string cluster_id;
    std::string effect;
    int n_events = 0;
    double mle = 0, multilevel = 0, shrinkage = 0;  // shrinkage = mle - multilevel
};
std::vector<ShrinkageRow> shrinkage_report(const std::vector<ClusterFit>& fits,
                                           const Eigen::VectorXd& mu, const Eigen::MatrixXd& delta,
                                           const std::vector<std::string>& effect_names);

struct MseReport {
    std::vector<std::string> effects;
    Eigen::VectorXd mse_multilevel;  // per effect, averaged over clusters
    Eigen::VectorXd mse_mle;
};
MseReport mse_study(const Eigen::MatrixXd& truths, const std::vector<ClusterFit>& fits,
                    const Eigen::VectorXd& mu, const Eigen::MatrixXd& delta,
                    const std::vector<std::string>& effect_names);

// Cluster-wise fitting ------------------------------------------------------

struct ClusterFitReport {
    std::vector<ClusterFit> fits;
    std::vector<std::string> excluded;  // "<cluster>: <reason>"
    std::vector<std::string> fixed_names, random_names;
    int n_fixed = 0;
};

// Independent per-cluster fits reordered into (fixed block, random block).
// `fixed_idx` lists spec entries treated as fixed effects. Clusters whose fit
// fails, does not converge, or drops columns are excluded with a note.
ClusterFitReport fit_clusters(const std::vector<EventSequence>& seqs,
                              const std::vector<std::string>& cluster_ids,
                              const std::vector<StatisticSpec>& specs, const ActorAttributes& attrs,
                              ModelKind kind, const std::vector<int>& fixed_idx = {},
                              const FitOptions& fit_opts = {});

// Convergence diagnostics shared with the tests: split-chain potential scale
// reduction and effective sample size over per-chain draw columns.
double split_rhat(const std::vector<Eigen::VectorXd>& chains);
double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);

}  // namespace rem

#endif  // REM_MULTILEVEL_HPP
