#ifndef REM_STREAM_HPP
#define REM_STREAM_HPP

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rem/estimate.hpp"
#include "rem/stats.hpp"
#include "rem/types.hpp"

namespace rem {

struct GaussianPrior {
    Eigen::VectorXd mean;        // beta_0
    Eigen::MatrixXd covariance;  // Sigma_0, symmetric positive definite

    static GaussianPrior flat(int p, double scale = 1e6);
    void validate() const;
};

enum class PoolMode { frequentist, bayesian };

const char* pool_mode_name(PoolMode m);
PoolMode parse_pool_mode(const std::string& s);

// Running fixed-effect pool over batch fits. The exact state is the precision
// sum (plus the prior precision in Bayesian mode) and the precision-weighted
// coefficient sum; mean/covariance are re-derived after every update so the
// published self-consistency (covariance = precision^-1, mean = covariance *
// weighted_sum) holds whenever the precision is invertible.
struct PooledState {
    PoolMode mode = PoolMode::frequentist;
    std::string spec_hash;
    int batches_seen = 0;
    double last_time = 0.0;

    Eigen::MatrixXd precision;     // sum of batch informations (+ prior)
    Eigen::VectorXd weighted_sum;  // sum of information * beta (+ prior part)

    Eigen::VectorXd mean;        // derived
    Eigen::MatrixXd covariance;  // derived

    int n_params() const { return static_cast<int>(weighted_sum.size()); }
    // Columns whose running precision row is still all-zero (no batch carried
    // information on them yet); mean/covariance entries there are zeros.
    std::vector<int> uninformed_columns() const;
    bool has_full_information() const { return uninformed_columns().empty(); }
    void refresh();  // recompute mean/covariance from the running state
    std::size_t memory_footprint_bytes() const;
};

PooledState init_stream(PoolMode mode, int p, const std::optional<GaussianPrior>& prior = std::nullopt,
                        const std::string& spec_hash = {});

// One meta-analytic update with a batch fit: precision and weighted sum grow
// by the fit's information; Bayesian mode differs from frequentist only by
// the prior already folded into the initial state.
PooledState update_stream(const PooledState& state, const FitResult& fit);

// Closed-form pooling of a whole fit list at once; equal to folding
// update_stream over the fits.
PooledState pool_noniterative(const std::vector<FitResult>& fits, PoolMode mode,
                              const std::optional<GaussianPrior>& prior = std::nullopt);

struct StreamOptions {
    int min_batch = 30;         // smaller pushes are buffered into the next batch
    bool carry_history = false; // batch statistics continue from prior batches' events
    FitOptions fit;
};

// Fits a batch against the stream frontier (onset = last_time, batch history
// restarting empty unless carried) and pools it. Batch times must lie
// strictly beyond the frontier.
std::pair<PooledState, FitResult> ingest_batch(const PooledState& state,
                                               const std::vector<Event>& raw_events,
                                               int n_actors,
                                               const std::vector<StatisticSpec>& specs,
                                               const ActorAttributes& attrs, ModelKind kind,
                                               const StreamOptions& opts = {},
                                               const HistoryState* carried = nullptr);

// Parses a checkpoint document, verifying its checksum and version; throws
// std::invalid_argument on corruption. Used by status/export style readers
// that do not need to resume the session.
nlohmann::json parse_checkpoint_json(const std::string& text);

// Stateful stream: buffering below the minimum batch size, optional history
// carry-over, and lossless checkpointing.
class StreamSession {
  public:
    StreamSession(PooledState state, std::vector<StatisticSpec> specs, ActorAttributes attrs,
                  ModelKind kind, int n_actors, StreamOptions opts);

    // Returns the batch fit if the push (plus any buffered events) reached the
    // minimum batch size and was fitted+pooled, nullopt if it was buffered.
    std::optional<FitResult> push(const std::vector<Event>& raw_events);

    const PooledState& state() const { return state_; }
    const std::vector<Event>& pending() const { return pending_; }
    const std::vector<StatisticSpec>& specs() const { return specs_; }
    int n_actors() const { return n_actors_; }
    ModelKind kind() const { return kind_; }
    const StreamOptions& options() const { return opts_; }

    void save(const std::string& path) const;
    std::string checkpoint_json() const;
    // Restores state/pending/history from the checkpoint; specs/attrs come
    // from the model config and must hash-match the checkpoint.
    static StreamSession load(const std::string& path, std::vector<StatisticSpec> specs,
                              ActorAttributes attrs, ModelKind kind, int n_actors,
                              StreamOptions opts);
    static StreamSession from_checkpoint_json(const std::string& text,
                                              std::vector<StatisticSpec> specs,
                                              ActorAttributes attrs, ModelKind kind, int n_actors,
                                              StreamOptions opts);

  private:
    PooledState state_;
    std::vector<StatisticSpec> specs_;
    ActorAttributes attrs_;
    ModelKind kind_;
    int n_actors_;
    StreamOptions opts_;
    std::vector<Event> pending_;
    std::optional<HistoryState> carried_;  // populated when carry_history is on
};

}  // namespace rem

#endif  // REM_STREAM_HPP
