#ifndef REM_BASELINE_HPP
#define REM_BASELINE_HPP

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rem/estimate.hpp"
#include "rem/types.hpp"

namespace rem {

// Exact comparator: refit the full growing prefix at each boundary, with
// statistics recomputed over the entire prefix. Memory and time grow with
// prefix length by design — that growth is what the streaming path avoids.
struct ExactStep {
    int prefix_events = 0;
    FitResult fit;
    double wall_seconds = 0.0;
    std::size_t peak_bytes = 0;  // covariate storage for this refit
};

struct ExactStreamResult {
    std::vector<ExactStep> steps;
    std::string spec_hash;
};

// `boundaries` are strictly increasing prefix lengths (event counts); each
// refit sees events [0, b). Refuses up front when the largest prefix's
// materialized covariates would exceed opts.materialize_budget.
ExactStreamResult fit_exact_stream(const EventSequence& full, const std::vector<int>& boundaries,
                                   const std::vector<StatisticSpec>& specs,
                                   const ActorAttributes& attrs, ModelKind kind,
                                   const FitOptions& opts = {});

// One streaming-side snapshot per batch, captured by the caller as the
// session advances.
struct PooledStep {
    int prefix_events = 0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    double wall_seconds = 0.0;   // time to fit + pool this batch
    std::size_t state_bytes = 0; // pooled-state footprint after the update
    std::string spec_hash;
};

struct EffectComparison {
    std::string effect;
    double exact = 0, pooled = 0;
    double abs_diff = 0, rel_diff = 0;  // relative to max(|exact|, 1e-12)
    double exact_width = 0, pooled_width = 0;  // 95% interval widths
    double pooled_se = 0;
    bool flagged = false;  // |exact - pooled| > 2 pooled SEs
};

struct ComparisonStep {
    int prefix_events = 0;
    std::vector<EffectComparison> effects;
    double exact_seconds = 0, pooled_seconds = 0;  // pooled: cumulative to this prefix
    std::size_t exact_bytes = 0, pooled_bytes = 0;
};

struct ComparisonReport {
    std::string spec_hash;
    std::vector<std::string> effect_names;
    std::vector<ComparisonStep> steps;

    nlohmann::json to_json() const;
    static ComparisonReport from_json(const nlohmann::json& j);
    void write_table(std::ostream& out) const;
};

// Aligns each exact step with the pooled snapshot at the same prefix length.
// Requires matching model signatures; throws on misaligned boundaries.
ComparisonReport compare(const ExactStreamResult& exact, const std::vector<PooledStep>& pooled,
                         const std::vector<std::string>& effect_names);

}  // namespace rem

#endif  // REM_BASELINE_HPP
