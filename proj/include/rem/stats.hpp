#ifndef REM_STATS_HPP
#define REM_STATS_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rem/types.hpp"

namespace rem {

enum class StatKind {
    intercept,
    inertia,
    reciprocity,
    indegree_sender,
    indegree_receiver,
    outdegree_sender,
    outdegree_receiver,
    otp,   // outgoing two-paths  s->h->r
    itp,   // incoming two-paths  r->h->s
    osp,   // outgoing shared partners (s->h and r->h)
    isp,   // incoming shared partners (h->s and h->r)
    ps_AB_BA,
    ps_AB_BY,
    ps_AB_XA,
    ps_AB_XB,
    ps_AB_XY,
    ps_AB_AY,
    rrank_send,
    rrank_receive,
    same_attribute,        // args: attribute (categorical)
    difference_attribute,  // args: attribute (numeric); value(s) - value(r)
    and_not,               // args: attr1, attr2; 1 if same on attr1 and different on attr2
    interaction,           // args: indices of two earlier spec entries (product of final columns)
};

enum class Scaling { raw, standardized };  // standardized = per event across the D rows

struct StatisticSpec {
    StatKind kind = StatKind::intercept;
    Scaling scaling = Scaling::raw;
    std::string attr1, attr2;      // attribute-based kinds
    int parent_i = -1, parent_j = -1;  // interaction parents (indices into the spec list)

    std::string name(const std::vector<StatisticSpec>& all) const;
};

const char* stat_kind_name(StatKind k);
std::optional<StatKind> parse_stat_kind(const std::string& s);

// Validates parent references, attribute presence/kind, and the at-most-one
// intercept rule. Throws std::invalid_argument on violations.
void validate_specs(const std::vector<StatisticSpec>& specs, const ActorAttributes& attrs);

// Canonical signature of (model kind label + specs + risk-set size); equal
// signatures mean slices/fits are comparable. Hashed into spec_hash.
std::string spec_signature(const std::string& model_label, int n_actors,
                           const std::vector<StatisticSpec>& specs);
std::string spec_hash(const std::string& model_label, int n_actors,
                      const std::vector<StatisticSpec>& specs);

// Event history bookkeeping sufficient for every supported statistic:
// dyadic counts, degree margins, recency orders, and the last event.
class HistoryState {
  public:
    explicit HistoryState(int n_actors);

    void update(const Event& ev);
    void reset();

    int n_actors() const { return n_; }
    long n_seen() const { return n_seen_; }
    int count(ActorId s, ActorId r) const { return counts_(s, r); }
    const Eigen::MatrixXi& counts_matrix() const { return counts_; }
    int out_degree(ActorId a) const { return out_deg_[a]; }
    int in_degree(ActorId a) const { return in_deg_[a]; }
    const std::optional<Event>& last_event() const { return last_; }
    // Receivers of s, most recent first / senders to a, most recent first.
    const std::vector<ActorId>& receivers_by_recency(ActorId s) const { return sent_rank_[s]; }
    const std::vector<ActorId>& senders_by_recency(ActorId a) const { return recv_rank_[a]; }

    std::size_t memory_bytes() const;

    // Rebuild from persisted pieces (degrees recomputed from the count matrix;
    // inconsistent recency lists are rejected).
    static HistoryState restore(const Eigen::MatrixXi& counts,
                                std::vector<std::vector<ActorId>> sent_rank,
                                std::vector<std::vector<ActorId>> recv_rank,
                                std::optional<Event> last);

  private:
    int n_;
    long n_seen_ = 0;
    Eigen::MatrixXi counts_;
    Eigen::VectorXi out_deg_, in_deg_;
    std::vector<std::vector<ActorId>> sent_rank_, recv_rank_;
    std::optional<Event> last_;
};

// D x P covariate matrix for one decision point; rows follow the RiskSet
// enumeration, columns the spec order. Uses only events already consumed by
// `state` (strictly before the current event).
Eigen::MatrixXd compute_slice(const HistoryState& state, const std::vector<StatisticSpec>& specs,
                              const ActorAttributes& attrs, const RiskSet& risk);

// Sequential access to the per-event covariate slices of a sequence, plus the
// post-final-event slice used by the observation-end survival term. Sources
// are single-consumer; reset() rewinds to event 0.
class SliceSource {
  public:
    virtual ~SliceSource() = default;
    virtual void reset() = 0;
    virtual const Eigen::MatrixXd& next() = 0;      // call exactly n_events() times per pass
    virtual const Eigen::MatrixXd& terminal() = 0;  // valid after consuming all events
    virtual int n_events() const = 0;
    virtual int n_cols() const = 0;
    virtual std::size_t peak_bytes() const = 0;  // high-water mark of slice storage
};

// O(D*P) memory: recomputes slices on every pass from a rolling history.
// `initial` seeds the history with earlier events (cross-batch carry-over).
class StreamingSliceSource final : public SliceSource {
  public:
    StreamingSliceSource(const EventSequence& seq, const std::vector<StatisticSpec>& specs,
                         const ActorAttributes& attrs, const HistoryState* initial = nullptr);
    void reset() override;
    const Eigen::MatrixXd& next() override;
    const Eigen::MatrixXd& terminal() override;
    int n_events() const override { return static_cast<int>(seq_->events.size()); }
    int n_cols() const override { return static_cast<int>(specs_->size()); }
    std::size_t peak_bytes() const override;

  private:
    const EventSequence* seq_;
    const std::vector<StatisticSpec>* specs_;
    const ActorAttributes* attrs_;
    RiskSet risk_;
    HistoryState initial_, hist_;
    int idx_ = 0;
    Eigen::MatrixXd buf_;
};

// O(M*D*P) memory: everything precomputed; passes are cheap. `budget_bytes`
// (if nonzero) caps the estimated allocation up front.
class MaterializedSliceSource final : public SliceSource {
  public:
    MaterializedSliceSource(const EventSequence& seq, const std::vector<StatisticSpec>& specs,
                            const ActorAttributes& attrs, std::size_t budget_bytes = 0,
                            const HistoryState* initial = nullptr);
    void reset() override { idx_ = 0; }
    const Eigen::MatrixXd& next() override;
    const Eigen::MatrixXd& terminal() override { return terminal_; }
    int n_events() const override { return static_cast<int>(slices_.size()); }
    int n_cols() const override { return p_; }
    std::size_t peak_bytes() const override { return bytes_; }

  private:
    std::vector<Eigen::MatrixXd> slices_;
    Eigen::MatrixXd terminal_;
    int idx_ = 0;
    int p_ = 0;
    std::size_t bytes_ = 0;
};

}  // namespace rem

#endif  // REM_STATS_HPP
