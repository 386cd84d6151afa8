#include "rem/stats.hpp"

#include <algorithm>
#include <cmath>

#include "rem/hash.hpp"

namespace rem {

namespace {

struct KindName {
    StatKind kind;
    const char* name;
};

constexpr KindName kKindNames[] = {
    {StatKind::intercept, "intercept"},
    {StatKind::inertia, "inertia"},
    {StatKind::reciprocity, "reciprocity"},
    {StatKind::indegree_sender, "indegree_sender"},
    {StatKind::indegree_receiver, "indegree_receiver"},
    {StatKind::outdegree_sender, "outdegree_sender"},
    {StatKind::outdegree_receiver, "outdegree_receiver"},
    {StatKind::otp, "otp"},
    {StatKind::itp, "itp"},
    {StatKind::osp, "osp"},
    {StatKind::isp, "isp"},
    {StatKind::ps_AB_BA, "ps_AB_BA"},
    {StatKind::ps_AB_BY, "ps_AB_BY"},
    {StatKind::ps_AB_XA, "ps_AB_XA"},
    {StatKind::ps_AB_XB, "ps_AB_XB"},
    {StatKind::ps_AB_XY, "ps_AB_XY"},
    {StatKind::ps_AB_AY, "ps_AB_AY"},
    {StatKind::rrank_send, "rrank_send"},
    {StatKind::rrank_receive, "rrank_receive"},
    {StatKind::same_attribute, "same"},
    {StatKind::difference_attribute, "difference"},
    {StatKind::and_not, "and_not"},
    {StatKind::interaction, "interaction"},
};

}  // namespace

const char* stat_kind_name(StatKind k) {
    for (const auto& kn : kKindNames)
        if (kn.kind == k) return kn.name;
    return "?";
}

std::optional<StatKind> parse_stat_kind(const std::string& s) {
    for (const auto& kn : kKindNames)
        if (s == kn.name) return kn.kind;
    return std::nullopt;
}

std::string StatisticSpec::name(const std::vector<StatisticSpec>& all) const {
    switch (kind) {
        case StatKind::same_attribute:
            return "same(" + attr1 + ")";
        case StatKind::difference_attribute:
            return "difference(" + attr1 + ")";
        case StatKind::and_not:
            return "and_not(" + attr1 + "," + attr2 + ")";
        case StatKind::interaction: {
            auto pname = [&](int p) {
                return (p >= 0 && p < static_cast<int>(all.size())) ? all[static_cast<std::size_t>(p)].name(all)
                                                                    : std::string("?");
            };
            return pname(parent_i) + "*" + pname(parent_j);
        }
        default:
            return stat_kind_name(kind);
    }
}

void validate_specs(const std::vector<StatisticSpec>& specs, const ActorAttributes& attrs) {
    int intercepts = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const StatisticSpec& sp = specs[i];
        switch (sp.kind) {
            case StatKind::intercept:
                if (++intercepts > 1) throw std::invalid_argument("model spec has more than one intercept");
                break;
            case StatKind::same_attribute:
            case StatKind::and_not: {
                for (const std::string* a : {&sp.attr1, sp.kind == StatKind::and_not ? &sp.attr2 : &sp.attr1}) {
                    if (a->empty()) throw std::invalid_argument(std::string(stat_kind_name(sp.kind)) + " needs an attribute name");
                    if (!attrs.has(*a)) throw std::invalid_argument("unknown attribute: " + *a);
                    if (attrs.column(*a).numeric)
                        throw std::invalid_argument("attribute " + *a + " must be categorical for " + stat_kind_name(sp.kind));
                }
                break;
            }
            case StatKind::difference_attribute:
                if (sp.attr1.empty()) throw std::invalid_argument("difference needs an attribute name");
                if (!attrs.has(sp.attr1)) throw std::invalid_argument("unknown attribute: " + sp.attr1);
                if (!attrs.column(sp.attr1).numeric)
                    throw std::invalid_argument("attribute " + sp.attr1 + " must be numeric for difference");
                break;
            case StatKind::interaction:
                if (sp.parent_i < 0 || sp.parent_j < 0 || sp.parent_i >= static_cast<int>(i) ||
                    sp.parent_j >= static_cast<int>(i))
                    throw std::invalid_argument("interaction parents must reference earlier spec entries");
                if (specs[static_cast<std::size_t>(sp.parent_i)].kind == StatKind::interaction ||
                    specs[static_cast<std::size_t>(sp.parent_j)].kind == StatKind::interaction) {
                    // allowed: chains still reference earlier entries only
                }
                break;
            default:
                break;
        }
    }
}

std::string spec_signature(const std::string& model_label, int n_actors,
                           const std::vector<StatisticSpec>& specs) {
    std::string sig = model_label + ";N=" + std::to_string(n_actors) + ";";
    for (const auto& sp : specs) {
        sig += stat_kind_name(sp.kind);
        if (!sp.attr1.empty() || !sp.attr2.empty()) sig += "(" + sp.attr1 + "," + sp.attr2 + ")";
        if (sp.kind == StatKind::interaction)
            sig += "(" + std::to_string(sp.parent_i) + "," + std::to_string(sp.parent_j) + ")";
        sig += sp.scaling == Scaling::standardized ? "[std]" : "[raw]";
        sig += "|";
    }
    return sig;
}

std::string spec_hash(const std::string& model_label, int n_actors,
                      const std::vector<StatisticSpec>& specs) {
    return hex64(fnv1a64(spec_signature(model_label, n_actors, specs)));
}

HistoryState::HistoryState(int n_actors)
    : n_(n_actors),
      counts_(Eigen::MatrixXi::Zero(n_actors, n_actors)),
      out_deg_(Eigen::VectorXi::Zero(n_actors)),
      in_deg_(Eigen::VectorXi::Zero(n_actors)),
      sent_rank_(static_cast<std::size_t>(n_actors)),
      recv_rank_(static_cast<std::size_t>(n_actors)) {}

void HistoryState::update(const Event& ev) {
    counts_(ev.sender, ev.receiver) += 1;
    out_deg_[ev.sender] += 1;
    in_deg_[ev.receiver] += 1;
    auto promote = [](std::vector<ActorId>& order, ActorId a) {
        auto it = std::find(order.begin(), order.end(), a);
        if (it != order.end()) order.erase(it);
        order.insert(order.begin(), a);
    };
    promote(sent_rank_[static_cast<std::size_t>(ev.sender)], ev.receiver);
    promote(recv_rank_[static_cast<std::size_t>(ev.receiver)], ev.sender);
    last_ = ev;
    ++n_seen_;
}

void HistoryState::reset() {
    counts_.setZero();
    out_deg_.setZero();
    in_deg_.setZero();
    for (auto& v : sent_rank_) v.clear();
    for (auto& v : recv_rank_) v.clear();
    last_.reset();
    n_seen_ = 0;
}

HistoryState HistoryState::restore(const Eigen::MatrixXi& counts,
                                   std::vector<std::vector<ActorId>> sent_rank,
                                   std::vector<std::vector<ActorId>> recv_rank,
                                   std::optional<Event> last) {
    const int n = static_cast<int>(counts.rows());
    if (counts.cols() != n) throw std::invalid_argument("history count matrix must be square");
    HistoryState st(n);
    st.counts_ = counts;
    st.out_deg_ = counts.rowwise().sum();
    st.in_deg_ = counts.colwise().sum().transpose();
    st.n_seen_ = counts.sum();
    if (static_cast<int>(sent_rank.size()) != n || static_cast<int>(recv_rank.size()) != n)
        throw std::invalid_argument("history recency lists have wrong length");
    if (counts.minCoeff() < 0) throw std::invalid_argument("history counts must be nonnegative");
    // Recency lists must name exactly the partners with a positive count.
    auto check_lists = [&](const std::vector<std::vector<ActorId>>& lists, bool by_row) {
        for (int a = 0; a < n; ++a) {
            std::vector<char> seen(static_cast<std::size_t>(n), 0);
            for (ActorId other : lists[static_cast<std::size_t>(a)]) {
                const bool in_range = other >= 0 && other < n && other != a;
                const int c = in_range ? (by_row ? counts(a, other) : counts(other, a)) : 0;
                if (!in_range || seen[static_cast<std::size_t>(other)] || c <= 0)
                    throw std::invalid_argument("history recency lists disagree with counts");
                seen[static_cast<std::size_t>(other)] = 1;
            }
            for (int other = 0; other < n; ++other) {
                const int c = by_row ? counts(a, other) : counts(other, a);
                if (other != a && c > 0 && !seen[static_cast<std::size_t>(other)])
                    throw std::invalid_argument("history recency lists disagree with counts");
            }
        }
    };
    check_lists(sent_rank, true);
    check_lists(recv_rank, false);
    st.sent_rank_ = std::move(sent_rank);
    st.recv_rank_ = std::move(recv_rank);
    st.last_ = last;
    return st;
}

std::size_t HistoryState::memory_bytes() const {
    std::size_t b = static_cast<std::size_t>(counts_.size()) * sizeof(int) +
                    static_cast<std::size_t>(out_deg_.size() + in_deg_.size()) * sizeof(int);
    for (const auto& v : sent_rank_) b += v.capacity() * sizeof(ActorId);
    for (const auto& v : recv_rank_) b += v.capacity() * sizeof(ActorId);
    return b;
}

namespace {

void fill_column(const HistoryState& st, const StatisticSpec& sp,
                 const std::vector<StatisticSpec>& specs, const ActorAttributes& attrs,
                 const RiskSet& risk, Eigen::MatrixXd& out, int c) {
    const int n = risk.n_actors();
    auto col = out.col(c);

    switch (sp.kind) {
        case StatKind::intercept:
            col.setOnes();
            return;
        case StatKind::inertia:
        case StatKind::reciprocity:
        case StatKind::indegree_sender:
        case StatKind::indegree_receiver:
        case StatKind::outdegree_sender:
        case StatKind::outdegree_receiver: {
            for (int s = 0; s < n; ++s) {
                for (int r = 0; r < n; ++r) {
                    if (r == s) continue;
                    double v = 0;
                    switch (sp.kind) {
                        case StatKind::inertia: v = st.count(s, r); break;
                        case StatKind::reciprocity: v = st.count(r, s); break;
                        case StatKind::indegree_sender: v = st.in_degree(s); break;
                        case StatKind::indegree_receiver: v = st.in_degree(r); break;
                        case StatKind::outdegree_sender: v = st.out_degree(s); break;
                        case StatKind::outdegree_receiver: v = st.out_degree(r); break;
                        default: break;
                    }
                    col[risk.index(s, r)] = v;
                }
            }
            return;
        }
        case StatKind::otp:
        case StatKind::itp:
        case StatKind::osp:
        case StatKind::isp: {
            for (int s = 0; s < n; ++s) {
                for (int r = 0; r < n; ++r) {
                    if (r == s) continue;
                    long acc = 0;
                    for (int h = 0; h < n; ++h) {
                        if (h == s || h == r) continue;
                        int a, b;
                        switch (sp.kind) {
                            case StatKind::otp: a = st.count(s, h); b = st.count(h, r); break;
                            case StatKind::itp: a = st.count(h, s); b = st.count(r, h); break;
                            case StatKind::osp: a = st.count(s, h); b = st.count(r, h); break;
                            default:            a = st.count(h, s); b = st.count(h, r); break;
                        }
                        acc += std::min(a, b);
                    }
                    col[risk.index(s, r)] = static_cast<double>(acc);
                }
            }
            return;
        }
        case StatKind::ps_AB_BA:
        case StatKind::ps_AB_BY:
        case StatKind::ps_AB_XA:
        case StatKind::ps_AB_XB:
        case StatKind::ps_AB_XY:
        case StatKind::ps_AB_AY: {
            col.setZero();
            const auto& last = st.last_event();
            if (!last) return;  // all zero before any event
            const ActorId A = last->sender, B = last->receiver;
            switch (sp.kind) {
                case StatKind::ps_AB_BA:
                    col[risk.index(B, A)] = 1.0;
                    break;
                case StatKind::ps_AB_BY:
                    for (ActorId y = 0; y < n; ++y)
                        if (y != A && y != B) col[risk.index(B, y)] = 1.0;
                    break;
                case StatKind::ps_AB_XA:
                    for (ActorId x = 0; x < n; ++x)
                        if (x != A && x != B) col[risk.index(x, A)] = 1.0;
                    break;
                case StatKind::ps_AB_XB:
                    for (ActorId x = 0; x < n; ++x)
                        if (x != A && x != B) col[risk.index(x, B)] = 1.0;
                    break;
                case StatKind::ps_AB_AY:
                    for (ActorId y = 0; y < n; ++y)
                        if (y != A && y != B) col[risk.index(A, y)] = 1.0;
                    break;
                default:  // ps_AB_XY
                    for (ActorId x = 0; x < n; ++x) {
                        if (x == A || x == B) continue;
                        for (ActorId y = 0; y < n; ++y)
                            if (y != x && y != A && y != B) col[risk.index(x, y)] = 1.0;
                    }
                    break;
            }
            return;
        }
        case StatKind::rrank_send:
        case StatKind::rrank_receive: {
            // 1/rank of r in s's recency order (receivers of s, or senders to s).
            for (ActorId s = 0; s < n; ++s) {
                const auto& order = sp.kind == StatKind::rrank_send ? st.receivers_by_recency(s)
                                                                    : st.senders_by_recency(s);
                for (ActorId r = 0; r < n; ++r)
                    if (r != s) col[risk.index(s, r)] = 0.0;
                for (std::size_t pos = 0; pos < order.size(); ++pos)
                    col[risk.index(s, order[pos])] = 1.0 / static_cast<double>(pos + 1);
            }
            return;
        }
        case StatKind::same_attribute:
        case StatKind::and_not: {
            const AttributeColumn& a = attrs.column(sp.attr1);
            const AttributeColumn* b = sp.kind == StatKind::and_not ? &attrs.column(sp.attr2) : nullptr;
            for (int s = 0; s < n; ++s) {
                for (int r = 0; r < n; ++r) {
                    if (r == s) continue;
                    bool same_a = a.codes[static_cast<std::size_t>(s)] == a.codes[static_cast<std::size_t>(r)];
                    bool v = same_a;
                    if (b) v = same_a && (b->codes[static_cast<std::size_t>(s)] != b->codes[static_cast<std::size_t>(r)]);
                    col[risk.index(s, r)] = v ? 1.0 : 0.0;
                }
            }
            return;
        }
        case StatKind::difference_attribute: {
            const AttributeColumn& a = attrs.column(sp.attr1);
            for (int s = 0; s < n; ++s)
                for (int r = 0; r < n; ++r)
                    if (r != s)
                        col[risk.index(s, r)] =
                            a.values[static_cast<std::size_t>(s)] - a.values[static_cast<std::size_t>(r)];
            return;
        }
        case StatKind::interaction: {
            (void)specs;
            col = out.col(sp.parent_i).cwiseProduct(out.col(sp.parent_j));
            return;
        }
    }
}

void apply_scaling(const StatisticSpec& sp, Eigen::MatrixXd& out, int c) {
    if (sp.scaling != Scaling::standardized || sp.kind == StatKind::intercept) return;
    auto col = out.col(c);
    const double d = static_cast<double>(col.size());
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / d;
    if (var <= 0.0) {
        col.setZero();
    } else {
        col = (col.array() - mean) / std::sqrt(var);
    }
}

void compute_slice_into(const HistoryState& state, const std::vector<StatisticSpec>& specs,
                        const ActorAttributes& attrs, const RiskSet& risk, Eigen::MatrixXd& out) {
    out.resize(risk.size(), static_cast<int>(specs.size()));
    for (int c = 0; c < static_cast<int>(specs.size()); ++c) {
        fill_column(state, specs[static_cast<std::size_t>(c)], specs, attrs, risk, out, c);
        apply_scaling(specs[static_cast<std::size_t>(c)], out, c);
    }
}

}  // namespace

Eigen::MatrixXd compute_slice(const HistoryState& state, const std::vector<StatisticSpec>& specs,
                              const ActorAttributes& attrs, const RiskSet& risk) {
    Eigen::MatrixXd out;
    compute_slice_into(state, specs, attrs, risk, out);
    return out;
}

StreamingSliceSource::StreamingSliceSource(const EventSequence& seq,
                                           const std::vector<StatisticSpec>& specs,
                                           const ActorAttributes& attrs,
                                           const HistoryState* initial)
    : seq_(&seq),
      specs_(&specs),
      attrs_(&attrs),
      risk_(seq.n_actors),
      initial_(initial ? *initial : HistoryState(seq.n_actors)),
      hist_(initial_) {
    if (initial_.n_actors() != seq.n_actors)
        throw std::invalid_argument("carried history actor count does not match the sequence");
    buf_.resize(risk_.size(), static_cast<int>(specs.size()));
}

void StreamingSliceSource::reset() {
    hist_ = initial_;
    idx_ = 0;
}

const Eigen::MatrixXd& StreamingSliceSource::next() {
    if (idx_ >= n_events()) throw std::logic_error("slice source exhausted");
    compute_slice_into(hist_, *specs_, *attrs_, risk_, buf_);
    hist_.update(seq_->events[static_cast<std::size_t>(idx_)]);
    ++idx_;
    return buf_;
}

const Eigen::MatrixXd& StreamingSliceSource::terminal() {
    if (idx_ != n_events()) throw std::logic_error("terminal slice requested before consuming all events");
    compute_slice_into(hist_, *specs_, *attrs_, risk_, buf_);
    return buf_;
}

std::size_t StreamingSliceSource::peak_bytes() const {
    return static_cast<std::size_t>(buf_.size()) * sizeof(double) + hist_.memory_bytes();
}

MaterializedSliceSource::MaterializedSliceSource(const EventSequence& seq,
                                                 const std::vector<StatisticSpec>& specs,
                                                 const ActorAttributes& attrs,
                                                 std::size_t budget_bytes,
                                                 const HistoryState* initial)
    : p_(static_cast<int>(specs.size())) {
    RiskSet risk(seq.n_actors);
    const std::size_t m = seq.events.size();
    const std::size_t est = (m + 1) * static_cast<std::size_t>(risk.size()) *
                            static_cast<std::size_t>(p_) * sizeof(double);
    if (budget_bytes != 0 && est > budget_bytes) {
        throw NumericalError("materialized covariates need about " + std::to_string(est) +
                             " bytes, over the budget of " + std::to_string(budget_bytes));
    }
    HistoryState hist = initial ? *initial : HistoryState(seq.n_actors);
    if (hist.n_actors() != seq.n_actors)
        throw std::invalid_argument("carried history actor count does not match the sequence");
    slices_.reserve(m);
    for (const Event& ev : seq.events) {
        slices_.push_back(compute_slice(hist, specs, attrs, risk));
        hist.update(ev);
        bytes_ += static_cast<std::size_t>(slices_.back().size()) * sizeof(double);
    }
    terminal_ = compute_slice(hist, specs, attrs, risk);
    bytes_ += static_cast<std::size_t>(terminal_.size()) * sizeof(double);
}

const Eigen::MatrixXd& MaterializedSliceSource::next() {
    if (idx_ >= n_events()) throw std::logic_error("slice source exhausted");
    return slices_[static_cast<std::size_t>(idx_++)];
}

}  // namespace rem
