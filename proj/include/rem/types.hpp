#ifndef REM_TYPES_HPP
#define REM_TYPES_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rem {

// Numerical failures (overflow, divergence, non-PD matrices, ...) as opposed
// to invalid user input (std::invalid_argument). The CLI maps the former to
// exit code 2 and the latter to exit code 1.
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

using ActorId = std::int32_t;

struct Event {
    double time = 0.0;
    ActorId sender = -1;
    ActorId receiver = -1;
};

// Directed dyads (s,r), s != r, enumerated row-major by sender then receiver:
// (0,1),(0,2),...,(0,N-1),(1,0),(1,2),... Index layout is part of the on-disk
// and in-memory contract; covariate rows and rate vectors follow it.
class RiskSet {
  public:
    explicit RiskSet(int n_actors) : n_(n_actors) {
        if (n_actors < 2) throw std::invalid_argument("risk set needs at least 2 actors");
    }

    int n_actors() const { return n_; }
    int size() const { return n_ * (n_ - 1); }

    int index(ActorId s, ActorId r) const {
        return static_cast<int>(s) * (n_ - 1) + static_cast<int>(r) - (r > s ? 1 : 0);
    }

    std::pair<ActorId, ActorId> dyad(int idx) const {
        ActorId s = static_cast<ActorId>(idx / (n_ - 1));
        int rest = idx % (n_ - 1);
        ActorId r = static_cast<ActorId>(rest >= s ? rest + 1 : rest);
        return {s, r};
    }

  private:
    int n_;
};

// Time-ordered event sequence over a fixed actor set. `onset` is the clock
// origin (first waiting time is events[0].time - onset); `end_time` is the
// observation endpoint tau >= last event time. Sequences whose endpoint equals
// the last event carry no post-terminal exposure.
struct EventSequence {
    std::vector<Event> events;
    int n_actors = 0;
    double onset = 0.0;
    double end_time = 0.0;

    int n_events() const { return static_cast<int>(events.size()); }
    double last_time() const { return events.empty() ? onset : events.back().time; }
};

struct ValidationIssue {
    long index = -1;  // event row, or -1 for sequence-level problems
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }
    std::string summary() const;
};

// Checks ordering (strictly increasing times; ties are rejected), actor ids in
// [0, n_actors), no self-loops, onset < first time, end_time >= last time.
ValidationReport validate_sequence(const EventSequence& seq);

// Throws std::invalid_argument with the report summary if validation fails.
void require_valid(const EventSequence& seq);

// Per-actor exogenous covariates. Numeric columns hold doubles; categorical
// columns hold level codes plus the level labels. Every actor must have a
// value in every column.
struct AttributeColumn {
    bool numeric = true;
    std::vector<double> values;        // numeric columns
    std::vector<int> codes;            // categorical columns
    std::vector<std::string> levels;   // categorical level labels
};

class ActorAttributes {
  public:
    ActorAttributes() = default;

    void add_numeric(const std::string& name, std::vector<double> values);
    void add_categorical(const std::string& name, std::vector<int> codes,
                         std::vector<std::string> levels);

    bool has(const std::string& name) const { return cols_.count(name) > 0; }
    bool empty() const { return cols_.empty(); }
    int n_actors() const { return n_actors_; }

    const AttributeColumn& column(const std::string& name) const;
    double numeric_value(const std::string& name, ActorId a) const;
    int code(const std::string& name, ActorId a) const;
    std::vector<std::string> names() const;

    // Every column must cover actors 0..n_actors-1 exactly.
    void require_complete(int n_actors) const;

  private:
    std::map<std::string, AttributeColumn> cols_;
    int n_actors_ = 0;
};

}  // namespace rem

#endif  // REM_TYPES_HPP
