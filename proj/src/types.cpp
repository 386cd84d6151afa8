#include "rem/types.hpp"

#include <cstdio>
#include <sstream>

#include "rem/hash.hpp"

namespace rem {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::string ValidationReport::summary() const {
    if (issues.empty()) return "ok";
    std::ostringstream os;
    os << issues.size() << " issue(s):";
    for (const auto& it : issues) {
        os << "\n  ";
        if (it.index >= 0) os << "event " << it.index << ": ";
        os << it.message;
    }
    return os.str();
}

ValidationReport validate_sequence(const EventSequence& seq) {
    ValidationReport rep;
    auto add = [&](long idx, const std::string& msg) { rep.issues.push_back({idx, msg}); };

    if (seq.n_actors < 2) add(-1, "need at least 2 actors");
    const long m = static_cast<long>(seq.events.size());
    for (long i = 0; i < m; ++i) {
        const Event& e = seq.events[static_cast<std::size_t>(i)];
        if (e.sender < 0 || e.sender >= seq.n_actors)
            add(i, "sender id out of range");
        if (e.receiver < 0 || e.receiver >= seq.n_actors)
            add(i, "receiver id out of range");
        if (e.sender == e.receiver) add(i, "self-loop (sender == receiver)");
        if (!(e.time == e.time)) add(i, "non-finite time");
        if (i > 0) {
            double prev = seq.events[static_cast<std::size_t>(i - 1)].time;
            if (e.time < prev) add(i, "times not sorted");
            else if (e.time == prev) add(i, "tied event times (ties are not supported)");
        }
    }
    if (m > 0) {
        if (!(seq.events.front().time > seq.onset))
            add(0, "first event time must be strictly after the onset");
        if (seq.end_time < seq.events.back().time)
            add(m - 1, "end_time is before the last event");
    }
    return rep;
}

void require_valid(const EventSequence& seq) {
    ValidationReport rep = validate_sequence(seq);
    if (!rep.ok()) throw std::invalid_argument("invalid event sequence: " + rep.summary());
}

void ActorAttributes::add_numeric(const std::string& name, std::vector<double> values) {
    if (has(name)) throw std::invalid_argument("duplicate attribute column: " + name);
    AttributeColumn col;
    col.numeric = true;
    col.values = std::move(values);
    n_actors_ = std::max(n_actors_, static_cast<int>(col.values.size()));
    cols_[name] = std::move(col);
}

void ActorAttributes::add_categorical(const std::string& name, std::vector<int> codes,
                                      std::vector<std::string> levels) {
    if (has(name)) throw std::invalid_argument("duplicate attribute column: " + name);
    AttributeColumn col;
    col.numeric = false;
    col.codes = std::move(codes);
    col.levels = std::move(levels);
    n_actors_ = std::max(n_actors_, static_cast<int>(col.codes.size()));
    cols_[name] = std::move(col);
}

const AttributeColumn& ActorAttributes::column(const std::string& name) const {
    auto it = cols_.find(name);
    if (it == cols_.end()) throw std::invalid_argument("unknown attribute column: " + name);
    return it->second;
}

double ActorAttributes::numeric_value(const std::string& name, ActorId a) const {
    const AttributeColumn& col = column(name);
    if (!col.numeric) throw std::invalid_argument("attribute " + name + " is categorical");
    return col.values.at(static_cast<std::size_t>(a));
}

int ActorAttributes::code(const std::string& name, ActorId a) const {
    const AttributeColumn& col = column(name);
    if (col.numeric) throw std::invalid_argument("attribute " + name + " is numeric");
    return col.codes.at(static_cast<std::size_t>(a));
}

std::vector<std::string> ActorAttributes::names() const {
    std::vector<std::string> out;
    for (const auto& kv : cols_) out.push_back(kv.first);
    return out;
}

void ActorAttributes::require_complete(int n_actors) const {
    for (const auto& kv : cols_) {
        std::size_t n = kv.second.numeric ? kv.second.values.size() : kv.second.codes.size();
        if (n != static_cast<std::size_t>(n_actors)) {
            throw std::invalid_argument("attribute " + kv.first + " covers " + std::to_string(n) +
                                        " actors, expected " + std::to_string(n_actors));
        }
    }
}

}  // namespace rem
