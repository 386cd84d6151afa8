#include "rem/csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace rem {
namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = b + s.size();
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e;
}

bool parse_nonneg_int(const std::string& s, long& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = b + s.size();
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e && out >= 0;
}

[[noreturn]] void fail(const std::string& src, long line, const std::string& msg) {
    throw std::invalid_argument(src + ":" + std::to_string(line) + ": " + msg);
}

struct RawRow {
    double time;
    std::string sender, receiver, cluster;
    long line;
};

}  // namespace

LoadedEvents read_events_csv(std::istream& in, const std::string& src,
                             std::optional<int> n_actors_override,
                             const std::vector<std::string>* label_table) {
    std::string line;
    long lineno = 0;
    if (!std::getline(in, line)) throw std::invalid_argument(src + ": empty file");
    ++lineno;
    std::vector<std::string> header = split_line(line);
    int c_time = -1, c_snd = -1, c_rcv = -1, c_cl = -1;
    for (int i = 0; i < static_cast<int>(header.size()); ++i) {
        if (header[i] == "time") c_time = i;
        else if (header[i] == "sender") c_snd = i;
        else if (header[i] == "receiver") c_rcv = i;
        else if (header[i] == "cluster") c_cl = i;
    }
    if (c_time < 0 || c_snd < 0 || c_rcv < 0)
        throw std::invalid_argument(src + ": header must contain time,sender,receiver");

    std::vector<RawRow> rows;
    bool all_int = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_line(line);
        int needed = std::max(std::max(c_time, c_snd), std::max(c_rcv, c_cl));
        if (static_cast<int>(cells.size()) <= needed) fail(src, lineno, "too few columns");
        RawRow r;
        if (!parse_double(cells[c_time], r.time)) fail(src, lineno, "bad time value '" + cells[c_time] + "'");
        r.sender = cells[c_snd];
        r.receiver = cells[c_rcv];
        r.cluster = c_cl >= 0 ? cells[c_cl] : "";
        r.line = lineno;
        long tmp;
        if (!parse_nonneg_int(r.sender, tmp) || !parse_nonneg_int(r.receiver, tmp)) all_int = false;
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::invalid_argument(src + ": no event rows");

    LoadedEvents out;

    // Group rows by cluster, preserving first-appearance order.
    std::map<std::string, int> cluster_idx;
    std::vector<std::vector<const RawRow*>> groups;
    for (const auto& r : rows) {
        auto it = cluster_idx.find(r.cluster);
        if (it == cluster_idx.end()) {
            it = cluster_idx.emplace(r.cluster, static_cast<int>(groups.size())).first;
            groups.emplace_back();
            out.cluster_ids.push_back(r.cluster.empty() ? "0" : r.cluster);
        }
        groups[static_cast<std::size_t>(it->second)].push_back(&r);
    }

    const bool label_mode = !all_int || label_table != nullptr;
    // Shared actor space: always for a single group; for clustered input only
    // when the caller pinned the space (labels or an explicit size).
    const bool shared_space =
        groups.size() == 1 || label_table != nullptr || n_actors_override.has_value() || label_mode;

    std::map<std::string, ActorId> label_ids;
    if (label_table) {
        for (std::size_t i = 0; i < label_table->size(); ++i) {
            if (!label_ids.emplace((*label_table)[i], static_cast<ActorId>(i)).second)
                throw std::invalid_argument(src + ": duplicate label in actor table: " + (*label_table)[i]);
        }
        out.actor_labels = *label_table;
    }
    auto resolve = [&](const std::string& tok, long ln) -> ActorId {
        if (!label_mode) {
            long v;
            parse_nonneg_int(tok, v);
            return static_cast<ActorId>(v);
        }
        auto it = label_ids.find(tok);
        if (it != label_ids.end()) return it->second;
        if (label_table) fail(src, ln, "actor label '" + tok + "' not in the actor table");
        ActorId id = static_cast<ActorId>(out.actor_labels.size());
        label_ids.emplace(tok, id);
        out.actor_labels.push_back(tok);
        return id;
    };

    for (std::size_t g = 0; g < groups.size(); ++g) {
        EventSequence seq;
        ActorId max_id = -1;
        for (const RawRow* r : groups[g]) {
            Event e;
            e.time = r->time;
            e.sender = resolve(r->sender, r->line);
            e.receiver = resolve(r->receiver, r->line);
            max_id = std::max(max_id, std::max(e.sender, e.receiver));
            seq.events.push_back(e);
        }
        seq.n_actors = static_cast<int>(max_id) + 1;
        seq.end_time = seq.events.empty() ? 0.0 : seq.events.back().time;
        out.sequences.push_back(std::move(seq));
    }

    if (shared_space) {
        int n = 0;
        if (label_table) n = static_cast<int>(label_table->size());
        for (const auto& s : out.sequences) n = std::max(n, s.n_actors);
        if (label_mode && !label_table) n = static_cast<int>(out.actor_labels.size());
        if (n_actors_override) {
            if (*n_actors_override < n)
                throw std::invalid_argument(src + ": n_actors=" + std::to_string(*n_actors_override) +
                                            " smaller than the data requires (" + std::to_string(n) + ")");
            n = *n_actors_override;
        }
        for (auto& s : out.sequences) s.n_actors = n;
    }
    return out;
}

LoadedEvents read_events_csv_file(const std::string& path, std::optional<int> n_actors_override,
                                  const std::vector<std::string>* label_table) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open events file: " + path);
    return read_events_csv(in, path, n_actors_override, label_table);
}

void write_events_csv(std::ostream& out, const EventSequence& seq) {
    out << "time,sender,receiver\n";
    out.precision(17);
    for (const Event& e : seq.events)
        out << e.time << ',' << e.sender << ',' << e.receiver << '\n';
}

void write_events_csv_file(const std::string& path, const EventSequence& seq) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write events file: " + path);
    write_events_csv(out, seq);
}

void write_clustered_events_csv(std::ostream& out, const std::vector<EventSequence>& seqs,
                                const std::vector<std::string>& cluster_ids) {
    if (seqs.size() != cluster_ids.size())
        throw std::invalid_argument("cluster id list does not match sequence list");
    out << "cluster,time,sender,receiver\n";
    out.precision(17);
    for (std::size_t k = 0; k < seqs.size(); ++k)
        for (const Event& e : seqs[k].events)
            out << cluster_ids[k] << ',' << e.time << ',' << e.sender << ',' << e.receiver << '\n';
}

void write_clustered_events_csv_file(const std::string& path, const std::vector<EventSequence>& seqs,
                                     const std::vector<std::string>& cluster_ids) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write events file: " + path);
    write_clustered_events_csv(out, seqs, cluster_ids);
}

ActorAttributes read_attributes_csv(std::istream& in, const std::string& src,
                                    std::vector<std::string>* labels_out) {
    std::string line;
    long lineno = 0;
    if (!std::getline(in, line)) throw std::invalid_argument(src + ": empty file");
    ++lineno;
    std::vector<std::string> header = split_line(line);
    if (header.empty() || (header[0] != "actor" && header[0] != "id"))
        throw std::invalid_argument(src + ": first column must be 'actor' (or 'id')");

    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> cells(header.size() - 1);
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> row = split_line(line);
        if (row.size() != header.size()) fail(src, lineno, "wrong column count");
        labels.push_back(row[0]);
        for (std::size_t c = 1; c < row.size(); ++c) cells[c - 1].push_back(row[c]);
    }
    if (labels.empty()) throw std::invalid_argument(src + ": no attribute rows");

    // Integer actor ids must line up with row order (row i -> actor i).
    bool all_int = true;
    for (const auto& l : labels) {
        long v;
        if (!parse_nonneg_int(l, v)) { all_int = false; break; }
    }
    if (all_int) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            long v;
            parse_nonneg_int(labels[i], v);
            if (v != static_cast<long>(i))
                throw std::invalid_argument(src + ": integer actor ids must be 0..N-1 in order (row " +
                                            std::to_string(i + 2) + " has id " + labels[i] + ")");
        }
    }

    ActorAttributes attrs;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        bool numeric = true;
        std::vector<double> vals(cells[c].size());
        for (std::size_t i = 0; i < cells[c].size(); ++i) {
            if (!parse_double(cells[c][i], vals[i])) { numeric = false; break; }
        }
        if (numeric) {
            attrs.add_numeric(header[c + 1], std::move(vals));
        } else {
            std::map<std::string, int> code_of;
            std::vector<std::string> levels;
            std::vector<int> codes;
            for (const auto& tok : cells[c]) {
                auto it = code_of.find(tok);
                if (it == code_of.end()) {
                    it = code_of.emplace(tok, static_cast<int>(levels.size())).first;
                    levels.push_back(tok);
                }
                codes.push_back(it->second);
            }
            attrs.add_categorical(header[c + 1], std::move(codes), std::move(levels));
        }
    }
    if (labels_out) *labels_out = all_int ? std::vector<std::string>{} : labels;
    return attrs;
}

ActorAttributes read_attributes_csv_file(const std::string& path,
                                         std::vector<std::string>* labels_out) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open attributes file: " + path);
    return read_attributes_csv(in, path, labels_out);
}

}  // namespace rem
