#ifndef REM_CSV_HPP
#define REM_CSV_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rem/types.hpp"

namespace rem {

// Events loaded from CSV. Single-network files yield one sequence; files with
// a `cluster` column yield one sequence per cluster in first-appearance order.
struct LoadedEvents {
    std::vector<EventSequence> sequences;
    std::vector<std::string> cluster_ids;   // parallel to sequences
    std::vector<std::string> actor_labels;  // empty when ids were given as integers
};

// Expected header: time,sender,receiver[,cluster] (column order free, extra
// columns ignored). Actor columns may be non-negative integers (used as ids;
// N = max id + 1) or labels (ids assigned by first appearance; N = #distinct).
// `label_table`, when given, pins the label -> id mapping (e.g. attribute file
// row order); unknown labels are an error. `n_actors_override` widens the
// actor space; it must cover every id seen. Without a cluster column the
// actor space is per file; with one it is shared across clusters only when a
// label table or override is supplied, otherwise inferred per cluster.
LoadedEvents read_events_csv(std::istream& in, const std::string& source_name,
                             std::optional<int> n_actors_override = std::nullopt,
                             const std::vector<std::string>* label_table = nullptr);
LoadedEvents read_events_csv_file(const std::string& path,
                                  std::optional<int> n_actors_override = std::nullopt,
                                  const std::vector<std::string>* label_table = nullptr);

void write_events_csv(std::ostream& out, const EventSequence& seq);
void write_events_csv_file(const std::string& path, const EventSequence& seq);
void write_clustered_events_csv(std::ostream& out, const std::vector<EventSequence>& seqs,
                                const std::vector<std::string>& cluster_ids);
void write_clustered_events_csv_file(const std::string& path,
                                     const std::vector<EventSequence>& seqs,
                                     const std::vector<std::string>& cluster_ids);

// Attribute CSV: header `actor,<name>,...`; one row per actor. Row order
// defines actor ids for label-valued actor columns (labels_out receives them).
// A column is numeric when every cell parses as a double, else categorical
// with codes assigned by first appearance.
ActorAttributes read_attributes_csv(std::istream& in, const std::string& source_name,
                                    std::vector<std::string>* labels_out = nullptr);
ActorAttributes read_attributes_csv_file(const std::string& path,
                                         std::vector<std::string>* labels_out = nullptr);

}  // namespace rem

#endif  // REM_CSV_HPP
