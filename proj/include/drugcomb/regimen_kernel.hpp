#pragma once

#include <compare>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace drugcomb {

enum class DrugClass { NRTI, NNRTI, PI, INSTI, EI };

std::string_view to_string(DrugClass c);
DrugClass parse_drug_class(std::string_view text);

struct DrugEntry {
  std::string code;
  DrugClass drug_class;
  std::string display_name;
};

// Immutable lookup from drug code to class. Codes are unique and non-empty.
class DrugDictionary {
 public:
  DrugDictionary() = default;
  explicit DrugDictionary(std::vector<DrugEntry> entries);

  // The 24 agents in five classes observed in the WIHS cohort.
  static DrugDictionary standard();

  // CSV with header `code,class,name`.
  static DrugDictionary read_csv(std::istream& in);
  void write_csv(std::ostream& out) const;

  const DrugEntry* find(std::string_view code) const;
  DrugClass class_of(std::string_view code) const;  // throws UnknownDrug
  const std::vector<DrugEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<DrugEntry> entries_;  // sorted by code
};

// A non-empty set of drug codes, stored sorted.
class Regimen {
 public:
  Regimen() = default;

  const std::vector<std::string>& drugs() const { return drugs_; }
  std::size_t size() const { return drugs_.size(); }
  bool contains(std::string_view code) const;

  // "CODE+CODE+..." in canonical (sorted) order.
  std::string to_string() const;

  friend auto operator<=>(const Regimen&, const Regimen&) = default;

 private:
  friend Regimen make_regimen(std::vector<std::string>, const DrugDictionary&);
  std::vector<std::string> drugs_;
};

Regimen make_regimen(std::vector<std::string> codes, const DrugDictionary& dict);
Regimen parse_regimen(std::string_view text, const DrugDictionary& dict);

struct TreeNode {
  std::string label;
  std::vector<TreeNode> children;

  bool is_terminal() const { return children.empty(); }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegimenTree {
  TreeNode root;

  std::size_t node_count() const;
  std::size_t leaf_count() const;
};

inline constexpr std::string_view kRegimenRootLabel = "REGIMEN";
inline constexpr std::string_view kSequenceRootLabel = "ART";

// REGIMEN -> one class node per drug -> drug leaf, children sorted by
// (class label, drug code).
RegimenTree build_regimen_tree(const Regimen& reg, const DrugDictionary& dict);

// Distinct regimen episodes of one individual, in first-use order.
struct RegimenHistory {
  std::string owner;
  std::vector<Regimen> episodes;
};

// Visit-level treatment record; std::nullopt marks a visit with no ART.
struct TreatmentRecord {
  std::string owner;
  std::vector<std::optional<Regimen>> visits;

  // Drops no-ART visits; collapses consecutive identical regimens unless
  // keep_duplicates is set.
  RegimenHistory to_history(bool keep_duplicates = false) const;
};

// ART root whose children are the episode regimen trees, in episode order.
RegimenTree build_sequence_tree(const RegimenHistory& hist, const DrugDictionary& dict);

enum class MatchMode { Strict, ClassRelaxed };

std::string_view to_string(MatchMode m);
MatchMode parse_match_mode(std::string_view text);

struct KernelConfig {
  double eta = 0.5;
  MatchMode match_mode = MatchMode::Strict;

  void validate() const;  // eta in (0,1]
};

// Subset-tree kernel: sum over node pairs of the matched-fragment weight.
double st_kernel(const RegimenTree& a, const RegimenTree& b, const KernelConfig& cfg);

double history_similarity(const RegimenHistory& h1, const RegimenHistory& h2,
                          const KernelConfig& cfg, const DrugDictionary& dict);

// Symmetric n x n matrix of history similarities. The diagonal holds
// self-similarities even though the partition prior never reads it.
Eigen::MatrixXd history_similarity_matrix(std::span<const RegimenHistory> histories,
                                          const KernelConfig& cfg,
                                          const DrugDictionary& dict);

// |a ∩ b| / max(|a|, |b|)
double linear_kernel(const Regimen& a, const Regimen& b);

// Reads `individual_id,visit_index,regimen` rows. Records come back in
// first-appearance order of the ids, visits sorted by visit_index.
std::vector<TreatmentRecord> read_history_csv(std::istream& in, const DrugDictionary& dict);
void write_history_csv(std::ostream& out, std::span<const TreatmentRecord> records);

}  // namespace drugcomb
