#include "drugcomb/regimen_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>

#include "csv.hpp"
#include "drugcomb/error.hpp"

namespace drugcomb {

std::string_view to_string(DrugClass c) {
  switch (c) {
    case DrugClass::NRTI: return "NRTI";
    case DrugClass::NNRTI: return "NNRTI";
    case DrugClass::PI: return "PI";
    case DrugClass::INSTI: return "INSTI";
    case DrugClass::EI: return "EI";
  }
  return "";
}

DrugClass parse_drug_class(std::string_view text) {
  for (auto c : {DrugClass::NRTI, DrugClass::NNRTI, DrugClass::PI, DrugClass::INSTI,
                 DrugClass::EI}) {
    if (to_string(c) == text) return c;
  }
  throw Error(ErrorCode::InvalidDictionary, "unknown drug class '" + std::string(text) + "'");
}

DrugDictionary::DrugDictionary(std::vector<DrugEntry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const DrugEntry& a, const DrugEntry& b) { return a.code < b.code; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].code.empty()) throw Error(ErrorCode::InvalidDictionary, "empty drug code");
    if (i > 0 && entries_[i].code == entries_[i - 1].code)
      throw Error(ErrorCode::InvalidDictionary, "duplicate drug code " + entries_[i].code);
  }
}

DrugDictionary DrugDictionary::standard() {
  using C = DrugClass;
  return DrugDictionary({
      {"ABC", C::NRTI, "Abacavir"},
      {"AZT", C::NRTI, "Zidovudine"},
      {"D4T", C::NRTI, "Stavudine"},
      {"DDC", C::NRTI, "Zalcitabine"},
      {"DDI", C::NRTI, "Didanosine"},
      {"FTC", C::NRTI, "Emtricitabine"},
      {"LAM", C::NRTI, "Lamivudine"},
      {"TDF", C::NRTI, "Tenofovir Disoproxil Fumarate"},
      {"EFV", C::NNRTI, "Efavirenz"},
      {"ETV", C::NNRTI, "Etravirine"},
      {"NVP", C::NNRTI, "Nevirapine"},
      {"RPV", C::NNRTI, "Rilpivirine"},
      {"ATZ", C::PI, "Atazanavir"},
      {"DRV", C::PI, "Darunavir"},
      {"FPV", C::PI, "Fosamprenavir"},
      {"IDV", C::PI, "Indinavir"},
      {"LPV", C::PI, "Lopinavir"},
      {"NFV", C::PI, "Nelfinavir"},
      {"RTV", C::PI, "Ritonavir"},
      {"SQV", C::PI, "Saquinavir"},
      {"DGT", C::INSTI, "Dolutegravir"},
      {"ELV", C::INSTI, "Elvitegravir"},
      {"RAL", C::INSTI, "Raltegravir"},
      {"SLZ", C::EI, "Maraviroc"},
  });
}

DrugDictionary DrugDictionary::read_csv(std::istream& in) {
  std::vector<std::string> row;
  if (!csv::next_row(in, row) || row.size() < 3 || row[0] != "code" || row[1] != "class" ||
      row[2] != "name") {
    throw Error(ErrorCode::ParseError, "drug dictionary header must be code,class,name");
  }
  std::vector<DrugEntry> entries;
  while (csv::next_row(in, row)) {
    if (row.size() < 3) throw Error(ErrorCode::ParseError, "short dictionary row");
    entries.push_back({row[0], parse_drug_class(row[1]), row[2]});
  }
  return DrugDictionary(std::move(entries));
}

void DrugDictionary::write_csv(std::ostream& out) const {
  out << "code,class,name\n";
  for (const auto& e : entries_) out << e.code << ',' << to_string(e.drug_class) << ',' << e.display_name << '\n';
}

const DrugEntry* DrugDictionary::find(std::string_view code) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), code,
                             [](const DrugEntry& e, std::string_view c) { return e.code < c; });
  if (it == entries_.end() || it->code != code) return nullptr;
  return &*it;
}

DrugClass DrugDictionary::class_of(std::string_view code) const {
  const auto* e = find(code);
  if (!e) throw Error(ErrorCode::UnknownDrug, std::string(code));
  return e->drug_class;
}

bool Regimen::contains(std::string_view code) const {
  return std::binary_search(drugs_.begin(), drugs_.end(), code);
}

std::string Regimen::to_string() const {
  std::string out;
  for (const auto& d : drugs_) {
    if (!out.empty()) out += '+';
    out += d;
  }
  return out;
}

Regimen make_regimen(std::vector<std::string> codes, const DrugDictionary& dict) {
  if (codes.empty()) throw Error(ErrorCode::EmptyRegimen, "");
  for (const auto& c : codes) {
    if (c.empty()) throw Error(ErrorCode::EmptyRegimen, "empty drug code");
    if (!dict.find(c)) throw Error(ErrorCode::UnknownDrug, c);
  }
  std::sort(codes.begin(), codes.end());
  if (auto it = std::adjacent_find(codes.begin(), codes.end()); it != codes.end())
    throw Error(ErrorCode::DuplicateDrug, *it);
  Regimen r;
  r.drugs_ = std::move(codes);
  return r;
}

Regimen parse_regimen(std::string_view text, const DrugDictionary& dict) {
  if (csv::trim(text).empty()) throw Error(ErrorCode::EmptyRegimen, "");
  std::vector<std::string> codes;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find('+', start);
    codes.push_back(csv::trim(text.substr(start, pos == text.npos ? text.npos : pos - start)));
    if (pos == text.npos) break;
    start = pos + 1;
  }
  return make_regimen(std::move(codes), dict);
}

namespace {

std::size_t count_nodes(const TreeNode& n) {
  std::size_t c = 1;
  for (const auto& ch : n.children) c += count_nodes(ch);
  return c;
}

std::size_t count_leaves(const TreeNode& n) {
  if (n.is_terminal()) return 1;
  std::size_t c = 0;
  for (const auto& ch : n.children) c += count_leaves(ch);
  return c;
}

}  // namespace

std::size_t RegimenTree::node_count() const { return count_nodes(root); }
std::size_t RegimenTree::leaf_count() const { return count_leaves(root); }

RegimenTree build_regimen_tree(const Regimen& reg, const DrugDictionary& dict) {
  if (reg.size() == 0) throw Error(ErrorCode::EmptyRegimen, "");
  RegimenTree tree{TreeNode{std::string(kRegimenRootLabel), {}}};
  for (const auto& code : reg.drugs()) {
    TreeNode cls{std::string(to_string(dict.class_of(code))), {TreeNode{code, {}}}};
    tree.root.children.push_back(std::move(cls));
  }
  std::sort(tree.root.children.begin(), tree.root.children.end(),
            [](const TreeNode& a, const TreeNode& b) {
              return std::tie(a.label, a.children[0].label) < std::tie(b.label, b.children[0].label);
            });
  return tree;
}

RegimenHistory TreatmentRecord::to_history(bool keep_duplicates) const {
  RegimenHistory h{owner, {}};
  for (const auto& v : visits) {
    if (!v) continue;
    if (!keep_duplicates && !h.episodes.empty() && h.episodes.back() == *v) continue;
    h.episodes.push_back(*v);
  }
  return h;
}

RegimenTree build_sequence_tree(const RegimenHistory& hist, const DrugDictionary& dict) {
  if (hist.episodes.empty()) throw Error(ErrorCode::EmptyHistory, hist.owner);
  RegimenTree tree{TreeNode{std::string(kSequenceRootLabel), {}}};
  for (const auto& reg : hist.episodes) tree.root.children.push_back(build_regimen_tree(reg, dict).root);
  return tree;
}

std::string_view to_string(MatchMode m) {
  return m == MatchMode::Strict ? "strict" : "class_relaxed";
}

MatchMode parse_match_mode(std::string_view text) {
  if (text == "strict") return MatchMode::Strict;
  if (text == "class_relaxed") return MatchMode::ClassRelaxed;
  throw Error(ErrorCode::InvalidArgument, "match_mode must be strict or class_relaxed");
}

void KernelConfig::validate() const {
  if (!(eta > 0.0 && eta <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "eta must lie in (0,1]");
}

namespace {

// Flattened tree with children in canonical order and a production key per
// node. Two nodes match (rule ii) exactly when their production keys agree.
struct FlatTree {
  std::vector<std::vector<int>> children;
  std::vector<std::string> production;  // empty for terminals

  explicit FlatTree(const TreeNode& root, MatchMode mode) { add(root, mode); }

 private:
  // Returns (node index, canonical subtree key).
  std::pair<int, std::string> add(const TreeNode& node, MatchMode mode) {
    const int id = static_cast<int>(children.size());
    children.emplace_back();
    production.emplace_back();

    struct Child {
      std::string label;
      std::string key;
      int id;
    };
    std::vector<Child> kids;
    kids.reserve(node.children.size());
    for (const auto& ch : node.children) {
      auto [cid, key] = add(ch, mode);
      kids.push_back({ch.label, std::move(key), cid});
    }
    std::sort(kids.begin(), kids.end(), [](const Child& a, const Child& b) {
      return std::tie(a.label, a.key) < std::tie(b.label, b.key);
    });

    std::string key = node.label;
    if (!kids.empty()) {
      key += '(';
      for (std::size_t s = 0; s < kids.size(); ++s) key += (s ? "," : "") + kids[s].key;
      key += ')';

      const bool preterminal = std::all_of(node.children.begin(), node.children.end(),
                                           [](const TreeNode& c) { return c.is_terminal(); });
      std::string prod = node.label + "->";
      if (mode == MatchMode::ClassRelaxed && preterminal) {
        prod += "*" + std::to_string(kids.size());
      } else {
        for (const auto& k : kids) prod += k.label + '\x1f';
      }
      production[id] = std::move(prod);
    }
    for (const auto& k : kids) children[id].push_back(k.id);
    return {id, std::move(key)};
  }
};

class StKernel {
 public:
  StKernel(const FlatTree& a, const FlatTree& b, double eta)
      : a_(a), b_(b), eta_(eta), memo_(a.children.size() * b.children.size(), -1.0) {}

  double total() {
    double sum = 0.0;
    for (std::size_t i = 0; i < a_.children.size(); ++i)
      for (std::size_t j = 0; j < b_.children.size(); ++j) sum += rho(static_cast<int>(i), static_cast<int>(j));
    return sum;
  }

 private:
  double rho(int i, int j) {
    double& m = memo_[static_cast<std::size_t>(i) * b_.children.size() + static_cast<std::size_t>(j)];
    if (m >= 0.0) return m;
    const auto& pa = a_.production[i];
    if (pa.empty() || pa != b_.production[j]) return m = 0.0;
    double prod = eta_;
    const auto& ca = a_.children[i];
    const auto& cb = b_.children[j];
    for (std::size_t s = 0; s < ca.size(); ++s) prod *= 1.0 + rho(ca[s], cb[s]);
    return m = prod;
  }

  const FlatTree& a_;
  const FlatTree& b_;
  double eta_;
  std::vector<double> memo_;
};

}  // namespace

double st_kernel(const RegimenTree& a, const RegimenTree& b, const KernelConfig& cfg) {
  cfg.validate();
  FlatTree fa(a.root, cfg.match_mode);
  FlatTree fb(b.root, cfg.match_mode);
  return StKernel(fa, fb, cfg.eta).total();
}

double history_similarity(const RegimenHistory& h1, const RegimenHistory& h2,
                          const KernelConfig& cfg, const DrugDictionary& dict) {
  return st_kernel(build_sequence_tree(h1, dict), build_sequence_tree(h2, dict), cfg);
}

Eigen::MatrixXd history_similarity_matrix(std::span<const RegimenHistory> histories,
                                          const KernelConfig& cfg,
                                          const DrugDictionary& dict) {
  cfg.validate();
  std::vector<FlatTree> flat;
  flat.reserve(histories.size());
  for (const auto& h : histories) flat.emplace_back(build_sequence_tree(h, dict).root, cfg.match_mode);
  const auto n = static_cast<Eigen::Index>(histories.size());
  Eigen::MatrixXd s(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      s(i, j) = s(j, i) = StKernel(flat[i], flat[j], cfg.eta).total();
    }
  }
  return s;
}

double linear_kernel(const Regimen& a, const Regimen& b) {
  std::size_t common = 0;
  for (const auto& d : a.drugs()) common += b.contains(d) ? 1 : 0;
  const auto denom = std::max(a.size(), b.size());
  if (denom == 0) throw Error(ErrorCode::EmptyRegimen, "");
  return static_cast<double>(common) / static_cast<double>(denom);
}

std::vector<TreatmentRecord> read_history_csv(std::istream& in, const DrugDictionary& dict) {
  std::vector<std::string> row;
  if (!csv::next_row(in, row) || row.size() < 3 || row[0] != "individual_id" ||
      row[1] != "visit_index" || row[2] != "regimen") {
    throw Error(ErrorCode::ParseError, "history header must be individual_id,visit_index,regimen");
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<long, std::optional<Regimen>>>> by_id;
  while (csv::next_row(in, row)) {
    if (row.size() < 2) throw Error(ErrorCode::ParseError, "short history row");
    const std::string regimen_text = row.size() >= 3 ? row[2] : "";
    auto [it, inserted] = by_id.try_emplace(row[0]);
    if (inserted) order.push_back(row[0]);
    std::optional<Regimen> reg;
    if (!regimen_text.empty()) reg = parse_regimen(regimen_text, dict);
    it->second.emplace_back(std::stol(row[1]), std::move(reg));
  }
  std::vector<TreatmentRecord> out;
  for (const auto& id : order) {
    auto& visits = by_id[id];
    std::stable_sort(visits.begin(), visits.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    TreatmentRecord rec{id, {}};
    for (auto& v : visits) rec.visits.push_back(std::move(v.second));
    out.push_back(std::move(rec));
  }
  return out;
}

void write_history_csv(std::ostream& out, std::span<const TreatmentRecord> records) {
  out << "individual_id,visit_index,regimen\n";
  for (const auto& rec : records) {
    for (std::size_t j = 0; j < rec.visits.size(); ++j) {
      out << rec.owner << ',' << j + 1 << ',' << (rec.visits[j] ? rec.visits[j]->to_string() : "") << '\n';
    }
  }
}

}  // namespace drugcomb
