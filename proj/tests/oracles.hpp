#pragma once

// Test-side reference implementations. None of these call into the library
// code they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

namespace oracle {

using boost::multiprecision::cpp_rational;

// ---------------------------------------------------------------------------
// Subset-tree kernel by fragment enumeration

struct Node {
  std::string label;
  std::vector<Node> children;
};

inline std::string serialize(const Node& n) {
  std::string s = n.label;
  if (!n.children.empty()) {
    s += '(';
    for (std::size_t i = 0; i < n.children.size(); ++i) s += (i ? "," : "") + serialize(n.children[i]);
    s += ')';
  }
  return s;
}

// Sorts every child list by (label, full serialization), bottom up.
inline void canonicalize(Node& n) {
  for (auto& c : n.children) canonicalize(c);
  std::sort(n.children.begin(), n.children.end(), [](const Node& a, const Node& b) {
    return std::make_pair(a.label, serialize(a)) < std::make_pair(b.label, serialize(b));
  });
}

// drugs: (code, class label) pairs.
inline Node regimen_node(const std::vector<std::pair<std::string, std::string>>& drugs) {
  Node root{"REGIMEN", {}};
  for (const auto& [code, cls] : drugs) root.children.push_back(Node{cls, {Node{code, {}}}});
  canonicalize(root);
  return root;
}

inline Node sequence_node(const std::vector<Node>& regimens) {
  Node root{"ART", regimens};
  canonicalize(root);
  return root;
}

inline bool is_preterminal(const Node& n) {
  return !n.children.empty() &&
         std::all_of(n.children.begin(), n.children.end(), [](const Node& c) { return c.children.empty(); });
}

// A fragment rooted at a non-terminal node keeps every child; each
// non-terminal child is either cut (label only) or expanded recursively.
// Returns (positional string, number of expanded nodes) for every fragment.
inline std::vector<std::pair<std::string, int>> fragments_at(const Node& n, bool relaxed) {
  std::vector<std::pair<std::string, int>> acc = {{n.label + "[", 1}};
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    const Node& c = n.children[i];
    std::vector<std::pair<std::string, int>> options;
    if (c.children.empty()) {
      options.push_back({relaxed && is_preterminal(n) ? "*" : c.label, 0});
    } else {
      options.push_back({c.label, 0});
      for (const auto& f : fragments_at(c, relaxed)) options.push_back(f);
    }
    std::vector<std::pair<std::string, int>> next;
    for (const auto& [s, k] : acc)
      for (const auto& [t, m] : options) next.push_back({s + (i ? "," : "") + t, k + m});
    acc = std::move(next);
  }
  for (auto& f : acc) f.first += "]";
  return acc;
}

// Fragment -> (multiplicity, expanded-node count) over every node of a tree.
using FragmentBag = std::map<std::string, std::pair<long long, int>>;

inline void collect(const Node& n, bool relaxed, FragmentBag& bag) {
  if (n.children.empty()) return;
  for (const auto& [s, k] : fragments_at(n, relaxed)) {
    auto& slot = bag[s];
    ++slot.first;
    slot.second = k;
  }
  for (const auto& c : n.children) collect(c, relaxed, bag);
}

inline FragmentBag fragment_bag(const Node& root, bool relaxed) {
  FragmentBag bag;
  collect(root, relaxed, bag);
  return bag;
}

// Integer coefficients c_k of kappa(eta) = sum_k c_k eta^k.
inline std::vector<long long> kernel_polynomial(const FragmentBag& a, const FragmentBag& b) {
  std::vector<long long> coef;
  for (const auto& [s, ca] : a) {
    const auto it = b.find(s);
    if (it == b.end()) continue;
    const auto k = static_cast<std::size_t>(ca.second);
    if (coef.size() <= k) coef.resize(k + 1, 0);
    coef[k] += ca.first * it->second.first;
  }
  return coef;
}

inline cpp_rational evaluate(const std::vector<long long>& coef, const cpp_rational& eta) {
  cpp_rational sum = 0, pw = 1;
  for (long long c : coef) {
    sum += pw * c;
    pw *= eta;
  }
  return sum;
}

inline cpp_rational st_kernel(const Node& a, const Node& b, const cpp_rational& eta, bool relaxed) {
  return evaluate(kernel_polynomial(fragment_bag(a, relaxed), fragment_bag(b, relaxed)), eta);
}

// ---------------------------------------------------------------------------
// Partitions

// Every set partition of n items as restricted growth strings, built by
// recursive insertion rather than by enumeration order.
inline std::vector<std::vector<int>> set_partitions(int n) {
  if (n == 0) return {{}};
  std::vector<std::vector<int>> out;
  for (const auto& p : set_partitions(n - 1)) {
    const int r = p.empty() ? 0 : *std::max_element(p.begin(), p.end()) + 1;
    for (int k = 0; k <= r; ++k) {
      auto q = p;
      q.push_back(k);
      out.push_back(std::move(q));
    }
  }
  return out;
}

inline long long bell(int n) {
  std::vector<std::vector<long long>> t(static_cast<std::size_t>(n) + 1);
  t[0] = {1};
  for (int i = 1; i <= n; ++i) {
    t[static_cast<std::size_t>(i)].push_back(t[static_cast<std::size_t>(i) - 1].back());
    for (int j = 1; j <= i; ++j)
      t[static_cast<std::size_t>(i)].push_back(t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j) - 1] +
                                               t[static_cast<std::size_t>(i) - 1][static_cast<std::size_t>(j) - 1]);
  }
  return t[static_cast<std::size_t>(n)][0];
}

inline std::vector<int> block_sizes(const std::vector<int>& labels) {
  std::vector<int> sizes;
  for (int l : labels) {
    if (static_cast<int>(sizes.size()) <= l) sizes.resize(static_cast<std::size_t>(l) + 1, 0);
    ++sizes[static_cast<std::size_t>(l)];
  }
  return sizes;
}

// Ewens sampling formula: m0^r prod (|S|-1)! / prod_{t<n} (m0 + t).
inline double ewens_log_pmf(const std::vector<int>& labels, double m0) {
  const auto sizes = block_sizes(labels);
  double lp = static_cast<double>(sizes.size()) * std::log(m0);
  for (int s : sizes) lp += std::lgamma(static_cast<double>(s));
  for (std::size_t t = 0; t < labels.size(); ++t) lp -= std::log(m0 + static_cast<double>(t));
  return lp;
}

// ---------------------------------------------------------------------------
// Gaussian model oracles

inline double mvn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const Eigen::VectorXd d = x - mean;
  const double quad = d.dot(ldlt.solve(d));
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < ldlt.vectorD().size(); ++i) logdet += std::log(ldlt.vectorD()(i));
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * M_PI) + logdet + quad);
}

// Individual i's visits: y (Q x J), x (S x J), h (D x J).
struct Block {
  Eigen::MatrixXd y, x, h;
};

// Log marginal likelihood of one cluster with beta_q ~ N(e_q, B_q),
// gamma_q ~ N(f_q, L_q) integrated out and omega fixed at zero:
// y_q ~ N(X e_q + H f_q, X B_q X' + H L_q H' + s2 I) per item.
inline double cluster_log_marginal(const std::vector<const Block*>& members, const std::vector<Eigen::VectorXd>& e,
                                   const std::vector<Eigen::MatrixXd>& b, const std::vector<Eigen::VectorXd>& f,
                                   const std::vector<Eigen::MatrixXd>& l, double s2) {
  Eigen::Index visits = 0;
  for (const auto* m : members) visits += m->y.cols();
  const auto s = members.front()->x.rows();
  const auto d = members.front()->h.rows();
  Eigen::MatrixXd xs(visits, s), hs(visits, d);
  Eigen::MatrixXd ys(members.front()->y.rows(), visits);
  Eigen::Index c = 0;
  for (const auto* m : members) {
    xs.middleRows(c, m->x.cols()) = m->x.transpose();
    hs.middleRows(c, m->h.cols()) = m->h.transpose();
    ys.middleCols(c, m->y.cols()) = m->y;
    c += m->y.cols();
  }
  double lp = 0.0;
  for (Eigen::Index q = 0; q < ys.rows(); ++q) {
    const auto k = static_cast<std::size_t>(q);
    const Eigen::MatrixXd cov = xs * b[k] * xs.transpose() + hs * l[k] * hs.transpose() +
                                s2 * Eigen::MatrixXd::Identity(visits, visits);
    lp += mvn_log_density(ys.row(q).transpose(), xs * e[k] + hs * f[k], cov);
  }
  return lp;
}

}  // namespace oracle
