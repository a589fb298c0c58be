// Copyright 2026 The diagdiff Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "diagdiff/diagram.hpp"

namespace diagdiff {

// Canonical labeling by iterative refinement with individualization
// backtracking, anchored at the ordered boundaries. Structural equality and
// deterministic term ordering both reduce to certificate comparison.
//
// Spider legs are interchangeable (the all-equal tensor does not depend on
// which leg carries which index), so certificates wildcard spider leg roles.

std::string sum_certificate(const DiagramSum& s);

namespace detail {

inline std::string node_invariant(const GenKind& k) {
  struct V {
    std::string operator()(const Box& b) const {
      std::string s = "box(";
      if (b.is_compound()) s += "nested=" + sum_certificate(*b.nested);
      else s += "label=" + b.label;
      s += ",rows=" + (b.rows ? *b.rows : std::string("-"));
      s += ",cols=" + (b.cols ? *b.cols : std::string("-"));
      s += b.transposed ? ",t" : "";
      s += b.inverted ? ",i" : "";
      return s + ")";
    }
    std::string operator()(const ScalarFnNode& f) const {
      std::string s = "fn(";
      s += f.fn == ScalarFnNode::Fn::Sqrt ? "sqrt" : "pow^" + std::to_string(f.exponent);
      return s + "," + sum_certificate(*f.arg) + ")";
    }
    std::string operator()(const Cup& c) const { return "cup(" + c.dim + ")"; }
    std::string operator()(const Cap& c) const { return "cap(" + c.dim + ")"; }
    std::string operator()(const SwapGen& w) const {
      return "swap(" + w.first + "," + w.second + ")";
    }
    std::string operator()(const Spider& p) const {
      return "spider(" + p.dim + "," + std::to_string(p.degree()) + ")";
    }
  };
  return std::visit(V{}, k);
}

inline bool is_spider(const GenKind& k) { return std::holds_alternative<Spider>(k); }

// Zero-padded so lexicographic order of descriptors matches numeric order of
// colors; refinement then reaches a stable labeling, not just a stable
// partition.
inline std::string pad(int v) {
  std::string s = std::to_string(v);
  return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

inline std::string leg_label(const Diagram& d, const Port& p) {
  if (is_spider(d.nodes[p.index])) return "*";
  return std::to_string(p.leg);
}

struct CanonSearch {
  const Diagram& d;
  std::vector<std::string> inv;
  // wire ends incident to each node: (wire idx, which end)
  std::vector<std::vector<std::pair<int, int>>> incident;

  explicit CanonSearch(const Diagram& dg) : d(dg) {
    inv.reserve(d.nodes.size());
    for (const auto& n : d.nodes) inv.push_back(node_invariant(n));
    incident.resize(d.nodes.size());
    for (int w = 0; w < static_cast<int>(d.wires.size()); ++w) {
      const auto& [a, b] = d.wires[w];
      if (a.loc == Port::Loc::Node) incident[a.index].push_back({w, 0});
      if (b.loc == Port::Loc::Node) incident[b.index].push_back({w, 1});
    }
  }

  std::string far_descriptor(const std::vector<int>& colors, const Port& far) const {
    switch (far.loc) {
      case Port::Loc::In:
        return "I" + pad(far.index);
      case Port::Loc::Out:
        return "O" + pad(far.index);
      case Port::Loc::Node:
        return "N" + pad(colors[far.index]) + ":" + leg_label(d, far);
    }
    return "?";
  }

  void refine(std::vector<int>& colors) const {
    while (true) {
      std::vector<std::pair<std::string, int>> sigs(d.nodes.size());
      for (int n = 0; n < static_cast<int>(d.nodes.size()); ++n) {
        std::vector<std::string> edges;
        for (auto [w, side] : incident[n]) {
          const Port& mine = side == 0 ? d.wires[w].first : d.wires[w].second;
          const Port& far = side == 0 ? d.wires[w].second : d.wires[w].first;
          edges.push_back(leg_label(d, mine) + ">" + far_descriptor(colors, far));
        }
        std::sort(edges.begin(), edges.end());
        std::string s = pad(colors[n]) + "#" + inv[n];
        for (const auto& e : edges) s += "|" + e;
        sigs[n] = {std::move(s), n};
      }
      std::vector<int> order(d.nodes.size());
      for (int i = 0; i < static_cast<int>(order.size()); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return sigs[a].first < sigs[b].first; });
      std::vector<int> next(d.nodes.size());
      int c = -1;
      std::string prev;
      for (int idx : order) {
        if (c < 0 || sigs[idx].first != prev) {
          ++c;
          prev = sigs[idx].first;
        }
        next[idx] = c;
      }
      if (next == colors) return;
      colors = std::move(next);
    }
  }

  bool discrete(const std::vector<int>& colors) const {
    std::vector<char> seen(colors.size(), 0);
    for (int c : colors) {
      if (c < 0 || c >= static_cast<int>(colors.size()) || seen[c]) return false;
      seen[c] = 1;
    }
    return true;
  }

  std::string certificate(const std::vector<int>& colors, std::vector<int>* order_out) const {
    // colors are a bijection node -> position.
    std::vector<int> by_pos(colors.size());
    for (int n = 0; n < static_cast<int>(colors.size()); ++n) by_pos[colors[n]] = n;
    std::string s = "in=[";
    for (const auto& x : d.in_bnd) s += x + ",";
    s += "];out=[";
    for (const auto& x : d.out_bnd) s += x + ",";
    s += "];nodes=[";
    for (int n : by_pos) s += inv[n] + ";";
    s += "];wires=[";
    std::vector<std::string> ws;
    auto pstr = [&](const Port& p) {
      switch (p.loc) {
        case Port::Loc::In:
          return "I" + pad(p.index);
        case Port::Loc::Out:
          return "O" + pad(p.index);
        case Port::Loc::Node:
          return "N" + pad(colors[p.index]) + ":" + leg_label(d, p);
      }
      return std::string("?");
    };
    for (const auto& w : d.wires) {
      std::string a = pstr(w.first), b = pstr(w.second);
      if (b < a) std::swap(a, b);
      ws.push_back(a + "-" + b);
    }
    std::sort(ws.begin(), ws.end());
    for (const auto& w : ws) s += w + ";";
    s += "]";
    if (order_out) *order_out = by_pos;
    return s;
  }

  // Finds the minimal certificate (and the node order realizing it).
  void search(std::vector<int> colors, std::string& best, std::vector<int>& best_order) const {
    refine(colors);
    if (discrete(colors)) {
      std::vector<int> order;
      std::string cert = certificate(colors, &order);
      if (best.empty() || cert < best) {
        best = std::move(cert);
        best_order = std::move(order);
      }
      return;
    }
    // First non-singleton color class.
    int target = -1;
    std::map<int, int> count;
    for (int c : colors) count[c]++;
    for (auto [c, n] : count)
      if (n > 1) {
        target = c;
        break;
      }
    for (int n = 0; n < static_cast<int>(colors.size()); ++n) {
      if (colors[n] != target) continue;
      std::vector<int> c2(colors.size());
      for (std::size_t i = 0; i < colors.size(); ++i) c2[i] = colors[i] * 2;
      c2[n] += 1;
      search(std::move(c2), best, best_order);
    }
  }
};

}  // namespace detail

/// Canonical byte string: equal iff the diagrams are isomorphic by a node
/// bijection preserving generators, wiring, and boundary order.
inline std::string diagram_certificate(const Diagram& d) {
  detail::CanonSearch cs(d);
  std::vector<int> colors(d.nodes.size(), 0);
  std::string best;
  std::vector<int> order;
  cs.search(std::move(colors), best, order);
  return best;
}

/// Rebuilds the diagram with nodes in canonical order and wires sorted, so
/// serialization of normalized terms is byte-stable.
inline Diagram relabel_canonical(const Diagram& d) {
  detail::CanonSearch cs(d);
  std::vector<int> colors(d.nodes.size(), 0);
  std::string best;
  std::vector<int> order;  // order[new_id] = old_id
  cs.search(std::move(colors), best, order);
  std::vector<int> newid(d.nodes.size());
  for (int i = 0; i < static_cast<int>(order.size()); ++i) newid[order[i]] = i;
  Diagram g;
  g.in_bnd = d.in_bnd;
  g.out_bnd = d.out_bnd;
  g.nodes.reserve(d.nodes.size());
  for (int i = 0; i < static_cast<int>(order.size()); ++i) g.nodes.push_back(d.nodes[order[i]]);
  auto map = [&](Port p) {
    if (p.loc == Port::Loc::Node) p.index = newid[p.index];
    return p;
  };
  for (const auto& w : d.wires) g.wires.push_back(make_wire(map(w.first), map(w.second)));
  std::sort(g.wires.begin(), g.wires.end());
  return g;
}

inline bool structural_equal(const Diagram& a, const Diagram& b) {
  if (a.in_bnd != b.in_bnd || a.out_bnd != b.out_bnd) return false;
  if (a.nodes.size() != b.nodes.size() || a.wires.size() != b.wires.size()) return false;
  return diagram_certificate(a) == diagram_certificate(b);
}

/// Certificate of a sum: boundary plus the coefficient-merged multiset of
/// term certificates.
inline std::string sum_certificate(const DiagramSum& s) {
  std::map<std::string, Rational> merged;
  for (const auto& [c, d] : s.terms) {
    auto cert = diagram_certificate(d);
    auto it = merged.find(cert);
    if (it == merged.end()) merged.emplace(std::move(cert), c);
    else it->second += c;
  }
  std::string out = "Sin=[";
  for (const auto& x : s.in_bnd) out += x + ",";
  out += "];Sout=[";
  for (const auto& x : s.out_bnd) out += x + ",";
  out += "];terms=[";
  for (const auto& [cert, coeff] : merged) {
    if (coeff.is_zero()) continue;
    out += coeff.str() + "*" + cert + ";";
  }
  return out + "]";
}

inline bool structural_equal(const DiagramSum& a, const DiagramSum& b) {
  if (a.in_bnd != b.in_bnd || a.out_bnd != b.out_bnd) return false;
  return sum_certificate(a) == sum_certificate(b);
}

}  // namespace diagdiff
