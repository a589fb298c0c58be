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
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "diagdiff/rational.hpp"

namespace diagdiff {

// ---------------------------------------------------------------------------
// Errors

class DiagError : public std::runtime_error {
public:
  explicit DiagError(const std::string& msg) : std::runtime_error(msg) {}
};

class BoundaryMismatch : public DiagError {
public:
  using DiagError::DiagError;
};
class NotEndomorphism : public DiagError {
public:
  using DiagError::DiagError;
};
class UnknownVariable : public DiagError {
public:
  using DiagError::DiagError;
};
class UnsupportedModifier : public DiagError {
public:
  using DiagError::DiagError;
};
class UnboundSymbol : public DiagError {
public:
  using DiagError::DiagError;
};
class SingularMatrix : public DiagError {
public:
  using DiagError::DiagError;
};
class ShapeMismatch : public DiagError {
public:
  using DiagError::DiagError;
};
class NonScalarArgument : public DiagError {
public:
  using DiagError::DiagError;
};
class DomainError : public DiagError {
public:
  using DiagError::DiagError;
};
class InternalError : public DiagError {
public:
  using DiagError::DiagError;
};

/// Source-located error for text and document parsing.
class ParseError : public DiagError {
public:
  ParseError(const std::string& msg, int line = -1, int col = -1)
      : DiagError(locate(msg, line, col)), line_(line), col_(col) {}
  int line() const { return line_; }
  int col() const { return col_; }

private:
  static std::string locate(const std::string& msg, int line, int col) {
    if (line < 0) return msg;
    return std::to_string(line) + ":" + std::to_string(col) + ": " + msg;
  }
  int line_, col_;
};

class ShapeError : public DiagError {
public:
  ShapeError(const std::string& msg, int line = -1, int col = -1)
      : DiagError(line < 0 ? msg
                           : std::to_string(line) + ":" + std::to_string(col) + ": " + msg),
        line_(line),
        col_(col) {}
  int line() const { return line_; }
  int col() const { return col_; }

private:
  int line_, col_;
};

// ---------------------------------------------------------------------------
// Dimensions and the registry

/// A symbolic dimension label ("m", "n", ...). Two labels are the same
/// dimension iff the names are equal.
using DimSym = std::string;

/// Declares box symbols: shape and whether the symbol is the independent
/// variable. Vectors are declared with no column dimension (a column vector
/// has a single wire; the scalar direction carries no wire at all).
class VarRegistry {
public:
  struct Entry {
    DimSym rows;
    std::optional<DimSym> cols;  // empty for column vectors
    bool is_variable = false;
  };

  void declare(const std::string& symbol, DimSym rows, std::optional<DimSym> cols,
               bool is_variable) {
    if (symbol.empty()) throw DiagError("empty box symbol");
    if (entries_.count(symbol)) throw DiagError("symbol declared twice: " + symbol);
    entries_[symbol] = Entry{std::move(rows), std::move(cols), is_variable};
  }

  bool has(const std::string& symbol) const { return entries_.count(symbol) != 0; }

  const Entry& at(const std::string& symbol) const {
    auto it = entries_.find(symbol);
    if (it == entries_.end()) throw UnboundSymbol("undeclared symbol: " + symbol);
    return it->second;
  }

  bool is_variable(const std::string& symbol) const {
    auto it = entries_.find(symbol);
    return it != entries_.end() && it->second.is_variable;
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }

private:
  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// Generators

struct DiagramSum;

/// A named or compound matrix box. `nested` is set for the inverse of a
/// compound subdiagram (e.g. (X+A)^-1); such boxes always carry `inverted`.
/// Modifier normal form: transpose is outermost, so the pair of flags covers
/// X, X', inv(X) and inv(X)' ( = inv(X') ).
struct Box {
  std::string label;                         // empty for compounds
  std::shared_ptr<const DiagramSum> nested;  // set iff compound
  std::optional<DimSym> rows;                // declared shape, before modifiers
  std::optional<DimSym> cols;
  bool transposed = false;
  bool inverted = false;

  bool is_compound() const { return nested != nullptr; }
  std::optional<DimSym> eff_out() const { return transposed ? cols : rows; }
  std::optional<DimSym> eff_in() const { return transposed ? rows : cols; }
};

/// Scalar function of a closed scalar subdiagram. Zero legs: the node is a
/// scalar factor of whatever component it sits in.
struct ScalarFnNode {
  enum class Fn { Sqrt, Pow };
  Fn fn = Fn::Sqrt;
  int exponent = 0;  // Pow only
  std::shared_ptr<const DiagramSum> arg;
};

struct Cup {
  DimSym dim;
};
struct Cap {
  DimSym dim;
};

/// Exchanges two tensor factors: (first ⊗ second) -> (second ⊗ first).
/// Legs: 0 = out second, 1 = out first, 2 = in first, 3 = in second.
struct SwapGen {
  DimSym first;
  DimSym second;
};

/// All-indices-equal tensor: component 1 when every incident index agrees,
/// 0 otherwise. Leg roles are presentational; the value only depends on the
/// degree. Legs: out legs first, then in legs.
struct Spider {
  DimSym dim;
  int out_legs = 0;
  int in_legs = 0;
  int degree() const { return out_legs + in_legs; }
};

using GenKind = std::variant<Box, ScalarFnNode, Cup, Cap, SwapGen, Spider>;

/// Ordered leg dimensions of a generator.
inline std::vector<DimSym> leg_dims(const GenKind& k) {
  struct V {
    std::vector<DimSym> operator()(const Box& b) const {
      std::vector<DimSym> out;
      if (b.eff_out()) out.push_back(*b.eff_out());
      if (b.eff_in()) out.push_back(*b.eff_in());
      return out;
    }
    std::vector<DimSym> operator()(const ScalarFnNode&) const { return {}; }
    std::vector<DimSym> operator()(const Cup& c) const { return {c.dim, c.dim}; }
    std::vector<DimSym> operator()(const Cap& c) const { return {c.dim, c.dim}; }
    std::vector<DimSym> operator()(const SwapGen& s) const {
      return {s.second, s.first, s.first, s.second};
    }
    std::vector<DimSym> operator()(const Spider& s) const {
      return std::vector<DimSym>(static_cast<std::size_t>(s.degree()), s.dim);
    }
  };
  return std::visit(V{}, k);
}

/// Leg index carrying a box's output (row) wire, if the box has one.
inline std::optional<int> box_out_leg(const Box& b) {
  if (!b.eff_out()) return std::nullopt;
  return 0;
}
/// Leg index carrying a box's input (column) wire, if the box has one.
inline std::optional<int> box_in_leg(const Box& b) {
  if (!b.eff_in()) return std::nullopt;
  return b.eff_out() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Ports, wires, diagrams

struct Port {
  enum class Loc : std::uint8_t { Node, In, Out };
  Loc loc = Loc::Node;
  int index = 0;  // node id, or boundary position
  int leg = 0;    // node leg (unused for boundary)

  static Port node(int id, int leg) { return Port{Loc::Node, id, leg}; }
  static Port bnd_in(int pos) { return Port{Loc::In, pos, 0}; }
  static Port bnd_out(int pos) { return Port{Loc::Out, pos, 0}; }

  bool is_boundary() const { return loc != Loc::Node; }
  auto key() const { return std::tuple(static_cast<int>(loc), index, leg); }
  bool operator==(const Port& o) const { return key() == o.key(); }
  bool operator<(const Port& o) const { return key() < o.key(); }
};

using Wire = std::pair<Port, Port>;

inline Wire make_wire(Port a, Port b) {
  if (b < a) std::swap(a, b);
  return {a, b};
}

/// An open port-graph over generator nodes. Wires are undirected; matrix
/// semantics lives in the ordered in/out boundaries. An identity wire is a
/// boundary-in port connected straight to a boundary-out port.
struct Diagram {
  std::vector<GenKind> nodes;
  std::vector<Wire> wires;
  std::vector<DimSym> in_bnd;
  std::vector<DimSym> out_bnd;

  bool closed() const { return in_bnd.empty() && out_bnd.empty(); }

  std::optional<DimSym> port_dim(const Port& p) const {
    switch (p.loc) {
      case Port::Loc::In:
        return p.index < static_cast<int>(in_bnd.size()) ? std::optional(in_bnd[p.index])
                                                         : std::nullopt;
      case Port::Loc::Out:
        return p.index < static_cast<int>(out_bnd.size()) ? std::optional(out_bnd[p.index])
                                                          : std::nullopt;
      case Port::Loc::Node: {
        if (p.index >= static_cast<int>(nodes.size())) return std::nullopt;
        auto dims = leg_dims(nodes[p.index]);
        if (p.leg >= static_cast<int>(dims.size())) return std::nullopt;
        return dims[p.leg];
      }
    }
    return std::nullopt;
  }

  /// Checks the structural invariants: every port used exactly once and
  /// matching dimensions on both ends of every wire.
  void validate() const {
    std::map<Port, int> uses;
    for (const auto& w : wires) {
      auto da = port_dim(w.first), db = port_dim(w.second);
      if (!da || !db) throw DiagError("wire references a nonexistent port");
      if (*da != *db)
        throw DiagError("wire connects mismatched dimensions " + *da + " vs " + *db);
      uses[w.first]++;
      uses[w.second]++;
      if (w.first == w.second) throw DiagError("wire connects a port to itself");
    }
    auto need = [&](Port p) {
      auto it = uses.find(p);
      if (it == uses.end()) throw DiagError("unwired port");
      if (it->second != 1) throw DiagError("port used more than once");
      uses.erase(it);
    };
    for (int n = 0; n < static_cast<int>(nodes.size()); ++n) {
      auto dims = leg_dims(nodes[n]);
      for (int l = 0; l < static_cast<int>(dims.size()); ++l) need(Port::node(n, l));
    }
    for (int p = 0; p < static_cast<int>(in_bnd.size()); ++p) need(Port::bnd_in(p));
    for (int p = 0; p < static_cast<int>(out_bnd.size()); ++p) need(Port::bnd_out(p));
    if (!uses.empty()) throw DiagError("wire references an unknown port");
  }

  /// Dimension names appearing anywhere in the diagram, sorted.
  std::vector<DimSym> used_dims() const;

  // Factories for the basic generators.
  static Diagram empty() { return Diagram{}; }
  static Diagram identity(const DimSym& d) {
    Diagram g;
    g.in_bnd = {d};
    g.out_bnd = {d};
    g.wires.push_back(make_wire(Port::bnd_in(0), Port::bnd_out(0)));
    return g;
  }
  static Diagram box(const Box& b) {
    Diagram g;
    g.nodes.push_back(b);
    if (auto o = box_out_leg(b)) {
      g.out_bnd = {*b.eff_out()};
      g.wires.push_back(make_wire(Port::node(0, *o), Port::bnd_out(0)));
    }
    if (auto i = box_in_leg(b)) {
      g.in_bnd = {*b.eff_in()};
      g.wires.push_back(make_wire(Port::node(0, *i), Port::bnd_in(0)));
    }
    return g;
  }
  static Diagram cup(const DimSym& d) {
    Diagram g;
    g.nodes.push_back(Cup{d});
    g.out_bnd = {d, d};
    g.wires.push_back(make_wire(Port::node(0, 0), Port::bnd_out(0)));
    g.wires.push_back(make_wire(Port::node(0, 1), Port::bnd_out(1)));
    return g;
  }
  static Diagram cap(const DimSym& d) {
    Diagram g;
    g.nodes.push_back(Cap{d});
    g.in_bnd = {d, d};
    g.wires.push_back(make_wire(Port::node(0, 0), Port::bnd_in(0)));
    g.wires.push_back(make_wire(Port::node(0, 1), Port::bnd_in(1)));
    return g;
  }
  static Diagram swap(const DimSym& a, const DimSym& b) {
    Diagram g;
    g.nodes.push_back(SwapGen{a, b});
    g.out_bnd = {b, a};
    g.in_bnd = {a, b};
    g.wires.push_back(make_wire(Port::node(0, 0), Port::bnd_out(0)));
    g.wires.push_back(make_wire(Port::node(0, 1), Port::bnd_out(1)));
    g.wires.push_back(make_wire(Port::node(0, 2), Port::bnd_in(0)));
    g.wires.push_back(make_wire(Port::node(0, 3), Port::bnd_in(1)));
    return g;
  }
  static Diagram spider(const DimSym& d, int out_legs, int in_legs) {
    if (out_legs + in_legs < 1) throw DiagError("spider needs at least one leg");
    Diagram g;
    g.nodes.push_back(Spider{d, out_legs, in_legs});
    for (int i = 0; i < out_legs; ++i) {
      g.out_bnd.push_back(d);
      g.wires.push_back(make_wire(Port::node(0, i), Port::bnd_out(i)));
    }
    for (int i = 0; i < in_legs; ++i) {
      g.in_bnd.push_back(d);
      g.wires.push_back(make_wire(Port::node(0, out_legs + i), Port::bnd_in(i)));
    }
    return g;
  }
};

/// Formal linear combination of boundary-compatible diagrams with exact
/// coefficients. An empty term list is the zero map for that boundary.
struct DiagramSum {
  std::vector<DimSym> in_bnd;
  std::vector<DimSym> out_bnd;
  std::vector<std::pair<Rational, Diagram>> terms;

  static DiagramSum zero(std::vector<DimSym> in, std::vector<DimSym> out) {
    return DiagramSum{std::move(in), std::move(out), {}};
  }
  static DiagramSum single(Diagram d, Rational coeff = Rational(1)) {
    DiagramSum s{d.in_bnd, d.out_bnd, {}};
    if (!coeff.is_zero()) s.terms.emplace_back(coeff, std::move(d));
    return s;
  }

  void push_term(Rational coeff, Diagram d) {
    if (coeff.is_zero()) return;
    if (d.in_bnd != in_bnd || d.out_bnd != out_bnd)
      throw BoundaryMismatch("term boundary does not match the sum boundary");
    terms.emplace_back(std::move(coeff), std::move(d));
  }

  void validate() const {
    for (const auto& [c, d] : terms) {
      if (c.is_zero()) throw DiagError("zero coefficient stored in a sum");
      if (d.in_bnd != in_bnd || d.out_bnd != out_bnd)
        throw BoundaryMismatch("term boundary does not match the sum boundary");
      d.validate();
    }
  }
};

inline std::vector<DimSym> Diagram::used_dims() const {
  std::set<DimSym> s(in_bnd.begin(), in_bnd.end());
  s.insert(out_bnd.begin(), out_bnd.end());
  struct V {
    std::set<DimSym>& s;
    void operator()(const Box& b) {
      if (b.rows) s.insert(*b.rows);
      if (b.cols) s.insert(*b.cols);
      if (b.nested) collect(*b.nested);
    }
    void operator()(const ScalarFnNode& f) {
      if (f.arg) collect(*f.arg);
    }
    void operator()(const Cup& c) { s.insert(c.dim); }
    void operator()(const Cap& c) { s.insert(c.dim); }
    void operator()(const SwapGen& w) {
      s.insert(w.first);
      s.insert(w.second);
    }
    void operator()(const Spider& p) { s.insert(p.dim); }
    void collect(const DiagramSum& sum) {
      s.insert(sum.in_bnd.begin(), sum.in_bnd.end());
      s.insert(sum.out_bnd.begin(), sum.out_bnd.end());
      for (const auto& [c, d] : sum.terms) {
        (void)c;
        auto ds = d.used_dims();
        s.insert(ds.begin(), ds.end());
      }
    }
  } v{s};
  for (const auto& n : nodes) std::visit(v, n);
  return {s.begin(), s.end()};
}

// ---------------------------------------------------------------------------
// Assembly: splicing diagrams together through interface junctions.
//
// A junction is a point where two wire ends meet and fuse. Chains of
// junctions collapse into single wires; a cycle made only of junctions is a
// free loop and materializes as a self-connected degree-2 spider (the
// symbolic dimension factor).

namespace detail {

class Assembler {
public:
  std::vector<GenKind> nodes;
  std::vector<DimSym> in_bnd;
  std::vector<DimSym> out_bnd;

  int add_node(GenKind k) {
    nodes.push_back(std::move(k));
    return static_cast<int>(nodes.size()) - 1;
  }
  int new_junction(const DimSym& d) {
    junction_dims_.push_back(d);
    return static_cast<int>(junction_dims_.size()) - 1;
  }

  struct End {
    bool is_junction = false;
    Port port;
    int junction = -1;
  };
  static End at_port(Port p) { return End{false, p, -1}; }
  static End at_junction(int j) { return End{true, Port{}, j}; }

  void link(End a, End b, const DimSym& d) { links_.push_back({a, b, d}); }

  Diagram finish() {
    Diagram g;
    g.nodes = std::move(nodes);
    g.in_bnd = std::move(in_bnd);
    g.out_bnd = std::move(out_bnd);

    // Junction adjacency: every junction must see exactly two link ends.
    std::vector<std::vector<std::pair<int, int>>> adj(junction_dims_.size());
    for (int i = 0; i < static_cast<int>(links_.size()); ++i) {
      if (links_[i].a.is_junction) adj[links_[i].a.junction].push_back({i, 0});
      if (links_[i].b.is_junction) adj[links_[i].b.junction].push_back({i, 1});
    }
    for (const auto& a : adj)
      if (a.size() != 2) throw InternalError("junction degree must be 2");

    std::vector<bool> used(links_.size(), false);
    // Chains that start and end at real ports.
    for (int i = 0; i < static_cast<int>(links_.size()); ++i) {
      if (used[i]) continue;
      if (links_[i].a.is_junction && links_[i].b.is_junction) continue;
      // Walk from a port end towards the other side.
      int start = i;
      int side = links_[i].a.is_junction ? 1 : 0;  // side holding the port
      Port p0 = side == 0 ? links_[i].a.port : links_[i].b.port;
      used[i] = true;
      int cur = i, curside = 1 - side;
      while (true) {
        const End& e = curside == 0 ? links_[cur].a : links_[cur].b;
        if (!e.is_junction) {
          g.wires.push_back(make_wire(p0, e.port));
          break;
        }
        // Step through the junction to the other incident link.
        const auto& inc = adj[e.junction];
        auto [l0, s0] = inc[0];
        auto [l1, s1] = inc[1];
        int nxt = (l0 == cur && s0 == curside) ? l1 : l0;
        int nxtside = (l0 == cur && s0 == curside) ? s1 : s0;
        used[nxt] = true;
        cur = nxt;
        curside = 1 - nxtside;
      }
      (void)start;
    }
    // Remaining links form junction-only cycles: free loops.
    for (int i = 0; i < static_cast<int>(links_.size()); ++i) {
      if (used[i]) continue;
      // Mark the whole cycle.
      int cur = i, curside = 1;
      used[i] = true;
      while (true) {
        const End& e = curside == 0 ? links_[cur].a : links_[cur].b;
        const auto& inc = adj[e.junction];
        auto [l0, s0] = inc[0];
        auto [l1, s1] = inc[1];
        int nxt = (l0 == cur && s0 == curside) ? l1 : l0;
        int nxtside = (l0 == cur && s0 == curside) ? s1 : s0;
        if (used[nxt] && nxt == i) break;
        used[nxt] = true;
        cur = nxt;
        curside = 1 - nxtside;
      }
      int id = static_cast<int>(g.nodes.size());
      g.nodes.push_back(Spider{links_[i].dim, 1, 1});
      g.wires.push_back(make_wire(Port::node(id, 0), Port::node(id, 1)));
    }
    return g;
  }

private:
  struct Link {
    End a, b;
    DimSym dim;
  };
  std::vector<DimSym> junction_dims_;
  std::vector<Link> links_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Composition algebra

/// Sequential composition: `bottom` feeds `top`, matching matrix product
/// semantics eval(compose_seq(A, B)) = eval(A) * eval(B).
inline Diagram compose_seq(const Diagram& top, const Diagram& bottom) {
  if (bottom.out_bnd != top.in_bnd) {
    std::ostringstream os;
    os << "sequential composition boundary mismatch at positions:";
    std::size_t n = std::max(bottom.out_bnd.size(), top.in_bnd.size());
    for (std::size_t i = 0; i < n; ++i) {
      std::string lo = i < bottom.out_bnd.size() ? bottom.out_bnd[i] : "<none>";
      std::string hi = i < top.in_bnd.size() ? top.in_bnd[i] : "<none>";
      if (lo != hi) os << " " << i << " (" << lo << " vs " << hi << ")";
    }
    throw BoundaryMismatch(os.str());
  }
  detail::Assembler as;
  for (const auto& n : bottom.nodes) as.add_node(n);
  int off = static_cast<int>(bottom.nodes.size());
  for (const auto& n : top.nodes) as.add_node(n);
  as.in_bnd = bottom.in_bnd;
  as.out_bnd = top.out_bnd;

  std::vector<int> junctions;
  junctions.reserve(bottom.out_bnd.size());
  for (const auto& d : bottom.out_bnd) junctions.push_back(as.new_junction(d));

  auto map_bottom = [&](const Port& p) {
    if (p.loc == Port::Loc::Out) return detail::Assembler::at_junction(junctions[p.index]);
    return detail::Assembler::at_port(p);
  };
  auto map_top = [&](const Port& p) {
    if (p.loc == Port::Loc::In) return detail::Assembler::at_junction(junctions[p.index]);
    if (p.loc == Port::Loc::Node)
      return detail::Assembler::at_port(Port::node(p.index + off, p.leg));
    return detail::Assembler::at_port(p);
  };
  for (const auto& w : bottom.wires)
    as.link(map_bottom(w.first), map_bottom(w.second), *bottom.port_dim(w.first));
  for (const auto& w : top.wires)
    as.link(map_top(w.first), map_top(w.second), *top.port_dim(w.first));
  return as.finish();
}

/// Parallel composition (tensor product): boundaries concatenate
/// left-then-right, nodes take a disjoint union.
inline Diagram compose_par(const Diagram& left, const Diagram& right) {
  Diagram g = left;
  int off = static_cast<int>(left.nodes.size());
  int in_off = static_cast<int>(left.in_bnd.size());
  int out_off = static_cast<int>(left.out_bnd.size());
  g.nodes.insert(g.nodes.end(), right.nodes.begin(), right.nodes.end());
  g.in_bnd.insert(g.in_bnd.end(), right.in_bnd.begin(), right.in_bnd.end());
  g.out_bnd.insert(g.out_bnd.end(), right.out_bnd.begin(), right.out_bnd.end());
  auto shift = [&](Port p) {
    switch (p.loc) {
      case Port::Loc::Node:
        p.index += off;
        break;
      case Port::Loc::In:
        p.index += in_off;
        break;
      case Port::Loc::Out:
        p.index += out_off;
        break;
    }
    return p;
  };
  for (const auto& w : right.wires) g.wires.push_back(make_wire(shift(w.first), shift(w.second)));
  return g;
}

/// 180-degree rotation: the diagrammatic transpose. Boundaries swap sides and
/// reverse, boxes toggle their transpose modifier, cups and caps exchange,
/// swap and spider leg roles exchange.
inline Diagram rotate180(const Diagram& d) {
  Diagram g;
  g.in_bnd.assign(d.out_bnd.rbegin(), d.out_bnd.rend());
  g.out_bnd.assign(d.in_bnd.rbegin(), d.in_bnd.rend());

  // Per-node leg permutations (old leg -> new leg).
  std::vector<std::vector<int>> legmap(d.nodes.size());
  g.nodes.reserve(d.nodes.size());
  for (std::size_t i = 0; i < d.nodes.size(); ++i) {
    const GenKind& k = d.nodes[i];
    if (const auto* b = std::get_if<Box>(&k)) {
      Box nb = *b;
      nb.transposed = !nb.transposed;
      int nlegs = static_cast<int>(leg_dims(k).size());
      std::vector<int> m(nlegs);
      // Out leg becomes in leg and vice versa; with both present the leg
      // indices swap, with one leg present the index stays 0.
      if (nlegs == 2) m = {1, 0};
      else if (nlegs == 1) m = {0};
      g.nodes.push_back(nb);
      legmap[i] = std::move(m);
    } else if (const auto* c = std::get_if<Cup>(&k)) {
      g.nodes.push_back(Cap{c->dim});
      legmap[i] = {0, 1};
    } else if (const auto* c2 = std::get_if<Cap>(&k)) {
      g.nodes.push_back(Cup{c2->dim});
      legmap[i] = {0, 1};
    } else if (const auto* s = std::get_if<SwapGen>(&k)) {
      g.nodes.push_back(SwapGen{s->second, s->first});
      legmap[i] = {2, 3, 0, 1};
    } else if (const auto* p = std::get_if<Spider>(&k)) {
      g.nodes.push_back(Spider{p->dim, p->in_legs, p->out_legs});
      std::vector<int> m(p->degree());
      for (int l = 0; l < p->out_legs; ++l) m[l] = p->in_legs + l;
      for (int l = 0; l < p->in_legs; ++l) m[p->out_legs + l] = l;
      legmap[i] = std::move(m);
    } else {
      g.nodes.push_back(k);  // ScalarFn: no legs, scalar transpose is itself
      legmap[i] = {};
    }
  }
  auto map = [&](Port p) {
    switch (p.loc) {
      case Port::Loc::Node:
        p.leg = legmap[p.index][p.leg];
        return p;
      case Port::Loc::In:
        return Port::bnd_out(static_cast<int>(d.in_bnd.size()) - 1 - p.index);
      case Port::Loc::Out:
        return Port::bnd_in(static_cast<int>(d.out_bnd.size()) - 1 - p.index);
    }
    return p;
  };
  for (const auto& w : d.wires) g.wires.push_back(make_wire(map(w.first), map(w.second)));
  return g;
}

/// Closes a single-wire endomorphism with an explicit cup/cap pair:
/// Tr X = <cap| (X ⊗ 1) |cup>.
inline Diagram close_trace(const Diagram& d) {
  if (d.in_bnd.size() != 1 || d.out_bnd.size() != 1 || d.in_bnd[0] != d.out_bnd[0])
    throw NotEndomorphism("trace closure needs matching single-wire boundaries");
  const DimSym& dim = d.in_bnd[0];
  Diagram g;
  g.nodes = d.nodes;
  int cup_id = static_cast<int>(g.nodes.size());
  g.nodes.push_back(Cup{dim});
  int cap_id = static_cast<int>(g.nodes.size());
  g.nodes.push_back(Cap{dim});
  auto map = [&](Port p) {
    if (p.loc == Port::Loc::In) return Port::node(cup_id, 0);
    if (p.loc == Port::Loc::Out) return Port::node(cap_id, 0);
    return p;
  };
  for (const auto& w : d.wires) g.wires.push_back(make_wire(map(w.first), map(w.second)));
  g.wires.push_back(make_wire(Port::node(cup_id, 1), Port::node(cap_id, 1)));
  return g;
}

/// Reorders the boundary: out_perm[new_pos] = old_pos (same for in_perm).
inline Diagram permute_boundary(const Diagram& d, const std::vector<int>& out_perm,
                                const std::vector<int>& in_perm) {
  if (out_perm.size() != d.out_bnd.size() || in_perm.size() != d.in_bnd.size())
    throw InternalError("boundary permutation size mismatch");
  Diagram g;
  g.nodes = d.nodes;
  g.out_bnd.resize(d.out_bnd.size());
  g.in_bnd.resize(d.in_bnd.size());
  std::vector<int> out_inv(out_perm.size()), in_inv(in_perm.size());
  for (std::size_t i = 0; i < out_perm.size(); ++i) {
    g.out_bnd[i] = d.out_bnd[out_perm[i]];
    out_inv[out_perm[i]] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < in_perm.size(); ++i) {
    g.in_bnd[i] = d.in_bnd[in_perm[i]];
    in_inv[in_perm[i]] = static_cast<int>(i);
  }
  auto map = [&](Port p) {
    if (p.loc == Port::Loc::Out) p.index = out_inv[p.index];
    else if (p.loc == Port::Loc::In) p.index = in_inv[p.index];
    return p;
  };
  for (const auto& w : d.wires) g.wires.push_back(make_wire(map(w.first), map(w.second)));
  return g;
}

}  // namespace diagdiff
