#pragma once

// SMILES subset reader producing a heavy-atom molecular graph.
//
// Supported: organic-subset atoms C N O, aromatic c n o, bracket atoms
// [X] / [XHn] for X in {C,N,O,H,c,n,o}, bonds - = # :, branches, ring
// closures (digits and %nn), and '.' separated components. Charges,
// isotopes, stereo marks and other elements are rejected with the
// 1-based character position.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "qta/molecule.hpp"

namespace qta {

enum class BondOrder : int { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct GraphAtom {
  Element element = Element::C;
  bool aromatic = false;
  int charge = 0;
  int explicit_h = -1; // -1 when implicit (organic subset)
  bool in_ring = false;
};

struct GraphBond {
  int i = 0;
  int j = 0;
  BondOrder order = BondOrder::Single;
  bool in_ring = false;
};

class MolGraph {
public:
  std::vector<GraphAtom> atoms;
  std::vector<GraphBond> bonds;

  std::size_t atom_count() const { return atoms.size(); }
  std::size_t bond_count() const { return bonds.size(); }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(atoms.size());
    for (std::size_t b = 0; b < bonds.size(); ++b) {
      adj[bonds[b].i].push_back(static_cast<int>(b));
      adj[bonds[b].j].push_back(static_cast<int>(b));
    }
    return adj;
  }

  int component_count() const {
    std::vector<int> parent(atoms.size());
    for (std::size_t i = 0; i < parent.size(); ++i)
      parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    int comps = static_cast<int>(atoms.size());
    for (const auto &b : bonds) {
      int a = find(b.i), c = find(b.j);
      if (a != c) {
        parent[a] = c;
        --comps;
      }
    }
    return comps;
  }

  /// Cyclomatic number: independent ring count.
  int ring_count() const {
    return static_cast<int>(bonds.size()) - static_cast<int>(atoms.size()) + component_count();
  }

  /// Marks ring bonds (non-bridges) and ring atoms.
  void perceive_rings() {
    const auto adj = adjacency();
    const int n = static_cast<int>(atoms.size());
    std::vector<int> disc(n, -1), low(n, 0);
    int timer = 0;
    for (auto &b : bonds)
      b.in_ring = true;
    std::function<void(int, int)> dfs = [&](int u, int via) {
      disc[u] = low[u] = timer++;
      for (int b : adj[u]) {
        if (b == via)
          continue;
        int v = bonds[b].i == u ? bonds[b].j : bonds[b].i;
        if (disc[v] < 0) {
          dfs(v, b);
          low[u] = std::min(low[u], low[v]);
          if (low[v] > disc[u])
            bonds[b].in_ring = false;
        } else {
          low[u] = std::min(low[u], disc[v]);
        }
      }
    };
    for (int u = 0; u < n; ++u)
      if (disc[u] < 0)
        dfs(u, -1);
    for (auto &a : atoms)
      a.in_ring = false;
    for (const auto &b : bonds)
      if (b.in_ring)
        atoms[b.i].in_ring = atoms[b.j].in_ring = true;
  }
};

inline MolGraph parse_smiles(std::string_view s) {
  MolGraph g;
  if (s.empty())
    throw ParseError("smiles: empty string", 1);

  std::vector<int> branch_stack;
  int prev = -1;
  bool pending_bond = false;
  BondOrder bond = BondOrder::Single;
  struct Open {
    int atom;
    bool has_order;
    BondOrder order;
    std::size_t pos;
  };
  std::map<int, Open> open_rings;

  auto add_bond = [&](int a, int b, BondOrder o, std::size_t pos) {
    if (a == b)
      throw ParseError("smiles: self bond", pos);
    for (const auto &e : g.bonds)
      if ((e.i == a && e.j == b) || (e.i == b && e.j == a))
        throw ParseError("smiles: duplicate bond", pos);
    g.bonds.push_back({a, b, o, false});
  };

  auto implicit_order = [&](int a, int b) {
    return g.atoms[a].aromatic && g.atoms[b].aromatic ? BondOrder::Aromatic : BondOrder::Single;
  };

  auto attach = [&](GraphAtom atom, std::size_t pos) {
    g.atoms.push_back(atom);
    const int idx = static_cast<int>(g.atoms.size()) - 1;
    if (prev >= 0)
      add_bond(prev, idx, pending_bond ? bond : implicit_order(prev, idx), pos);
    pending_bond = false;
    prev = idx;
  };

  auto ring_closure = [&](int number, std::size_t pos) {
    if (prev < 0)
      throw ParseError("smiles: ring closure before any atom", pos);
    auto it = open_rings.find(number);
    if (it == open_rings.end()) {
      open_rings[number] = {prev, pending_bond, bond, pos};
    } else {
      const Open o = it->second;
      BondOrder ord = implicit_order(o.atom, prev);
      if (pending_bond && o.has_order && bond != o.order)
        throw ParseError("smiles: conflicting ring-closure bond orders", pos);
      if (pending_bond)
        ord = bond;
      else if (o.has_order)
        ord = o.order;
      add_bond(o.atom, prev, ord, pos);
      open_rings.erase(it);
    }
    pending_bond = false;
  };

  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    const std::size_t pos = i + 1;
    switch (c) {
    case 'C':
    case 'N':
    case 'O': {
      if (c == 'C' && i + 1 < s.size() && (s[i + 1] == 'l'))
        throw UnsupportedElementError("smiles: unsupported element 'Cl'", pos);
      GraphAtom a;
      a.element = element_from_symbol(std::string(1, c));
      attach(a, pos);
      ++i;
      break;
    }
    case 'c':
    case 'n':
    case 'o': {
      GraphAtom a;
      a.element = element_from_symbol(std::string(1, static_cast<char>(std::toupper(c))));
      a.aromatic = true;
      attach(a, pos);
      ++i;
      break;
    }
    case '[': {
      const auto close = s.find(']', i);
      if (close == std::string_view::npos)
        throw ParseError("smiles: unterminated bracket atom", pos);
      std::string_view body = s.substr(i + 1, close - i - 1);
      if (body.empty())
        throw ParseError("smiles: empty bracket atom", pos);
      std::size_t k = 0;
      if (std::isdigit(static_cast<unsigned char>(body[0])))
        throw ParseError("smiles: isotopes are not supported", pos);
      GraphAtom a;
      const char e = body[k++];
      if (std::string_view("CNOH").find(e) != std::string_view::npos) {
        a.element = element_from_symbol(std::string(1, e));
      } else if (std::string_view("cno").find(e) != std::string_view::npos) {
        a.element = element_from_symbol(std::string(1, static_cast<char>(std::toupper(e))));
        a.aromatic = true;
      } else {
        throw UnsupportedElementError("smiles: unsupported bracket atom '" + std::string(body) + "'", pos);
      }
      if (k < body.size() && std::islower(static_cast<unsigned char>(body[k])))
        throw UnsupportedElementError("smiles: unsupported bracket atom '" + std::string(body) + "'", pos);
      a.explicit_h = 0;
      if (k < body.size() && body[k] == 'H') {
        ++k;
        a.explicit_h = 1;
        if (k < body.size() && std::isdigit(static_cast<unsigned char>(body[k])))
          a.explicit_h = body[k++] - '0';
      }
      if (k != body.size()) {
        const char bad = body[k];
        if (bad == '+' || bad == '-')
          throw ParseError("smiles: charged atoms are not supported", pos + k + 1);
        if (bad == '@')
          throw ParseError("smiles: stereochemistry is not supported", pos + k + 1);
        throw ParseError("smiles: unsupported bracket atom '" + std::string(body) + "'", pos + k + 1);
      }
      attach(a, pos);
      i = close + 1;
      break;
    }
    case '-':
    case '=':
    case '#':
    case ':':
      if (pending_bond)
        throw ParseError("smiles: consecutive bond symbols", pos);
      if (prev < 0)
        throw ParseError("smiles: bond before any atom", pos);
      pending_bond = true;
      bond = c == '-' ? BondOrder::Single
             : c == '=' ? BondOrder::Double
             : c == '#' ? BondOrder::Triple
                        : BondOrder::Aromatic;
      ++i;
      break;
    case '(':
      if (prev < 0 || pending_bond)
        throw ParseError("smiles: misplaced branch", pos);
      branch_stack.push_back(prev);
      ++i;
      break;
    case ')':
      if (branch_stack.empty())
        throw ParseError("smiles: unbalanced ')'", pos);
      if (pending_bond)
        throw ParseError("smiles: dangling bond before ')'", pos);
      prev = branch_stack.back();
      branch_stack.pop_back();
      ++i;
      break;
    case '.':
      if (pending_bond || !branch_stack.empty())
        throw ParseError("smiles: misplaced '.'", pos);
      prev = -1;
      ++i;
      break;
    case '%': {
      if (i + 2 >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i + 1])) ||
          !std::isdigit(static_cast<unsigned char>(s[i + 2])))
        throw ParseError("smiles: '%' must be followed by two digits", pos);
      ring_closure((s[i + 1] - '0') * 10 + (s[i + 2] - '0'), pos);
      i += 3;
      break;
    }
    case '/':
    case '\\':
    case '@':
      throw ParseError("smiles: stereochemistry is not supported", pos);
    default:
      if (std::isdigit(static_cast<unsigned char>(c))) {
        ring_closure(c - '0', pos);
        ++i;
        break;
      }
      if (std::isalpha(static_cast<unsigned char>(c)))
        throw UnsupportedElementError(std::string("smiles: unsupported atom '") + c + "'", pos);
      throw ParseError(std::string("smiles: unsupported token '") + c + "'", pos);
    }
  }
  if (!branch_stack.empty())
    throw ParseError("smiles: unbalanced '('", s.size());
  if (pending_bond)
    throw ParseError("smiles: dangling bond at end", s.size());
  if (!open_rings.empty())
    throw ParseError("smiles: unclosed ring bond " + std::to_string(open_rings.begin()->first),
                     open_rings.begin()->second.pos);
  g.perceive_rings();
  return g;
}

/// Non-canonical depth-first SMILES writer (aliphatic atoms and explicit
/// bond symbols only; aromatic atoms are written lowercase).
inline std::string write_smiles(const MolGraph &g) {
  const auto adj = g.adjacency();
  const int n = static_cast<int>(g.atoms.size());
  std::vector<int> visited(n, 0);
  std::vector<char> tree_bond(g.bonds.size(), 0);
  std::vector<int> order;

  // spanning forest first, to know which bonds become ring closures
  std::function<void(int)> span = [&](int u) {
    visited[u] = 1;
    for (int b : adj[u]) {
      int v = g.bonds[b].i == u ? g.bonds[b].j : g.bonds[b].i;
      if (!visited[v]) {
        tree_bond[b] = 1;
        span(v);
      }
    }
  };
  std::vector<int> roots;
  for (int u = 0; u < n; ++u)
    if (!visited[u]) {
      roots.push_back(u);
      span(u);
    }

  std::vector<std::vector<std::pair<int, int>>> closures(n); // (bond, digit)
  int next_digit = 1;
  for (std::size_t b = 0; b < g.bonds.size(); ++b)
    if (!tree_bond[b]) {
      closures[g.bonds[b].i].push_back({static_cast<int>(b), next_digit});
      closures[g.bonds[b].j].push_back({static_cast<int>(b), next_digit});
      ++next_digit;
    }

  auto bond_symbol = [&](int b) -> std::string {
    const auto &bb = g.bonds[b];
    switch (bb.order) {
    case BondOrder::Double: return "=";
    case BondOrder::Triple: return "#";
    case BondOrder::Aromatic:
      return g.atoms[bb.i].aromatic && g.atoms[bb.j].aromatic ? "" : ":";
    default:
      return g.atoms[bb.i].aromatic && g.atoms[bb.j].aromatic ? "-" : "";
    }
  };
  auto atom_text = [&](int u) {
    const auto &a = g.atoms[u];
    std::string sym(symbol(a.element));
    if (a.aromatic)
      sym[0] = static_cast<char>(std::tolower(sym[0]));
    if (a.element == Element::H || a.explicit_h >= 0) {
      std::string t = "[" + sym;
      if (a.explicit_h > 0)
        t += "H" + (a.explicit_h > 1 ? std::to_string(a.explicit_h) : std::string());
      return t + "]";
    }
    return sym;
  };
  auto digit_text = [](int d) { return d < 10 ? std::to_string(d) : "%" + std::to_string(d); };

  std::fill(visited.begin(), visited.end(), 0);
  std::vector<char> closure_opened(g.bonds.size(), 0);
  std::string out;
  std::function<void(int)> emit = [&](int u) {
    visited[u] = 1;
    out += atom_text(u);
    for (auto [b, d] : closures[u]) {
      if (!closure_opened[b]) {
        closure_opened[b] = 1;
        out += bond_symbol(b) + digit_text(d);
      } else {
        out += digit_text(d);
      }
    }
    std::vector<int> kids;
    for (int b : adj[u])
      if (tree_bond[b]) {
        int v = g.bonds[b].i == u ? g.bonds[b].j : g.bonds[b].i;
        if (!visited[v])
          kids.push_back(b);
      }
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const int b = kids[k];
      const int v = g.bonds[b].i == u ? g.bonds[b].j : g.bonds[b].i;
      const bool branch = k + 1 < kids.size();
      if (branch)
        out += "(";
      out += bond_symbol(b);
      emit(v);
      if (branch)
        out += ")";
    }
  };
  for (std::size_t r = 0; r < roots.size(); ++r) {
    if (r)
      out += ".";
    emit(roots[r]);
  }
  return out;
}

} // namespace qta
