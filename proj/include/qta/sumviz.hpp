#pragma once

// Reader for the subset of AIMAll .sumviz output the toolkit consumes.
//
//   Molecule: <id>                                      (optional)
//   Nuclear Charges and Cartesian Coordinates:
//     Atom   Charge   X   Y   Z                         (Bohr)
//     C1     6.0      ...
//   Some Atomic Properties:
//     Atom   N   LI   [other columns ignored]
//   Atomic Multipole Moments:
//     Atom   Mu_x Mu_y Mu_z   <quadrupole columns>
//
// Quadrupole columns are either Cartesian (Q_xx Q_xy Q_xz Q_yy Q_yz Q_zz) or
// already in the 5-component convention (Q_xy Q_xz Q_yz Q_an Q_zz). Lines of
// dashes or '=' are ignored; a section ends at a blank line or the next
// sentinel.

#include <cctype>
#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qta/molecule.hpp"

namespace qta {

struct SumvizSentinels {
  std::string geometry = "Nuclear Charges and Cartesian Coordinates";
  std::string properties = "Some Atomic Properties";
  std::string multipoles = "Atomic Multipole Moments";
};

struct SumvizResult {
  MoleculeRecord geometry; // id, elements, positions
  std::vector<AtomTargets> targets;
};

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])))
      ++j;
    if (j > i)
      out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

/// Parses a real number; accepts Fortran 'D' exponents and the QM9 '*^' form.
inline double parse_real(std::string tok, std::size_t line) {
  for (auto &ch : tok)
    if (ch == 'D' || ch == 'd')
      ch = 'E';
  if (auto p = tok.find("*^"); p != std::string::npos)
    tok.replace(p, 2, "E");
  double v = 0.0;
  const char *b = tok.data();
  const char *e = tok.data() + tok.size();
  if (!tok.empty() && *b == '+')
    ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e)
    throw ParseError("malformed number '" + tok + "'", line);
  return v;
}

inline bool is_rule(std::string_view s) {
  s = trim(s);
  if (s.empty())
    return false;
  for (char c : s)
    if (c != '-' && c != '=')
      return false;
  return true;
}

inline bool starts_with(std::string_view s, std::string_view p) {
  return s.substr(0, p.size()) == p;
}

/// Element from an AIMAll atom label such as "C12".
inline Element element_from_label(const std::string &label, std::size_t line) {
  std::string sym;
  for (char c : label) {
    if (!std::isalpha(static_cast<unsigned char>(c)))
      break;
    sym.push_back(c);
  }
  if (sym.empty())
    throw ParseError("atom label '" + label + "' has no element symbol", line);
  sym[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sym[0])));
  for (std::size_t i = 1; i < sym.size(); ++i)
    sym[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(sym[i])));
  try {
    return element_from_symbol(sym);
  } catch (const UnsupportedElementError &) {
    throw UnsupportedElementError("unsupported element '" + sym + "'", line);
  }
}

struct Table {
  std::size_t header_line = 0;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;
};

} // namespace detail

inline SumvizResult parse_sumviz(std::string_view text, const std::string &fallback_id = {},
                                 const SumvizSentinels &sentinels = {}) {
  using namespace detail;
  if (trim(text).empty())
    throw ParseError("empty .sumviz input");

  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start <= text.size()) {
      auto nl = text.find('\n', start);
      if (nl == std::string_view::npos)
        nl = text.size();
      auto l = text.substr(start, nl - start);
      if (!l.empty() && l.back() == '\r')
        l.remove_suffix(1);
      lines.push_back(l);
      start = nl + 1;
    }
  }

  std::string id = fallback_id;
  std::map<std::string, Table> tables;
  const std::vector<std::string> names{sentinels.geometry, sentinels.properties,
                                       sentinels.multipoles};

  auto sentinel_at = [&](std::string_view l) -> const std::string * {
    auto t = trim(l);
    for (const auto &n : names)
      if (starts_with(t, n))
        return &n;
    return nullptr;
  };

  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto t = trim(lines[i]);
    if (starts_with(t, "Molecule:")) {
      id = std::string(trim(t.substr(9)));
      continue;
    }
    const std::string *name = sentinel_at(lines[i]);
    if (!name)
      continue;
    Table table;
    std::size_t j = i + 1;
    // header: first non-rule, non-blank line starting with "Atom"
    for (; j < lines.size(); ++j) {
      auto h = trim(lines[j]);
      if (h.empty() || is_rule(h))
        continue;
      if (!starts_with(h, "Atom"))
        throw ParseError("section '" + *name + "' lacks an 'Atom' column header", j + 1);
      table.columns = split_ws(h);
      table.header_line = j + 1;
      ++j;
      break;
    }
    for (; j < lines.size(); ++j) {
      auto r = trim(lines[j]);
      if (is_rule(r))
        continue;
      if (r.empty() || sentinel_at(r))
        break;
      auto toks = split_ws(r);
      if (toks.size() != table.columns.size())
        throw ParseError("expected " + std::to_string(table.columns.size()) +
                             " fields, found " + std::to_string(toks.size()),
                         j + 1);
      table.rows.push_back(std::move(toks));
      table.row_lines.push_back(j + 1);
    }
    tables[*name] = std::move(table);
    i = j - 1;
  }

  for (const auto &n : names)
    if (!tables.count(n))
      throw ParseError("missing section '" + n + "'");

  auto column_index = [](const Table &t, const std::vector<std::string> &wanted,
                         const std::string &section) {
    std::vector<std::size_t> idx;
    std::vector<std::string> missing;
    for (const auto &w : wanted) {
      std::size_t k = 0;
      while (k < t.columns.size() && t.columns[k] != w)
        ++k;
      if (k == t.columns.size())
        missing.push_back(w);
      idx.push_back(k);
    }
    if (!missing.empty()) {
      std::string msg = "section '" + section + "' missing columns:";
      for (const auto &m : missing)
        msg += " " + m;
      throw ParseError(msg, t.header_line);
    }
    return idx;
  };

  const Table &geo = tables[sentinels.geometry];
  const Table &props = tables[sentinels.properties];
  const Table &mult = tables[sentinels.multipoles];

  const std::size_t n_atoms = geo.rows.size();
  if (n_atoms == 0)
    throw ParseError("geometry section has no atoms", geo.header_line);
  if (props.rows.size() != n_atoms)
    throw ParseError("atom count mismatch: geometry has " + std::to_string(n_atoms) +
                         ", properties has " + std::to_string(props.rows.size()),
                     props.header_line);
  if (mult.rows.size() != n_atoms)
    throw ParseError("atom count mismatch: geometry has " + std::to_string(n_atoms) +
                         ", multipoles has " + std::to_string(mult.rows.size()),
                     mult.header_line);

  SumvizResult out;
  out.geometry.id = id;
  const auto gi = column_index(geo, {"Atom", "Charge", "X", "Y", "Z"}, sentinels.geometry);
  std::vector<std::string> labels;
  for (std::size_t a = 0; a < n_atoms; ++a) {
    const auto &row = geo.rows[a];
    const auto ln = geo.row_lines[a];
    const Element e = element_from_label(row[gi[0]], ln);
    const double z = parse_real(row[gi[1]], ln);
    if (std::abs(z - atomic_number(e)) > 1e-6)
      throw ParseError("nuclear charge does not match element of " + row[gi[0]], ln);
    out.geometry.elements.push_back(e);
    out.geometry.positions.emplace_back(parse_real(row[gi[2]], ln), parse_real(row[gi[3]], ln),
                                        parse_real(row[gi[4]], ln));
    labels.push_back(row[gi[0]]);
  }

  const auto pi = column_index(props, {"Atom", "N", "LI"}, sentinels.properties);
  const auto mi = column_index(mult, {"Atom", "Mu_x", "Mu_y", "Mu_z"}, sentinels.multipoles);

  auto has = [](const Table &t, const char *c) {
    for (const auto &col : t.columns)
      if (col == c)
        return true;
    return false;
  };
  const bool cartesian = has(mult, "Q_xx");
  const auto qi = cartesian ? column_index(mult, {"Q_xx", "Q_xy", "Q_xz", "Q_yy", "Q_yz", "Q_zz"},
                                           sentinels.multipoles)
                            : column_index(mult, {"Q_xy", "Q_xz", "Q_yz", "Q_an", "Q_zz"},
                                           sentinels.multipoles);

  for (std::size_t a = 0; a < n_atoms; ++a) {
    const auto &pr = props.rows[a];
    const auto &mr = mult.rows[a];
    if (pr[pi[0]] != labels[a])
      throw ParseError("atom order differs between sections at " + pr[pi[0]],
                       props.row_lines[a]);
    if (mr[mi[0]] != labels[a])
      throw ParseError("atom order differs between sections at " + mr[mi[0]],
                       mult.row_lines[a]);
    const auto pl = props.row_lines[a];
    const auto ml = mult.row_lines[a];
    AtomTargets t;
    t.n_e = parse_real(pr[pi[1]], pl);
    t.li = parse_real(pr[pi[2]], pl);
    t.mu = Vec3(parse_real(mr[mi[1]], ml), parse_real(mr[mi[2]], ml), parse_real(mr[mi[3]], ml));
    if (cartesian) {
      std::array<double, 6> q;
      for (int k = 0; k < 6; ++k)
        q[k] = parse_real(mr[qi[k]], ml);
      try {
        t.quad = to_traceless5(q);
      } catch (const ValidationError &e) {
        throw ParseError(e.what(), ml);
      }
    } else {
      for (int k = 0; k < 5; ++k)
        t.quad[k] = parse_real(mr[qi[k]], ml);
    }
    out.targets.push_back(t);
  }
  return out;
}

/// Writes the same subset (5-component quadrupole layout).
inline std::string write_sumviz(const MoleculeRecord &geom, const std::vector<AtomTargets> &targets,
                                const SumvizSentinels &sentinels = {}) {
  require(geom.size() == targets.size(), "write_sumviz: atom count mismatch");
  std::ostringstream os;
  os.precision(12);
  os << std::scientific;
  std::vector<std::string> labels;
  std::map<Element, int> counter;
  for (auto e : geom.elements)
    labels.push_back(std::string(symbol(e)) + std::to_string(++counter[e]));
  os << "Molecule: " << geom.id << "\n\n";
  os << sentinels.geometry << ":\n";
  os << "-----------------------------------------------------------------------\n";
  os << "  Atom      Charge                X                  Y                  Z\n";
  os << "-----------------------------------------------------------------------\n";
  for (std::size_t a = 0; a < geom.size(); ++a)
    os << "  " << labels[a] << "  " << atomic_number(geom.elements[a]) << ".0  "
       << geom.positions[a].x() << "  " << geom.positions[a].y() << "  "
       << geom.positions[a].z() << "\n";
  os << "\n" << sentinels.properties << ":\n";
  os << "  Atom   N   LI\n";
  for (std::size_t a = 0; a < geom.size(); ++a)
    os << "  " << labels[a] << "  " << targets[a].n_e << "  " << targets[a].li << "\n";
  os << "\n" << sentinels.multipoles << ":\n";
  os << "  Atom   Mu_x   Mu_y   Mu_z   Q_xy   Q_xz   Q_yz   Q_an   Q_zz\n";
  for (std::size_t a = 0; a < geom.size(); ++a) {
    const auto &t = targets[a];
    os << "  " << labels[a] << "  " << t.mu.x() << "  " << t.mu.y() << "  " << t.mu.z();
    for (int k = 0; k < 5; ++k)
      os << "  " << t.quad[k];
    os << "\n";
  }
  return os.str();
}

} // namespace qta
