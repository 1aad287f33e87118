#pragma once

// QM9-style XYZ reader.
//
// Line 1 is the atom count. Line 2 is either the QM9 property line
//   gdb <idx> A B C mu alpha homo lumo gap r2 zpve U0 U H G Cv
// (coordinates in Angstrom), or extended key=value metadata
//   id=<id> units=angstrom|bohr alpha=.. gap=.. u0=.. cv=.. mu=.. smiles=..
// Atom lines are "<El> x y z [extra columns]". In the QM9 layout the line
// after the frequencies carries the SMILES string.

#include <sstream>
#include <string>
#include <string_view>

#include "qta/molecule.hpp"
#include "qta/sumviz.hpp"

namespace qta {

inline MoleculeRecord parse_xyz_extended(std::string_view text, const std::string &fallback_id = {}) {
  using namespace detail;
  std::vector<std::string> lines;
  {
    std::string buf{text};
    std::istringstream is(buf);
    std::string l;
    while (std::getline(is, l)) {
      if (!l.empty() && l.back() == '\r')
        l.pop_back();
      lines.push_back(l);
    }
  }
  if (lines.size() < 2 || trim(lines[0]).empty())
    throw ParseError("xyz: missing count or property line", 1);

  long n = 0;
  {
    auto c = std::string(trim(lines[0]));
    auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), n);
    if (ec != std::errc() || p != c.data() + c.size() || n < 1)
      throw ParseError("xyz: invalid atom count '" + c + "'", 1);
  }
  if (lines.size() < static_cast<std::size_t>(n) + 2)
    throw ParseError("xyz: atom count " + std::to_string(n) + " exceeds atom lines present",
                     lines.size());

  MoleculeRecord rec;
  rec.id = fallback_id;
  double unit = kBohrPerAngstrom;
  const auto head = split_ws(lines[1]);
  const bool qm9 = !head.empty() && head[0] == "gdb";
  if (qm9) {
    if (head.size() < 17)
      throw ParseError("xyz: QM9 property line has " + std::to_string(head.size()) +
                           " fields, expected 17",
                       2);
    rec.id = "gdb_" + head[1];
    auto prop = [&](int k) { return parse_real(head[k], 2); };
    rec.props["mu"] = prop(5);
    rec.props["alpha"] = prop(6);
    rec.props["gap"] = prop(9);
    rec.props["u0"] = prop(12);
    rec.props["cv"] = prop(16);
  } else {
    for (const auto &tok : head) {
      auto eq = tok.find('=');
      if (eq == std::string::npos)
        throw ParseError("xyz: metadata token '" + tok + "' is not key=value", 2);
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "id")
        rec.id = val;
      else if (key == "units") {
        if (val == "angstrom")
          unit = kBohrPerAngstrom;
        else if (val == "bohr")
          unit = 1.0;
        else
          throw ParseError("xyz: unknown units '" + val + "'", 2);
      } else if (key == "smiles")
        rec.smiles = val;
      else if (val != "nan" && !val.empty())
        rec.props[key] = parse_real(val, 2);
    }
  }

  for (long a = 0; a < n; ++a) {
    const std::size_t ln = static_cast<std::size_t>(a) + 3;
    const auto toks = split_ws(lines[ln - 1]);
    if (toks.size() < 4)
      throw ParseError("xyz: atom line needs element and three coordinates", ln);
    Element e;
    try {
      e = element_from_symbol(toks[0]);
    } catch (const UnsupportedElementError &) {
      throw UnsupportedElementError("xyz: unsupported element '" + toks[0] + "'", ln);
    }
    rec.elements.push_back(e);
    rec.positions.emplace_back(unit * parse_real(toks[1], ln), unit * parse_real(toks[2], ln),
                               unit * parse_real(toks[3], ln));
  }
  for (std::size_t k = static_cast<std::size_t>(n) + 2; k < lines.size(); ++k) {
    auto t = trim(lines[k]);
    if (t.empty())
      continue;
    auto toks = split_ws(t);
    if (!qm9 && toks.size() == 4 && toks[0].size() <= 2)
      throw ParseError("xyz: more atom lines than the declared count", k + 1);
    if (qm9 && k == static_cast<std::size_t>(n) + 3 && !toks.empty())
      rec.smiles = toks[0];
  }
  rec.validate();
  return rec;
}

/// Writes the key=value layout in Bohr with 12 significant digits.
inline std::string write_xyz_extended(const MoleculeRecord &rec) {
  std::ostringstream os;
  os.precision(12);
  os << rec.size() << "\n";
  os << "id=" << rec.id << " units=bohr";
  for (const auto &[k, v] : rec.props)
    os << " " << k << "=" << v;
  if (!rec.smiles.empty())
    os << " smiles=" << rec.smiles;
  os << "\n";
  for (std::size_t a = 0; a < rec.size(); ++a)
    os << symbol(rec.elements[a]) << " " << rec.positions[a].x() << " " << rec.positions[a].y()
       << " " << rec.positions[a].z() << "\n";
  return os.str();
}

} // namespace qta
