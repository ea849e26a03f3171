#pragma once

// Abstract syntax for Hypothetical Datalog: terms, atoms, goals, rules and
// REPL inputs, together with the canonical printer.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace hdl {

enum class ArithOp { Add, Sub, Mul, Div, Mod };
enum class CmpOp { Eq, Ne, Lt, Gt, Le, Ge };

inline const char* to_cstr(ArithOp op) {
  switch (op) {
    case ArithOp::Add: return "+";
    case ArithOp::Sub: return "-";
    case ArithOp::Mul: return "*";
    case ArithOp::Div: return "/";
    case ArithOp::Mod: return "mod";
  }
  return "?";
}

inline const char* to_cstr(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "\\=";
    case CmpOp::Lt: return "<";
    case CmpOp::Gt: return ">";
    case CmpOp::Le: return "=<";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

/// A Datalog term. Symbols sort before integers, which is the answer display
/// order; variables and arithmetic never reach the answer tables.
struct Term {
  enum class Kind { Sym, Int, Var, Arith };

  Kind kind = Kind::Sym;
  std::string text;  // symbol or variable name
  int scope = 0;     // variable scope; premise rules get their own
  std::int64_t value = 0;
  ArithOp op = ArithOp::Add;
  std::vector<Term> operands;

  static Term sym(std::string s) {
    Term t;
    t.kind = Kind::Sym;
    t.text = std::move(s);
    return t;
  }
  static Term integer(std::int64_t v) {
    Term t;
    t.kind = Kind::Int;
    t.value = v;
    return t;
  }
  static Term var(std::string name, int scope = 0) {
    Term t;
    t.kind = Kind::Var;
    t.text = std::move(name);
    t.scope = scope;
    return t;
  }
  static Term arith(ArithOp op, Term lhs, Term rhs) {
    Term t;
    t.kind = Kind::Arith;
    t.op = op;
    t.operands.push_back(std::move(lhs));
    t.operands.push_back(std::move(rhs));
    return t;
  }

  bool is_var() const { return kind == Kind::Var; }
  bool is_constant() const { return kind == Kind::Sym || kind == Kind::Int; }
  bool is_ground() const {
    if (kind == Kind::Var) return false;
    return std::all_of(operands.begin(), operands.end(),
                       [](const Term& t) { return t.is_ground(); });
  }
};

std::strong_ordering operator<=>(const Term& a, const Term& b);

inline bool operator==(const Term& a, const Term& b) { return (a <=> b) == 0; }

inline std::strong_ordering operator<=>(const Term& a, const Term& b) {
  if (auto c = a.kind <=> b.kind; c != 0) return c;
  switch (a.kind) {
    case Term::Kind::Sym: return a.text <=> b.text;
    case Term::Kind::Int: return a.value <=> b.value;
    case Term::Kind::Var:
      if (auto c = a.text <=> b.text; c != 0) return c;
      return a.scope <=> b.scope;
    case Term::Kind::Arith: {
      if (auto c = a.op <=> b.op; c != 0) return c;
      return std::lexicographical_compare_three_way(
          a.operands.begin(), a.operands.end(), b.operands.begin(),
          b.operands.end());
    }
  }
  return std::strong_ordering::equal;
}

/// Predicate symbol: printed as `name/arity`.
struct PredRef {
  std::string name;
  std::size_t arity = 0;

  std::string to_string() const { return name + "/" + std::to_string(arity); }
  auto operator<=>(const PredRef&) const = default;
  bool operator==(const PredRef&) const = default;
};

struct Atom {
  std::string name;
  std::vector<Term> args;
  bool restricting = false;

  std::size_t arity() const { return args.size(); }
  PredRef pred() const { return {name, args.size()}; }
  bool is_ground() const {
    return std::all_of(args.begin(), args.end(),
                       [](const Term& t) { return t.is_ground(); });
  }
  auto operator<=>(const Atom& o) const {
    if (auto c = name <=> o.name; c != 0) return c;
    if (auto c = args.size() <=> o.args.size(); c != 0) return c;
    if (auto c = std::lexicographical_compare_three_way(
            args.begin(), args.end(), o.args.begin(), o.args.end());
        c != 0)
      return c;
    return restricting <=> o.restricting;
  }
  bool operator==(const Atom& o) const { return (*this <=> o) == 0; }
};

/// Chain of rule ids at which assumptions were opened; the root is empty.
struct ContextId {
  std::vector<int> path;

  bool is_root() const { return path.empty(); }
  bool is_ancestor_of(const ContextId& other) const {
    return path.size() <= other.path.size() &&
           std::equal(path.begin(), path.end(), other.path.begin());
  }
  bool contains(int id) const {
    return std::find(path.begin(), path.end(), id) != path.end();
  }
  ContextId child(int id) const {
    ContextId c = *this;
    c.path.push_back(id);
    return c;
  }
  std::string to_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(path[i]);
    }
    return s + "]";
  }
  auto operator<=>(const ContextId&) const = default;
  bool operator==(const ContextId&) const = default;
};

struct Rule;

struct Goal {
  enum class Kind { Atom, Neg, BuiltIn, Conj, Disj, Hyp };

  Kind kind = Kind::Atom;
  hdl::Atom atom;                // Atom
  std::vector<Goal> subgoals;    // Neg: one; Conj/Disj: items; Hyp: conclusion
  CmpOp cmp = CmpOp::Eq;         // BuiltIn
  Term lhs, rhs;                 // BuiltIn
  std::vector<Rule> premise;     // Hyp

  static Goal of(hdl::Atom a) {
    Goal g;
    g.kind = Kind::Atom;
    g.atom = std::move(a);
    return g;
  }
  static Goal neg(Goal inner) {
    Goal g;
    g.kind = Kind::Neg;
    g.subgoals.push_back(std::move(inner));
    return g;
  }
  static Goal builtin(CmpOp op, Term l, Term r) {
    Goal g;
    g.kind = Kind::BuiltIn;
    g.cmp = op;
    g.lhs = std::move(l);
    g.rhs = std::move(r);
    return g;
  }
  static Goal conj(std::vector<Goal> items) {
    Goal g;
    g.kind = Kind::Conj;
    g.subgoals = std::move(items);
    return g;
  }
  static Goal disj(std::vector<Goal> items) {
    Goal g;
    g.kind = Kind::Disj;
    g.subgoals = std::move(items);
    return g;
  }
  static Goal hyp(std::vector<Rule> premise, Goal conclusion);

  const Goal& inner() const { return subgoals.front(); }
  const Goal& conclusion() const { return subgoals.front(); }
  bool is_atom() const { return kind == Kind::Atom; }
};

/// A rule; absent head means an integrity constraint, empty body a fact.
/// `id` and `context` are assigned by the database.
struct Rule {
  std::optional<Atom> head;
  std::vector<Goal> body;
  int id = -1;
  ContextId context;
  std::string source_text;

  bool is_fact() const { return head && body.empty(); }
  bool is_constraint() const { return !head; }
  bool is_restricting() const { return head && head->restricting; }
};

inline Goal Goal::hyp(std::vector<Rule> premise, Goal conclusion) {
  Goal g;
  g.kind = Kind::Hyp;
  g.premise = std::move(premise);
  g.subgoals.push_back(std::move(conclusion));
  return g;
}

bool operator==(const Goal& a, const Goal& b);

/// Structural equality; ids, contexts and source text are not compared.
inline bool operator==(const Rule& a, const Rule& b) {
  return a.head == b.head && a.body == b.body;
}

inline bool operator==(const Goal& a, const Goal& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Goal::Kind::Atom: return a.atom == b.atom;
    case Goal::Kind::BuiltIn:
      return a.cmp == b.cmp && a.lhs == b.lhs && a.rhs == b.rhs;
    case Goal::Kind::Hyp:
      return a.premise == b.premise && a.subgoals == b.subgoals;
    default: return a.subgoals == b.subgoals;
  }
}

/// One REPL line.
struct Input {
  enum class Kind { Query, Assertion, Retraction, Constraint, Command };

  Kind kind = Kind::Query;
  Goal goal;
  Rule rule;
  std::string command;
  std::vector<std::string> args;
};

inline bool operator==(const Input& a, const Input& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Input::Kind::Query: return a.goal == b.goal;
    case Input::Kind::Command: return a.command == b.command && a.args == b.args;
    default: return a.rule == b.rule;
  }
}

// ---------------------------------------------------------------------------
// Variable helpers

using VarKey = std::pair<std::string, int>;

inline VarKey key_of(const Term& v) { return {v.text, v.scope}; }

inline void collect_vars(const Term& t, std::vector<Term>& out) {
  if (t.is_var()) {
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    return;
  }
  for (const auto& o : t.operands) collect_vars(o, out);
}

inline void collect_vars(const Atom& a, std::vector<Term>& out) {
  for (const auto& t : a.args) collect_vars(t, out);
}

/// Variables in first-appearance order. Variables local to premise rules
/// are encapsulated and skipped unless `into_premises` is set.
inline void collect_vars(const Goal& g, std::vector<Term>& out,
                         bool into_premises = false);

inline void collect_vars(const Rule& r, std::vector<Term>& out,
                         bool into_premises = false) {
  if (r.head) collect_vars(*r.head, out);
  for (const auto& g : r.body) collect_vars(g, out, into_premises);
}

inline void collect_vars(const Goal& g, std::vector<Term>& out,
                         bool into_premises) {
  switch (g.kind) {
    case Goal::Kind::Atom: collect_vars(g.atom, out); break;
    case Goal::Kind::BuiltIn:
      collect_vars(g.lhs, out);
      collect_vars(g.rhs, out);
      break;
    case Goal::Kind::Hyp:
      if (into_premises)
        for (const auto& r : g.premise) collect_vars(r, out, true);
      collect_vars(g.conclusion(), out, into_premises);
      break;
    default:
      for (const auto& s : g.subgoals) collect_vars(s, out, into_premises);
  }
}

template <typename Node>
std::vector<Term> vars_of(const Node& n) {
  std::vector<Term> out;
  collect_vars(n, out);
  return out;
}

// ---------------------------------------------------------------------------
// Printer

namespace detail {

inline bool plain_symbol(const std::string& s) {
  if (s.empty() || !(s[0] >= 'a' && s[0] <= 'z')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '_';
  });
}

inline int arith_prec(ArithOp op) {
  return (op == ArithOp::Add || op == ArithOp::Sub) ? 1 : 2;
}

}  // namespace detail

inline std::string quote_symbol(const std::string& s) {
  if (detail::plain_symbol(s)) return s;
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') q += '\'';
    q += c;
  }
  return q + "'";
}

inline std::string pretty(const Term& t) {
  switch (t.kind) {
    case Term::Kind::Sym: return quote_symbol(t.text);
    case Term::Kind::Int: return std::to_string(t.value);
    case Term::Kind::Var: return t.text;
    case Term::Kind::Arith: {
      auto side = [&](const Term& o, bool right) {
        std::string s = pretty(o);
        if (o.kind == Term::Kind::Arith) {
          int po = detail::arith_prec(o.op), pt = detail::arith_prec(t.op);
          if (po < pt || (right && po == pt)) s = "(" + s + ")";
        } else if (o.kind == Term::Kind::Int && o.value < 0 && right) {
          s = "(" + s + ")";
        }
        return s;
      };
      std::string op = to_cstr(t.op);
      if (t.op == ArithOp::Mod) op = " mod ";
      return side(t.operands[0], false) + op + side(t.operands[1], true);
    }
  }
  return {};
}

inline std::string pretty(const Atom& a) {
  std::string s = a.restricting ? "-" : "";
  s += quote_symbol(a.name);
  if (!a.args.empty()) {
    s += "(";
    for (std::size_t i = 0; i < a.args.size(); ++i) {
      if (i) s += ",";
      s += pretty(a.args[i]);
    }
    s += ")";
  }
  return s;
}

std::string pretty(const Goal& g);
std::string pretty(const Rule& r);

namespace detail {

// Binding strength: Hyp 0 < Disj 1 < Conj 2 < Neg 3 < atoms/comparisons 4.
inline int goal_prec(const Goal& g) {
  switch (g.kind) {
    case Goal::Kind::Hyp: return 0;
    case Goal::Kind::Disj: return 1;
    case Goal::Kind::Conj: return 2;
    case Goal::Kind::Neg: return 3;
    default: return 4;
  }
}

inline std::string wrap(const Goal& g, int min_prec) {
  std::string s = pretty(g);
  return goal_prec(g) < min_prec ? "(" + s + ")" : s;
}

inline std::string premise_rule(const Rule& r) {
  if (r.body.empty()) return pretty(*r.head);
  std::string s = "(" + pretty(*r.head) + ":-";
  for (std::size_t i = 0; i < r.body.size(); ++i) {
    if (i) s += ",";
    s += wrap(r.body[i], 3);
  }
  return s + ")";
}

}  // namespace detail

inline std::string pretty(const Goal& g) {
  using detail::wrap;
  switch (g.kind) {
    case Goal::Kind::Atom: return pretty(g.atom);
    case Goal::Kind::Neg: return "not " + wrap(g.inner(), 4);
    case Goal::Kind::BuiltIn:
      return pretty(g.lhs) + to_cstr(g.cmp) + pretty(g.rhs);
    case Goal::Kind::Conj:
    case Goal::Kind::Disj: {
      const bool conj = g.kind == Goal::Kind::Conj;
      std::string s;
      for (std::size_t i = 0; i < g.subgoals.size(); ++i) {
        if (i) s += conj ? "," : ";";
        s += wrap(g.subgoals[i], conj ? 3 : 2);
      }
      return s;
    }
    case Goal::Kind::Hyp: {
      std::string s;
      for (std::size_t i = 0; i < g.premise.size(); ++i) {
        if (i) s += "/\\";
        s += detail::premise_rule(g.premise[i]);
      }
      const Goal& c = g.conclusion();
      bool paren = c.kind == Goal::Kind::Conj || c.kind == Goal::Kind::Disj;
      return s + "=>" + (paren ? "(" + pretty(c) + ")" : pretty(c));
    }
  }
  return {};
}

/// Prints a body at top level: conjuncts separated by ", ", a lone
/// disjunction with " ; " between branches.
inline std::string pretty_body(const std::vector<Goal>& body) {
  std::string s;
  if (body.size() == 1 && body[0].kind == Goal::Kind::Disj) {
    const auto& branches = body[0].subgoals;
    for (std::size_t i = 0; i < branches.size(); ++i) {
      if (i) s += " ; ";
      const Goal& b = branches[i];
      if (b.kind == Goal::Kind::Conj) {
        for (std::size_t j = 0; j < b.subgoals.size(); ++j) {
          if (j) s += ", ";
          s += detail::wrap(b.subgoals[j], 3);
        }
      } else {
        s += detail::wrap(b, 2);
      }
    }
    return s;
  }
  const int min_prec = body.size() > 1 ? 2 : 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (i) s += ", ";
    s += detail::wrap(body[i], min_prec);
  }
  return s;
}

/// Rule with trailing period, e.g. `grad(S) :- take(S,his), take(S,eng).`
inline std::string pretty(const Rule& r) {
  std::string s;
  if (r.head) s = pretty(*r.head);
  if (!r.body.empty()) s += (r.head ? " :- " : ":- ") + pretty_body(r.body);
  return s + ".";
}

inline std::string pretty(const Input& in) {
  switch (in.kind) {
    case Input::Kind::Query: return pretty(in.goal);
    case Input::Kind::Assertion: return "/assert " + pretty(in.rule);
    case Input::Kind::Retraction: return "/retract " + pretty(in.rule);
    case Input::Kind::Constraint: return pretty(in.rule);
    case Input::Kind::Command: {
      std::string s = "/" + in.command;
      for (const auto& a : in.args) s += " " + a;
      return s;
    }
  }
  return {};
}

}  // namespace hdl
