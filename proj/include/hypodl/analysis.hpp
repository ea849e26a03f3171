#pragma once

// Static analysis over a set of rules: safety (range restriction), the
// predicate dependency graph, stratification and goal dependency graphs.
// Every function takes the rules visible in one context, so the same code
// serves the root database and each hypothetical context.

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hypodl/syntax.hpp"

namespace hdl {

enum class Sign { Positive, Negative };

/// `from` depends on `to`.
struct Arc {
  PredRef from;
  PredRef to;
  Sign sign = Sign::Positive;

  auto operator<=>(const Arc&) const = default;
  bool operator==(const Arc&) const = default;
};

struct Pdg {
  std::set<PredRef> nodes;
  std::set<Arc> arcs;

  bool operator==(const Pdg&) const = default;
};

struct Stratification {
  std::map<PredRef, int> strata;
  bool stratifiable = true;
  std::vector<PredRef> cycle;  // one offending cycle when not stratifiable

  int of(const PredRef& p) const {
    auto it = strata.find(p);
    return it == strata.end() ? 1 : it->second;
  }
  int max_stratum() const {
    int m = 0;
    for (const auto& [p, s] : strata) m = std::max(m, s);
    return m;
  }
};

struct SafetyViolation {
  std::string rule;
  std::string subject;  // variable name or goal text
  std::string reason;
};

struct SafetyReport {
  std::vector<SafetyViolation> violations;

  bool safe() const { return violations.empty(); }
  std::string describe() const {
    std::string s;
    for (const auto& v : violations) {
      if (!s.empty()) s += "\n";
      s += v.reason + ": " + v.subject + " in " + v.rule;
    }
    return s;
  }
};

// ---------------------------------------------------------------------------
// Safety

namespace detail {

using VarSet = std::set<VarKey>;

inline bool all_bound(const Term& t, const VarSet& bound) {
  std::vector<Term> vs;
  collect_vars(t, vs);
  return std::all_of(vs.begin(), vs.end(),
                     [&](const Term& v) { return bound.count(key_of(v)) > 0; });
}

VarSet closure(const Goal& g, const VarSet& bound);

inline VarSet closure(const std::vector<Goal>& goals, const VarSet& bound) {
  VarSet cur = bound;
  while (true) {
    std::size_t before = cur.size();
    for (const auto& g : goals) {
      VarSet next = closure(g, cur);
      cur.insert(next.begin(), next.end());
    }
    if (cur.size() == before) return cur;
  }
}

// Variables known to be bound after `g` succeeds, given `bound` beforehand.
inline VarSet closure(const Goal& g, const VarSet& bound) {
  VarSet out = bound;
  switch (g.kind) {
    case Goal::Kind::Atom:
      for (const auto& v : vars_of(g.atom)) out.insert(key_of(v));
      break;
    case Goal::Kind::Neg: break;
    case Goal::Kind::BuiltIn:
      if (g.cmp == CmpOp::Eq) {
        if (g.lhs.is_var() && all_bound(g.rhs, bound)) out.insert(key_of(g.lhs));
        if (g.rhs.is_var() && all_bound(g.lhs, bound)) out.insert(key_of(g.rhs));
      }
      break;
    case Goal::Kind::Conj: return closure(g.subgoals, bound);
    case Goal::Kind::Disj: {
      std::optional<VarSet> common;
      for (const auto& b : g.subgoals) {
        VarSet vb = closure(b, bound);
        if (!common) {
          common = std::move(vb);
        } else {
          VarSet inter;
          std::set_intersection(common->begin(), common->end(), vb.begin(), vb.end(),
                                std::inserter(inter, inter.begin()));
          common = std::move(inter);
        }
      }
      if (common) out.insert(common->begin(), common->end());
      break;
    }
    case Goal::Kind::Hyp: return closure(g.conclusion(), bound);
  }
  return out;
}

void check_rule(const Rule& r, std::vector<SafetyViolation>& out);

inline void check_goal(const Goal& g, const VarSet& bound, const std::string& where,
                       std::vector<SafetyViolation>& out) {
  auto unbound = [&](const std::vector<Term>& vs, const VarSet& b, const char* reason) {
    for (const auto& v : vs)
      if (!b.count(key_of(v))) out.push_back({where, v.text, reason});
  };
  switch (g.kind) {
    case Goal::Kind::Atom: break;
    case Goal::Kind::Neg: {
      const Goal& in = g.inner();
      if (in.kind == Goal::Kind::Atom) {
        unbound(vars_of(in), bound, "variable in negated goal is not bound");
      } else {
        check_goal(in, closure(in, bound), where, out);
      }
      break;
    }
    case Goal::Kind::BuiltIn: {
      std::vector<Term> vs;
      collect_vars(g.lhs, vs);
      collect_vars(g.rhs, vs);
      unbound(vs, bound, "variable in comparison is not bound");
      break;
    }
    case Goal::Kind::Conj: {
      VarSet b = closure(g.subgoals, bound);
      for (const auto& s : g.subgoals) check_goal(s, b, where, out);
      break;
    }
    case Goal::Kind::Disj:
      for (const auto& s : g.subgoals) check_goal(s, closure(s, bound), where, out);
      break;
    case Goal::Kind::Hyp:
      for (const auto& r : g.premise) check_rule(r, out);
      check_goal(g.conclusion(), bound, where, out);
      break;
  }
}

inline void check_rule(const Rule& r, std::vector<SafetyViolation>& out) {
  const std::string where = pretty(r);
  VarSet bound = closure(r.body, {});
  if (r.head) {
    const char* reason = r.body.empty()
                             ? (r.head->restricting ? "restricting fact is not ground"
                                                    : "fact is not ground")
                             : "head variable is not bound";
    for (const auto& v : vars_of(*r.head))
      if (!bound.count(key_of(v))) out.push_back({where, v.text, reason});
  }
  for (const auto& g : r.body) check_goal(g, bound, where, out);
}

}  // namespace detail

/// Range restriction for a rule, a constraint, or a goal wrapped as a
/// headless rule. Premise rules are checked as rules of their own.
inline SafetyReport check_safety(const Rule& rule) {
  SafetyReport rep;
  detail::check_rule(rule, rep.violations);
  return rep;
}

inline SafetyReport check_safety(const Goal& goal) {
  Rule r;
  r.body.push_back(goal);
  return check_safety(r);
}

// ---------------------------------------------------------------------------
// Dependency graph

namespace detail {

inline void add_goal_arcs(const PredRef& head, const Rule& rule, const Goal& g,
                          bool negated, bool include_premises, Pdg& pdg,
                          std::set<PredRef>& restricted);

inline void add_rule_arcs(const Rule& r, bool include_premises, Pdg& pdg,
                          std::set<PredRef>& restricted) {
  if (!r.head) return;
  const PredRef head = r.head->pred();
  pdg.nodes.insert(head);
  if (r.head->restricting) restricted.insert(head);
  for (const auto& g : r.body)
    add_goal_arcs(head, r, g, false, include_premises, pdg, restricted);
}

inline void add_goal_arcs(const PredRef& head, const Rule& rule, const Goal& g,
                          bool negated, bool include_premises, Pdg& pdg,
                          std::set<PredRef>& restricted) {
  switch (g.kind) {
    case Goal::Kind::Atom: {
      const PredRef p = g.atom.pred();
      pdg.nodes.insert(p);
      Sign sign = negated ? Sign::Negative : Sign::Positive;
      // A restricting rule for q may recurse on -q without a negative arc.
      if (g.atom.restricting && !negated &&
          !(rule.is_restricting() && rule.head->pred() == p))
        sign = Sign::Negative;
      pdg.arcs.insert({head, p, sign});
      break;
    }
    case Goal::Kind::Neg:
      add_goal_arcs(head, rule, g.inner(), true, include_premises, pdg, restricted);
      break;
    case Goal::Kind::BuiltIn: break;
    case Goal::Kind::Conj:
    case Goal::Kind::Disj:
      for (const auto& s : g.subgoals)
        add_goal_arcs(head, rule, s, negated, include_premises, pdg, restricted);
      break;
    case Goal::Kind::Hyp:
      add_goal_arcs(head, rule, g.conclusion(), negated, include_premises, pdg,
                    restricted);
      if (include_premises)
        for (const auto& pr : g.premise) add_rule_arcs(pr, true, pdg, restricted);
      break;
  }
}

}  // namespace detail

/// Builds the dependency graph of `rules`. Premise rules embedded in
/// hypothetical goals are only considered with `include_premises`; rules
/// actually assumed in a context are passed in `rules` directly.
inline Pdg build_pdg(std::span<const Rule> rules, bool include_premises = false) {
  Pdg pdg;
  std::set<PredRef> restricted;
  for (const auto& r : rules) detail::add_rule_arcs(r, include_premises, pdg, restricted);
  std::vector<Arc> extra;
  for (const auto& a : pdg.arcs)
    if (a.sign == Sign::Positive && a.from != a.to && restricted.count(a.to))
      extra.push_back({a.from, a.to, Sign::Negative});
  pdg.arcs.insert(extra.begin(), extra.end());
  return pdg;
}

/// Least stratification: positive arcs impose >=, negative arcs >.
inline Stratification stratify(const Pdg& pdg) {
  Stratification st;
  for (const auto& n : pdg.nodes) st.strata[n] = 1;
  const int cap = static_cast<int>(pdg.nodes.size()) + 1;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& a : pdg.arcs) {
      int need = st.strata[a.to] + (a.sign == Sign::Negative ? 1 : 0);
      if (need > st.strata[a.from] && need <= cap) {
        st.strata[a.from] = need;
        changed = true;
      }
    }
  }
  // Strongly connected components; a negative arc inside one is a cycle
  // through negation.
  std::map<PredRef, std::vector<PredRef>> succ;
  for (const auto& a : pdg.arcs) succ[a.from].push_back(a.to);
  std::map<PredRef, int> index, low, comp;
  std::vector<PredRef> stack;
  std::set<PredRef> on_stack;
  int counter = 0, comps = 0;
  std::function<void(const PredRef&)> visit = [&](const PredRef& v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack.insert(v);
    for (const auto& w : succ[v]) {
      if (!index.count(w)) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack.count(w)) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      while (true) {
        PredRef w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        comp[w] = comps;
        if (w == v) break;
      }
      ++comps;
    }
  };
  for (const auto& n : pdg.nodes)
    if (!index.count(n)) visit(n);
  for (const auto& a : pdg.arcs) {
    if (a.sign != Sign::Negative || comp[a.from] != comp[a.to]) continue;
    st.stratifiable = false;
    // Path back from a.to to a.from inside the component.
    std::map<PredRef, PredRef> parent;
    std::deque<PredRef> queue{a.to};
    std::set<PredRef> seen{a.to};
    while (!queue.empty()) {
      PredRef v = queue.front();
      queue.pop_front();
      if (v == a.from) break;
      for (const auto& w : succ[v]) {
        if (comp[w] != comp[a.from] || seen.count(w)) continue;
        seen.insert(w);
        parent.emplace(w, v);
        queue.push_back(w);
      }
    }
    std::vector<PredRef> back;
    for (PredRef v = a.from; v != a.to; v = parent.at(v)) back.push_back(v);
    st.cycle.push_back(a.from);
    st.cycle.push_back(a.to);
    for (auto it = back.rbegin(); it != back.rend(); ++it)
      if (*it != a.from) st.cycle.push_back(*it);
    break;
  }
  return st;
}

/// Subgraph reachable from `goal_pred` along dependency arcs.
inline Pdg goal_dependency_graph(const Pdg& pdg, const PredRef& goal_pred) {
  Pdg out;
  if (!pdg.nodes.count(goal_pred)) return out;
  std::deque<PredRef> queue{goal_pred};
  out.nodes.insert(goal_pred);
  while (!queue.empty()) {
    PredRef v = queue.front();
    queue.pop_front();
    for (auto it = pdg.arcs.lower_bound(Arc{v, PredRef{}, Sign::Positive});
         it != pdg.arcs.end() && it->from == v; ++it) {
      out.arcs.insert(*it);
      if (out.nodes.insert(it->to).second) queue.push_back(it->to);
    }
  }
  return out;
}

inline Atom open_call(const PredRef& p, bool restricting = false) {
  static const char* const kNames[] = {"X", "Y", "Z", "U", "V", "W"};
  Atom a;
  a.name = p.name;
  a.restricting = restricting;
  for (std::size_t i = 0; i < p.arity; ++i)
    a.args.push_back(Term::var(i < 6 ? kNames[i] : "X" + std::to_string(i + 1), -1));
  return a;
}

/// Open calls for every predicate that is the target of a negative arc,
/// lowest stratum first. The queried predicate itself is left out.
inline std::vector<Atom> negated_open_goals(const Pdg& gdg, const Stratification& strat,
                                            const std::optional<PredRef>& query = {}) {
  std::set<PredRef> targets;
  for (const auto& a : gdg.arcs)
    if (a.sign == Sign::Negative && (!query || a.to != *query)) targets.insert(a.to);
  std::vector<PredRef> ordered(targets.begin(), targets.end());
  std::stable_sort(ordered.begin(), ordered.end(), [&](const PredRef& x, const PredRef& y) {
    return strat.of(x) < strat.of(y);
  });
  std::vector<Atom> out;
  for (const auto& p : ordered) out.push_back(open_call(p));
  return out;
}

// ---------------------------------------------------------------------------
// Dumps

inline bool is_system_pred(const PredRef& p) { return !p.name.empty() && p.name[0] == '$'; }

inline std::string format_pdg(const Pdg& pdg, bool show_system = false) {
  std::string s = "Nodes: [";
  bool first = true;
  for (const auto& n : pdg.nodes) {
    if (!show_system && is_system_pred(n)) continue;
    if (!first) s += ",";
    s += quote_symbol(n.name) + "/" + std::to_string(n.arity);
    first = false;
  }
  s += "]\nArcs : [";
  first = true;
  for (const auto& a : pdg.arcs) {
    if (!show_system && (is_system_pred(a.from) || is_system_pred(a.to))) continue;
    if (!first) s += ",";
    s += quote_symbol(a.from.name) + "/" + std::to_string(a.from.arity) +
         (a.sign == Sign::Positive ? "+" : "-") + quote_symbol(a.to.name) + "/" +
         std::to_string(a.to.arity);
    first = false;
  }
  return s + "]";
}

inline std::string format_strata(const Stratification& st, bool show_system = false) {
  std::vector<std::pair<int, PredRef>> items;
  for (const auto& [p, s] : st.strata)
    if (show_system || !is_system_pred(p)) items.emplace_back(s, p);
  std::sort(items.begin(), items.end());
  std::string s = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) s += ",";
    s += "(" + quote_symbol(items[i].second.name) + "/" +
         std::to_string(items[i].second.arity) + "," + std::to_string(items[i].first) + ")";
  }
  return s + "]";
}

}  // namespace hdl
