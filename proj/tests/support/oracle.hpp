#pragma once

// Brute-force reference semantics. Each distinct rule set gets its own
// stratification and is materialized bottom-up, stratum by stratum:
// regular rules to fixpoint, restricting rules to fixpoint, then the
// restricted tuples are subtracted. An implication whose premise adds
// nothing new is evaluated in the current model; otherwise the extended
// rule set is materialized on its own. Nothing here calls the engine.

#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypodl/syntax.hpp"

namespace hdl_test {

using hdl::Atom;
using hdl::Goal;
using hdl::PredRef;
using hdl::Rule;
using hdl::Term;

struct NotStratifiable : std::runtime_error {
  NotStratifiable() : std::runtime_error("oracle: not stratifiable") {}
};

using Relation = std::map<std::vector<Term>, int>;  // tuple -> multiplicity

/// Rule text with variables renamed by first appearance.
inline std::string canonical_text(const Rule& r) {
  std::map<std::pair<std::string, int>, std::string> names;
  auto term = [&](auto&& self, Term& t) -> void {
    if (t.kind == Term::Kind::Var) {
      auto [it, fresh] = names.emplace(std::make_pair(t.text, t.scope), "");
      if (fresh) it->second = "V" + std::to_string(names.size());
      t.text = it->second;
      t.scope = 0;
    }
    for (auto& o : t.operands) self(self, o);
  };
  auto rule = [&](auto&& self, Rule& x) -> void {
    auto goal = [&](auto&& gself, Goal& g) -> void {
      for (auto& p : g.premise) self(self, p);
      for (auto& a : g.atom.args) term(term, a);
      term(term, g.lhs);
      term(term, g.rhs);
      for (auto& s : g.subgoals) gself(gself, s);
    };
    if (x.head)
      for (auto& a : x.head->args) term(term, a);
    for (auto& g : x.body) goal(goal, g);
  };
  Rule copy = r;
  rule(rule, copy);
  return hdl::pretty(copy);
}

class Oracle {
 public:
  struct Model {
    std::map<PredRef, Relation> pos;
    std::map<PredRef, Relation> neg;
  };

  explicit Oracle(std::vector<Rule> program) : base_(std::move(program)) {}

  /// Model of the program itself. Throws NotStratifiable.
  const Model& root() { return model(base_); }

  Relation relation(const PredRef& p, bool restricting) {
    const Model& m = root();
    const auto& side = restricting ? m.neg : m.pos;
    auto it = side.find(p);
    return it == side.end() ? Relation{} : it->second;
  }

 private:
  using Subst = std::map<std::pair<std::string, int>, Term>;

  std::vector<Rule> base_;
  std::map<std::string, std::unique_ptr<Model>> cache_;

  static std::string key_of_set(const std::vector<Rule>& rules) {
    std::multiset<std::string> texts;
    for (const auto& r : rules) texts.insert(canonical_text(r));
    std::string k;
    for (const auto& t : texts) k += t + "\n";
    return k;
  }

  // Rule set extended by the premise rules not already present.
  static std::vector<Rule> extend(const std::vector<Rule>& rules, const std::vector<Rule>& premise,
                                  bool& grew) {
    std::set<std::string> have;
    for (const auto& r : rules) have.insert(canonical_text(r));
    std::vector<Rule> out = rules;
    grew = false;
    for (const auto& p : premise)
      if (have.insert(canonical_text(p)).second) {
        out.push_back(p);
        grew = true;
      }
    return out;
  }

  static void collect_preds(const Goal& g, std::set<PredRef>& out) {
    if (g.kind == Goal::Kind::Atom) out.insert(g.atom.pred());
    for (const auto& s : g.subgoals) collect_preds(s, out);
  }

  struct Graph {
    std::set<PredRef> nodes;
    std::set<std::tuple<PredRef, PredRef, bool>> arcs;  // (from, to, negative)
  };

  void add_arcs(const std::vector<Rule>& rules, const Rule& r, const Goal& g, bool under_neg,
                const std::set<PredRef>& restricted, Graph& gr) {
    const PredRef h = r.head->pred();
    switch (g.kind) {
      case Goal::Kind::Atom: {
        const PredRef q = g.atom.pred();
        gr.nodes.insert(q);
        bool negative = under_neg;
        if (g.atom.restricting) negative = negative || !(r.head->restricting && q == h);
        else if (restricted.count(q) && q != h) negative = true;
        gr.arcs.insert({h, q, negative});
        break;
      }
      case Goal::Kind::Neg: add_arcs(rules, r, g.inner(), true, restricted, gr); break;
      case Goal::Kind::Hyp: {
        bool grew = false;
        extend(rules, g.premise, grew);
        if (!grew) add_arcs(rules, r, g.conclusion(), under_neg, restricted, gr);
        break;
      }
      default:
        for (const auto& s : g.subgoals) add_arcs(rules, r, s, under_neg, restricted, gr);
    }
  }

  const Model& model(const std::vector<Rule>& rules) {
    const std::string key = key_of_set(rules);
    if (auto it = cache_.find(key); it != cache_.end()) return *it->second;

    std::set<PredRef> restricted;
    for (const auto& r : rules)
      if (r.head && r.head->restricting) restricted.insert(r.head->pred());
    Graph gr;
    for (const auto& r : rules) {
      if (!r.head) continue;
      gr.nodes.insert(r.head->pred());
      for (const auto& g : r.body) add_arcs(rules, r, g, false, restricted, gr);
    }
    std::map<PredRef, int> stratum;
    for (const auto& n : gr.nodes) stratum[n] = 1;
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& [from, to, negative] : gr.arcs) {
        const int need = stratum[to] + (negative ? 1 : 0);
        if (stratum[from] < need) {
          stratum[from] = need;
          if (need > static_cast<int>(gr.nodes.size())) throw NotStratifiable();
          changed = true;
        }
      }
    }
    int top = 0;
    for (const auto& [p, s] : stratum) top = std::max(top, s);

    auto m = std::make_unique<Model>();
    for (int s = 1; s <= top; ++s) {
      for (bool restricting : {false, true}) {
        for (bool changed = true; changed;) {
          std::map<PredRef, Relation> next;
          for (const auto& r : rules) {
            if (!r.head || r.head->restricting != restricting || stratum[r.head->pred()] != s)
              continue;
            next[r.head->pred()];
            for (const auto& branch : dnf(r.body)) {
              std::set<std::vector<Term>> heads;
              for (const auto& th : solve_all(branch, rules, *m, Subst{}))
                heads.insert(ground(*r.head, th).args);
              for (const auto& h : heads) ++next[r.head->pred()][h];
            }
          }
          auto& side = restricting ? m->neg : m->pos;
          changed = false;
          for (auto& [p, rel] : next)
            if (side[p] != rel) {
              side[p] = rel;
              changed = true;
            }
        }
      }
      for (auto& [p, rel] : m->neg) {
        if (stratum[p] != s) continue;
        for (const auto& [t, n] : rel) m->pos[p].erase(t);
      }
    }
    return *cache_.emplace(key, std::move(m)).first->second;
  }

  static std::vector<std::vector<Goal>> dnf(const std::vector<Goal>& body) {
    std::vector<std::vector<Goal>> acc{{}};
    for (const auto& g : body) {
      std::vector<std::vector<Goal>> parts;
      if (g.kind == Goal::Kind::Disj) {
        for (const auto& s : g.subgoals)
          for (auto& b : dnf(s.kind == Goal::Kind::Conj ? s.subgoals : std::vector<Goal>{s}))
            parts.push_back(std::move(b));
      } else if (g.kind == Goal::Kind::Conj) {
        parts = dnf(g.subgoals);
      } else {
        parts.push_back({g});
      }
      std::vector<std::vector<Goal>> next;
      for (const auto& a : acc)
        for (const auto& b : parts) {
          auto c = a;
          c.insert(c.end(), b.begin(), b.end());
          next.push_back(std::move(c));
        }
      acc = std::move(next);
    }
    return acc;
  }

  static Term walk(const Term& t, const Subst& s) {
    if (t.kind != Term::Kind::Var) return t;
    auto it = s.find({t.text, t.scope});
    return it == s.end() ? t : it->second;
  }

  static Atom ground(const Atom& a, const Subst& s) {
    Atom out = a;
    for (auto& t : out.args) t = walk(t, s);
    return out;
  }

  static bool match(const Atom& pattern, const std::vector<Term>& tuple, Subst& s) {
    for (std::size_t i = 0; i < tuple.size(); ++i) {
      Term t = walk(pattern.args[i], s);
      if (t.kind == Term::Kind::Var) s[{t.text, t.scope}] = tuple[i];
      else if (!(t == tuple[i])) return false;
    }
    return true;
  }

  // Conjunction with negations deferred until everything else is bound.
  std::vector<Subst> solve_all(const std::vector<Goal>& conj, const std::vector<Rule>& rules,
                               const Model& m, const Subst& start) {
    std::vector<const Goal*> order;
    for (const auto& g : conj)
      if (g.kind != Goal::Kind::Neg) order.push_back(&g);
    for (const auto& g : conj)
      if (g.kind == Goal::Kind::Neg) order.push_back(&g);
    std::vector<Subst> cur{start};
    for (const Goal* g : order) {
      std::vector<Subst> next;
      for (const auto& s : cur)
        for (auto& s2 : solve(*g, rules, m, s)) next.push_back(std::move(s2));
      cur = std::move(next);
    }
    return cur;
  }

  std::vector<Subst> solve(const Goal& g, const std::vector<Rule>& rules, const Model& m,
                           const Subst& s) {
    switch (g.kind) {
      case Goal::Kind::Atom: {
        const auto& side = g.atom.restricting ? m.neg : m.pos;
        std::vector<Subst> out;
        auto it = side.find(g.atom.pred());
        if (it == side.end()) return out;
        for (const auto& [t, n] : it->second) {
          Subst s2 = s;
          if (match(g.atom, t, s2)) out.push_back(std::move(s2));
        }
        return out;
      }
      case Goal::Kind::Neg:
        if (solve(g.inner(), rules, m, s).empty()) return {s};
        return {};
      case Goal::Kind::Conj: return solve_all(g.subgoals, rules, m, s);
      case Goal::Kind::Disj: {
        std::vector<Subst> out;
        for (const auto& b : g.subgoals)
          for (auto& s2 : solve(b, rules, m, s)) out.push_back(std::move(s2));
        return out;
      }
      case Goal::Kind::Hyp: {
        bool grew = false;
        std::vector<Rule> ext = extend(rules, g.premise, grew);
        if (!grew) return solve(g.conclusion(), rules, m, s);
        const Model& inner = model(ext);
        return solve(g.conclusion(), ext, inner, s);
      }
      case Goal::Kind::BuiltIn: throw std::logic_error("oracle: built-ins are not supported");
    }
    return {};
  }
};

}  // namespace hdl_test
