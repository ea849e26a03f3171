#pragma once

// Tabled, stratum-by-stratum evaluation of Hypothetical Datalog.
//
// Calls are resolved top-down against the rules visible in a context and
// their ground answers are memoized in an answer table tagged with that
// context; each call is iterated to a fixpoint. Before a call is solved,
// the predicates it depends on negatively (through `not`, restricting atoms
// or restricted predicates) are saturated with open calls, lowest stratum
// first. A restricted predicate is solved as P+ followed by P-, after which
// every P+ entry with a P- counterpart is marked removed.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "hypodl/analysis.hpp"
#include "hypodl/storage.hpp"
#include "hypodl/syntax.hpp"

namespace hdl {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SafetyError : public std::runtime_error {
 public:
  explicit SafetyError(SafetyReport r)
      : std::runtime_error(r.describe()), report_(std::move(r)) {}
  const SafetyReport& report() const { return report_; }

 private:
  SafetyReport report_;
};

struct TableEntry {
  Atom atom;  // ground; restricting flag set for restricting entries
  int rule_id = -1;
  int branch = 0;  // disjunct of the deriving rule's body
  ContextId ctx;
  bool removed = false;
};

/// Ground answers, tagged with deriving rule, body branch and context.
class AnswerTable {
 public:
  /// Returns true when the (atom, rule, branch, context) entry is new.
  bool insert(const Atom& atom, int rule_id, int branch, const ContextId& ctx) {
    Slot& slot = slots_[{ctx, atom.pred(), atom.restricting}];
    if (!slot.keys.emplace(atom.args, rule_id, branch).second) return false;
    slot.entries.push_back({atom, rule_id, branch, ctx, false});
    ++size_;
    return true;
  }

  /// Entries of a predicate in insertion order. Removed regular entries
  /// are included only with `with_removed`.
  std::vector<const TableEntry*> entries(const PredRef& pred, bool restricting,
                                         const ContextId& ctx, bool with_removed = false) const {
    std::vector<const TableEntry*> out;
    auto it = slots_.find({ctx, pred, restricting});
    if (it == slots_.end()) return out;
    for (const auto& e : it->second.entries)
      if (with_removed || !e.removed) out.push_back(&e);
    return out;
  }

  bool has(const Atom& ground, const ContextId& ctx) const {
    auto it = slots_.find({ctx, ground.pred(), ground.restricting});
    if (it == slots_.end()) return false;
    for (const auto& e : it->second.entries)
      if (!e.removed && e.atom.args == ground.args) return true;
    return false;
  }

  /// Marks every regular entry of `pred` in `ctx` that has a restricting
  /// counterpart as removed.
  void remove_restricted(const PredRef& pred, const ContextId& ctx) {
    auto neg = slots_.find({ctx, pred, true});
    auto pos = slots_.find({ctx, pred, false});
    if (neg == slots_.end() || pos == slots_.end()) return;
    std::set<std::vector<Term>> restricted;
    for (const auto& e : neg->second.entries) restricted.insert(e.atom.args);
    for (auto& e : pos->second.entries)
      if (restricted.count(e.atom.args)) e.removed = true;
  }

  std::size_t count(const PredRef& pred, const ContextId& ctx) const {
    std::size_t n = 0;
    for (bool r : {false, true}) {
      auto it = slots_.find({ctx, pred, r});
      if (it != slots_.end()) n += it->second.entries.size();
    }
    return n;
  }

  std::size_t count(const PredRef& pred) const {
    std::size_t n = 0;
    for (const auto& [k, slot] : slots_)
      if (std::get<1>(k) == pred) n += slot.entries.size();
    return n;
  }

  std::size_t size() const { return size_; }

 private:
  struct Slot {
    std::deque<TableEntry> entries;
    std::set<std::tuple<std::vector<Term>, int, int>> keys;
  };
  std::map<std::tuple<ContextId, PredRef, bool>, Slot> slots_;
  std::size_t size_ = 0;
};

/// Call patterns per context.
class CallTable {
 public:
  bool insert(const std::string& pattern, const ContextId& ctx) {
    return calls_.emplace(ctx, pattern).second;
  }
  bool contains(const std::string& pattern, const ContextId& ctx) const {
    return calls_.count({ctx, pattern}) > 0;
  }
  std::size_t size() const { return calls_.size(); }

 private:
  std::set<std::pair<ContextId, std::string>> calls_;
};

struct Answer {
  Atom atom;
  int multiplicity = 1;

  bool operator==(const Answer&) const = default;
};

/// Something the engine wants reported; rendering belongs to the CLI.
struct Event {
  enum class Kind { ContextOpened, Rejection, Undefined };

  Kind kind = Kind::ContextOpened;
  ContextId ctx;
  std::vector<Rule> premise;  // accepted premise rules
  ContextAnalysis analysis;
  RejectionReport rejection;
};

// ---------------------------------------------------------------------------
// Preprocessing

namespace detail {

inline bool same_node(const Goal* a, const Goal* b) { return a == b; }

inline void vars_except(const Goal& g, const Goal* skip, std::vector<Term>& out) {
  if (&g == skip) return;
  switch (g.kind) {
    case Goal::Kind::Atom: collect_vars(g.atom, out); break;
    case Goal::Kind::BuiltIn:
      collect_vars(g.lhs, out);
      collect_vars(g.rhs, out);
      break;
    default:
      for (const auto& s : g.subgoals) vars_except(s, skip, out);
  }
}

class Flattener {
 public:
  explicit Flattener(std::function<std::string()> fresh) : fresh_(std::move(fresh)) {}

  std::vector<Rule> run(const Rule& rule) {
    std::vector<Rule> aux;
    Rule main = rule;
    int hyps = 0;
    for (auto& g : main.body) rewrite(g, main, hyps, aux);
    aux.push_back(std::move(main));
    return aux;
  }

 private:
  std::function<std::string()> fresh_;

  Atom define(std::vector<Term> vars, std::vector<Goal> body, const Rule& host,
              std::vector<Rule>& aux) {
    Atom head;
    head.name = fresh_();
    head.args = std::move(vars);
    Rule def;
    def.head = head;
    def.body = std::move(body);
    def.source_text = host.source_text;
    for (auto& r : Flattener(fresh_).run(def)) aux.push_back(std::move(r));
    return head;
  }

  static std::vector<Goal> as_body(Goal g) {
    if (g.kind == Goal::Kind::Conj) return std::move(g.subgoals);
    std::vector<Goal> v;
    v.push_back(std::move(g));
    return v;
  }

  void rewrite(Goal& g, const Rule& host, int& hyps, std::vector<Rule>& aux) {
    switch (g.kind) {
      case Goal::Kind::Atom:
      case Goal::Kind::BuiltIn: return;
      case Goal::Kind::Conj:
      case Goal::Kind::Disj:
        for (auto& s : g.subgoals) rewrite(s, host, hyps, aux);
        return;
      case Goal::Kind::Neg: {
        if (g.inner().kind == Goal::Kind::Atom) return;
        // Shared variables become arguments; the rest stay local.
        std::vector<Term> outside;
        if (host.head) collect_vars(*host.head, outside);
        for (const auto& b : host.body) vars_except(b, &g, outside);
        std::vector<Term> shared;
        for (const auto& v : vars_of(g.inner()))
          if (std::find(outside.begin(), outside.end(), v) != outside.end())
            shared.push_back(v);
        Atom a = define(shared, as_body(g.inner()), host, aux);
        g = Goal::neg(Goal::of(std::move(a)));
        return;
      }
      case Goal::Kind::Hyp: {
        Goal& concl = g.subgoals.front();
        if (concl.kind != Goal::Kind::Atom) {
          Atom a = define(vars_of(concl), as_body(concl), host, aux);
          concl = Goal::of(std::move(a));
        }
        if (++hyps > 1) {
          std::vector<Goal> body;
          body.push_back(g);
          Atom a = define(vars_of(g.conclusion()), std::move(body), host, aux);
          g = Goal::of(std::move(a));
        }
        return;
      }
    }
  }
};

}  // namespace detail

/// Rewrites `rule` so that every implication conclusion is an atom, every
/// negation wraps an atom, and at most one implication occurs in each rule.
/// Auxiliary `$pN` definitions come first, the rewritten rule last.
inline std::vector<Rule> flatten_nested_implications(const Rule& rule,
                                                     std::function<std::string()> fresh) {
  return detail::Flattener(std::move(fresh)).run(rule);
}

inline std::vector<Rule> flatten_nested_implications(const Rule& rule, Database& db) {
  return flatten_nested_implications(rule, [&db] { return db.fresh_aux_name(); });
}

// ---------------------------------------------------------------------------
// Unification and built-ins

using Subst = std::map<VarKey, Term>;

inline Term deref(const Term& t, const Subst& s) {
  const Term* cur = &t;
  while (cur->is_var()) {
    auto it = s.find(key_of(*cur));
    if (it == s.end()) break;
    cur = &it->second;
  }
  return *cur;
}

inline Term substitute(const Term& t, const Subst& s) {
  if (t.kind == Term::Kind::Arith) {
    Term out = t;
    for (auto& o : out.operands) o = substitute(o, s);
    return out;
  }
  return deref(t, s);
}

inline Atom substitute(const Atom& a, const Subst& s) {
  Atom out = a;
  for (auto& t : out.args) t = substitute(t, s);
  return out;
}

inline bool unify(const Term& a, const Term& b, Subst& s) {
  Term x = deref(a, s), y = deref(b, s);
  if (x.is_var() && y.is_var() && x == y) return true;
  if (x.is_var()) {
    s[key_of(x)] = y;
    return true;
  }
  if (y.is_var()) {
    s[key_of(y)] = x;
    return true;
  }
  return x == y;
}

inline bool unify_args(const Atom& a, const Atom& b, Subst& s) {
  if (a.name != b.name || a.args.size() != b.args.size()) return false;
  for (std::size_t i = 0; i < a.args.size(); ++i)
    if (!unify(a.args[i], b.args[i], s)) return false;
  return true;
}

/// True when `pattern` is at least as general as `call`.
inline bool subsumes(const Atom& pattern, const Atom& call) {
  if (pattern.name != call.name || pattern.args.size() != call.args.size() ||
      pattern.restricting != call.restricting)
    return false;
  std::map<VarKey, Term> bind;
  for (std::size_t i = 0; i < call.args.size(); ++i) {
    const Term& p = pattern.args[i];
    const Term& c = call.args[i];
    if (p.is_var()) {
      auto [it, fresh] = bind.emplace(key_of(p), c);
      if (!fresh && !(it->second == c)) return false;
    } else if (!(p == c)) {
      return false;
    }
  }
  return true;
}

/// Renames the variables of a call apart, in order of appearance, and
/// returns it with its variant key.
inline std::pair<Atom, std::string> canonical_call(const Atom& call) {
  Atom out = call;
  std::map<VarKey, int> names;
  for (auto& t : out.args) {
    if (!t.is_var()) continue;
    auto [it, _] = names.emplace(key_of(t), static_cast<int>(names.size()));
    t = Term::var("_C" + std::to_string(it->second), -2);
  }
  return {out, pretty(out)};
}

inline std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
  std::int64_t r = a % b;
  if (r != 0 && ((r < 0) != (b < 0))) r += b;
  return r;
}

/// Arithmetic value of `t`, or nullopt when a variable is still unbound.
inline std::optional<Term> evaluate(const Term& t, const Subst& s) {
  switch (t.kind) {
    case Term::Kind::Sym:
    case Term::Kind::Int: return t;
    case Term::Kind::Var: {
      Term d = deref(t, s);
      if (d.is_var()) return std::nullopt;
      return d;
    }
    case Term::Kind::Arith: {
      auto l = evaluate(t.operands[0], s);
      auto r = evaluate(t.operands[1], s);
      if (!l || !r) return std::nullopt;
      if (l->kind != Term::Kind::Int || r->kind != Term::Kind::Int)
        throw EvalError("arithmetic on a non-integer value in " + pretty(substitute(t, s)));
      const std::int64_t a = l->value, b = r->value;
      switch (t.op) {
        case ArithOp::Add: return Term::integer(a + b);
        case ArithOp::Sub: return Term::integer(a - b);
        case ArithOp::Mul: return Term::integer(a * b);
        case ArithOp::Div:
          if (b == 0) throw EvalError("division by zero");
          return Term::integer(a / b);
        case ArithOp::Mod:
          if (b == 0) throw EvalError("modulo by zero");
          return Term::integer(floor_mod(a, b));
      }
    }
  }
  return std::nullopt;
}

inline bool builtin_ready(const Goal& g, const Subst& s) {
  auto unbound_var = [&](const Term& t) { return t.is_var() && deref(t, s).is_var(); };
  auto known = [&](const Term& t) {
    std::vector<Term> vs;
    collect_vars(t, vs);
    return std::all_of(vs.begin(), vs.end(),
                       [&](const Term& v) { return !deref(v, s).is_var(); });
  };
  if (g.cmp == CmpOp::Eq)
    return (known(g.lhs) && (known(g.rhs) || unbound_var(g.rhs))) ||
           (known(g.rhs) && unbound_var(g.lhs));
  return known(g.lhs) && known(g.rhs);
}

/// Evaluates a ready comparison; `=` may bind one side.
inline bool eval_builtin(const Goal& g, Subst& s) {
  auto l = evaluate(g.lhs, s);
  auto r = evaluate(g.rhs, s);
  if (g.cmp == CmpOp::Eq) {
    if (l && r) return *l == *r;
    if (l) return unify(g.rhs, *l, s);
    if (r) return unify(g.lhs, *r, s);
    throw EvalError("comparison with unbound operands: " + pretty(g));
  }
  if (!l || !r) throw EvalError("comparison with unbound operands: " + pretty(g));
  if (g.cmp == CmpOp::Ne) return !(*l == *r);
  if (l->kind != r->kind)
    throw EvalError("cannot compare " + pretty(*l) + " with " + pretty(*r));
  auto c = *l <=> *r;
  switch (g.cmp) {
    case CmpOp::Lt: return c < 0;
    case CmpOp::Gt: return c > 0;
    case CmpOp::Le: return c <= 0;
    case CmpOp::Ge: return c >= 0;
    default: return false;
  }
}

/// Disjunctive normal form of a body: one literal list per branch.
inline std::vector<std::vector<const Goal*>> branches(const std::vector<Goal>& body) {
  std::vector<std::vector<const Goal*>> acc{{}};
  std::function<std::vector<std::vector<const Goal*>>(const Goal&)> dnf =
      [&](const Goal& g) -> std::vector<std::vector<const Goal*>> {
    if (g.kind == Goal::Kind::Disj) {
      std::vector<std::vector<const Goal*>> out;
      for (const auto& s : g.subgoals)
        for (auto& b : dnf(s)) out.push_back(std::move(b));
      return out;
    }
    if (g.kind == Goal::Kind::Conj) {
      std::vector<std::vector<const Goal*>> out{{}};
      for (const auto& s : g.subgoals) {
        auto part = dnf(s);
        std::vector<std::vector<const Goal*>> next;
        for (const auto& a : out)
          for (const auto& b : part) {
            auto c = a;
            c.insert(c.end(), b.begin(), b.end());
            next.push_back(std::move(c));
          }
        out = std::move(next);
      }
      return out;
    }
    return {{&g}};
  };
  for (const auto& g : body) {
    auto part = dnf(g);
    std::vector<std::vector<const Goal*>> next;
    for (const auto& a : acc)
      for (const auto& b : part) {
        auto c = a;
        c.insert(c.end(), b.begin(), b.end());
        next.push_back(std::move(c));
      }
    acc = std::move(next);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Constraints

std::optional<ConstraintViolation> evaluate_constraint(Database& db, const Rule& constraint,
                                                       const ContextId& ctx);

/// Evaluates every stored constraint in `ctx` on fresh tables.
inline std::vector<ConstraintViolation> check_constraints(Database& db, const ContextId& ctx) {
  std::vector<ConstraintViolation> out;
  const std::vector<Rule> constraints = db.constraints();
  for (const auto& c : constraints)
    if (auto v = evaluate_constraint(db, c, ctx)) out.push_back(std::move(*v));
  return out;
}

inline ConstraintChecker constraint_checker(Database& db) {
  return [&db](const ContextId& ctx) { return check_constraints(db, ctx); };
}

// ---------------------------------------------------------------------------
// Solver

/// Evaluation state for one top-level query: answer and call tables and the
/// hypothetical contexts opened so far. Contexts are closed by `close_all`
/// (also run on destruction).
class Solver {
 public:
  explicit Solver(Database& db) : db_(db) {}
  Solver(const Solver&) = delete;
  Solver& operator=(const Solver&) = delete;
  ~Solver() { close_all(); }

  const AnswerTable& answers() const { return at_; }
  const CallTable& calls() const { return ct_; }
  const std::vector<Event>& events() const { return events_; }
  bool undefined() const { return undefined_; }

  /// Solves `call` completely in `ctx`: negatively depended predicates
  /// first, then the call to fixpoint, then its restricting part if the
  /// predicate is restricted.
  void solve_complete(const Atom& call, const ContextId& ctx) {
    const PredRef pred = call.pred();
    const bool restricted = db_.is_restricted(pred, ctx);
    Atom target = restricted ? open_call(pred) : canonical_call(call).first;
    if (!restricted && call.restricting) target.restricting = true;
    if (is_completed(target, ctx) || is_in_progress(target, ctx)) return;
    in_progress_.push_back({ctx, target});

    const ContextAnalysis analysis = db_.analysis(ctx);
    const Pdg gdg = goal_dependency_graph(analysis.pdg, pred);
    if (!stratify(gdg).stratifiable) mark_undefined(ctx);
    for (const Atom& og : negated_open_goals(gdg, analysis.strata, pred)) {
      if (is_system_pred(og.pred())) continue;  // solved on demand
      ensure_saturated(og, ctx);
    }
    if (restricted) {
      solve_restricted(target, ctx);
    } else {
      fixpoint(target, ctx);
      mark_completed(target, ctx);
    }
    in_progress_.pop_back();
  }

  /// Positive meaning, then restricting meaning, then P+ - P-.
  void solve_restricted(const Atom& open, const ContextId& ctx) {
    Atom pos = open;
    pos.restricting = false;
    fixpoint(pos, ctx);
    mark_completed(pos, ctx);
    Atom neg = open;
    neg.restricting = true;
    fixpoint(neg, ctx);
    mark_completed(neg, ctx);
    at_.remove_restricted(open.pred(), ctx);
  }

  /// One tabled resolution pass for `call`, returning its current answers.
  std::vector<Atom> memo(const Atom& call, const ContextId& ctx) {
    const PredRef pred = call.pred();
    if (db_.is_restricted(pred, ctx) && !pred_in_progress(pred, ctx)) {
      solve_complete(call, ctx);
      return lookup(call, ctx);
    }
    if (is_completed(call, ctx)) return lookup(call, ctx);
    if (frames_.empty()) {
      fixpoint(call, ctx);
      return lookup(call, ctx);
    }
    auto [canon, key] = canonical_call(call);
    Frame& frame = frames_.back();
    if (!frame.pass_calls.insert(key).second) return lookup(call, ctx);
    frame.calls.push_back(canon);
    ct_.insert(key, ctx);
    for (const Rule* rule : db_.rules_for(pred, call.restricting, ctx)) resolve(*rule, canon, ctx);
    return lookup(call, ctx);
  }

  /// Truth of a ground literal in the closed world of the table.
  bool cwa_lookup(const Goal& literal, const ContextId& ctx) const {
    if (literal.kind == Goal::Kind::Neg) return !cwa_lookup(literal.inner(), ctx);
    if (literal.kind != Goal::Kind::Atom) throw EvalError("not a literal: " + pretty(literal));
    if (!literal.atom.is_ground())
      throw EvalError("non-ground literal in lookup: " + pretty(literal.atom));
    return at_.has(literal.atom, ctx);
  }

  /// Ground answers currently tabled for `call` in `ctx`, deduplicated.
  std::vector<Atom> lookup(const Atom& call, const ContextId& ctx) const {
    std::vector<Atom> out;
    std::set<std::vector<Term>> seen;
    for (const TableEntry* e : at_.entries(call.pred(), call.restricting, ctx)) {
      Subst s;
      if (!unify_args(call, e->atom, s)) continue;
      if (seen.insert(e->atom.args).second) out.push_back(e->atom);
    }
    return out;
  }

  /// Bag of answers for `call` in `ctx`: one unit per table entry.
  std::vector<Answer> answer_bag(const Atom& call, const ContextId& ctx) const {
    std::map<Atom, int> bag;
    for (const TableEntry* e : at_.entries(call.pred(), call.restricting, ctx)) {
      Subst s;
      if (unify_args(call, e->atom, s)) ++bag[e->atom];
    }
    std::vector<Answer> out;
    for (auto& [a, n] : bag) out.push_back({a, n});
    return out;
  }

  /// Solves the conclusion of an implication found in rule `host_rule_id`
  /// under `s`, calling `k` once per answer.
  void solve_hypothetical(const Goal& hyp, int host_rule_id, const ContextId& ctx, Subst& s,
                          const std::function<void(Subst&)>& k) {
    const Goal& concl = hyp.conclusion();
    if (concl.kind != Goal::Kind::Atom)
      throw EvalError("implication conclusion must be atomic after preprocessing");
    // The premise of this rule is already assumed along the current path.
    if (ctx.contains(host_rule_id)) {
      solve_atom(concl.atom, ctx, s, k);
      return;
    }
    const ContextId inner = open_context(ctx, host_rule_id, hyp.premise);
    const Atom call = substitute(concl.atom, s);
    solve_complete(call, inner);
    for (const Atom& ans : lookup(call, inner)) {
      Subst s2 = s;
      if (unify_args(concl.atom, ans, s2)) k(s2);
    }
  }

  /// Closes every context opened by this solver, innermost first.
  void close_all() {
    for (auto it = opened_.rbegin(); it != opened_.rend(); ++it) db_.close_context(*it);
    opened_.clear();
  }

 private:
  struct Frame {
    std::set<std::string> pass_calls;
    std::vector<Atom> calls;
    bool changed = false;
  };

  Database& db_;
  AnswerTable at_;
  CallTable ct_;
  std::map<std::pair<ContextId, PredRef>, std::vector<Atom>> completed_;
  std::vector<std::pair<ContextId, Atom>> in_progress_;
  std::vector<Frame> frames_;
  std::vector<ContextId> opened_;
  std::vector<Event> events_;
  std::set<ContextId> undefined_ctx_;
  std::map<int, std::vector<std::vector<const Goal*>>> branch_cache_;
  bool undefined_ = false;

  void mark_undefined(const ContextId& ctx) {
    undefined_ = true;
    if (undefined_ctx_.insert(ctx).second) {
      Event e;
      e.kind = Event::Kind::Undefined;
      e.ctx = ctx;
      events_.push_back(std::move(e));
    }
  }

  bool is_completed(const Atom& call, const ContextId& ctx) const {
    auto it = completed_.find({ctx, call.pred()});
    if (it == completed_.end()) return false;
    return std::any_of(it->second.begin(), it->second.end(),
                       [&](const Atom& p) { return subsumes(p, call); });
  }

  void mark_completed(const Atom& call, const ContextId& ctx) {
    if (!is_completed(call, ctx)) completed_[{ctx, call.pred()}].push_back(call);
  }

  bool is_in_progress(const Atom& call, const ContextId& ctx) const {
    return std::any_of(in_progress_.begin(), in_progress_.end(), [&](const auto& p) {
      return p.first == ctx && subsumes(p.second, call);
    });
  }

  bool pred_in_progress(const PredRef& pred, const ContextId& ctx) const {
    return std::any_of(in_progress_.begin(), in_progress_.end(), [&](const auto& p) {
      return p.first == ctx && p.second.pred() == pred;
    });
  }

  void ensure_saturated(const Atom& call, const ContextId& ctx) {
    if (is_completed(call, ctx)) return;
    if (is_in_progress(call, ctx) || pred_in_progress(call.pred(), ctx)) {
      mark_undefined(ctx);
      return;
    }
    solve_complete(call, ctx);
  }

  void fixpoint(const Atom& call, const ContextId& ctx) {
    frames_.push_back({});
    do {
      frames_.back().changed = false;
      frames_.back().pass_calls.clear();
      frames_.back().calls.clear();
      memo(call, ctx);
    } while (frames_.back().changed);
    std::vector<Atom> done = std::move(frames_.back().calls);
    frames_.pop_back();
    for (const Atom& c : done) mark_completed(c, ctx);
  }

  const std::vector<std::vector<const Goal*>>& rule_branches(const Rule& rule) {
    auto it = branch_cache_.find(rule.id);
    if (it == branch_cache_.end()) it = branch_cache_.emplace(rule.id, branches(rule.body)).first;
    return it->second;
  }

  void resolve(const Rule& rule, const Atom& call, const ContextId& ctx) {
    const auto& bs = rule_branches(rule);
    for (std::size_t b = 0; b < bs.size(); ++b) {
      Subst s;
      if (!unify_args(*rule.head, call, s)) return;
      std::vector<bool> done(bs[b].size(), false);
      solve_literals(bs[b], done, bs[b].size(), s, ctx, rule.id, [&](Subst& fin) {
        Atom head = substitute(*rule.head, fin);
        if (!head.is_ground()) throw EvalError("unsafe rule derived non-ground " + pretty(head));
        if (at_.insert(head, rule.id, static_cast<int>(b), ctx) && !frames_.empty())
          frames_.back().changed = true;
      });
    }
  }

  bool ready(const Goal& g, const Subst& s) const {
    switch (g.kind) {
      case Goal::Kind::Atom:
      case Goal::Kind::Hyp: return true;
      case Goal::Kind::Neg: return substitute(g.inner().atom, s).is_ground();
      case Goal::Kind::BuiltIn: return builtin_ready(g, s);
      default: return false;
    }
  }

  void solve_literals(const std::vector<const Goal*>& lits, std::vector<bool>& done,
                      std::size_t remaining, Subst& s, const ContextId& ctx, int host_id,
                      const std::function<void(Subst&)>& k) {
    if (remaining == 0) {
      k(s);
      return;
    }
    std::size_t pick = lits.size();
    for (std::size_t i = 0; i < lits.size(); ++i)
      if (!done[i] && ready(*lits[i], s)) {
        pick = i;
        break;
      }
    if (pick == lits.size()) {
      for (std::size_t i = 0; i < lits.size(); ++i)
        if (!done[i]) throw EvalError("cannot evaluate " + pretty(*lits[i]) + " (unsafe)");
    }
    done[pick] = true;
    auto next = [&](Subst& s2) {
      solve_literals(lits, done, remaining - 1, s2, ctx, host_id, k);
    };
    const Goal& g = *lits[pick];
    switch (g.kind) {
      case Goal::Kind::Atom: solve_atom(g.atom, ctx, s, next); break;
      case Goal::Kind::Neg: {
        if (g.inner().kind != Goal::Kind::Atom)
          throw EvalError("negation must wrap an atom after preprocessing");
        Atom a = substitute(g.inner().atom, s);
        ensure_saturated(a, ctx);
        if (cwa_lookup(Goal::neg(Goal::of(a)), ctx)) next(s);
        break;
      }
      case Goal::Kind::BuiltIn: {
        Subst s2 = s;
        if (eval_builtin(g, s2)) next(s2);
        break;
      }
      case Goal::Kind::Hyp: solve_hypothetical(g, host_id, ctx, s, next); break;
      default: throw EvalError("unexpected goal " + pretty(g));
    }
    done[pick] = false;
  }

  void solve_atom(const Atom& atom, const ContextId& ctx, Subst& s,
                  const std::function<void(Subst&)>& k) {
    const Atom call = substitute(atom, s);
    for (const Atom& ans : memo(call, ctx)) {
      Subst s2 = s;
      if (unify_args(atom, ans, s2)) k(s2);
    }
  }

  ContextId open_context(const ContextId& parent, int host_rule_id,
                         const std::vector<Rule>& premise) {
    const ContextId ctx = parent.child(host_rule_id);
    if (std::find(opened_.begin(), opened_.end(), ctx) != opened_.end()) return ctx;
    std::vector<std::pair<Rule, std::vector<Rule>>> groups;
    for (const Rule& r : premise) groups.emplace_back(r, flatten_nested_implications(r, db_));
    OpenResult res = db_.open_context(parent, host_rule_id, groups, constraint_checker(db_));
    if (res.newly_opened) opened_.push_back(ctx);
    for (auto& rej : res.rejections) {
      Event e;
      e.kind = Event::Kind::Rejection;
      e.ctx = ctx;
      e.rejection = std::move(rej);
      events_.push_back(std::move(e));
    }
    Event e;
    e.kind = Event::Kind::ContextOpened;
    e.ctx = ctx;
    e.premise = std::move(res.accepted);
    e.analysis = db_.analysis(ctx);
    events_.push_back(std::move(e));
    return ctx;
  }
};

inline std::optional<ConstraintViolation> evaluate_constraint(Database& db, const Rule& constraint,
                                                              const ContextId& ctx) {
  const std::vector<Term> vars = vars_of(constraint);
  Rule view;
  view.head = Atom{"$ic", vars, false};
  view.body = constraint.body;
  std::vector<int> ids;
  for (const Rule& r : flatten_nested_implications(view, db)) ids.push_back(db.add_rule(r, ctx));
  std::vector<Atom> offending;
  {
    Solver solver(db);
    try {
      solver.solve_complete(*view.head, ctx);
    } catch (...) {
      solver.close_all();
      for (int id : ids) db.remove_rule(id);
      throw;
    }
    for (const TableEntry* e : solver.answers().entries(view.head->pred(), false, ctx)) {
      Atom a = e->atom;
      a.name = "ic";
      if (std::find(offending.begin(), offending.end(), a) == offending.end())
        offending.push_back(std::move(a));
    }
  }
  for (int id : ids) db.remove_rule(id);
  if (offending.empty()) return std::nullopt;
  // Most recent derivation first.
  std::reverse(offending.begin(), offending.end());
  Rule shown;
  shown.head = Atom{"ic", vars, false};
  shown.body = constraint.body;
  return ConstraintViolation{std::move(shown), std::move(offending)};
}

// ---------------------------------------------------------------------------
// Queries and updates

struct QueryResult {
  std::optional<Rule> view;  // temporary `answer` rule when the goal was rewritten
  std::vector<Answer> answers;
  std::vector<Event> events;
  bool undefined = false;
  std::map<PredRef, std::size_t> root_entries;  // table entries per predicate at the root
};

/// Solves a goal at the root. Non-atomic goals are wrapped as a temporary
/// view `answer(V1,...,Vk) :- goal`, which bypasses constraint checking.
inline QueryResult solve_query(Database& db, const Goal& goal) {
  if (auto rep = check_safety(goal); !rep.safe()) throw SafetyError(rep);
  QueryResult res;
  const ContextId root;
  Atom target;
  std::vector<int> view_ids;
  if (goal.kind == Goal::Kind::Atom) {
    target = goal.atom;
  } else {
    std::vector<Term> vars;
    for (const Term& v : vars_of(goal))
      if (v.text.empty() || v.text[0] != '_') vars.push_back(v);
    Rule view;
    view.head = Atom{"answer", vars, false};
    view.body = goal.kind == Goal::Kind::Conj ? goal.subgoals : std::vector<Goal>{goal};
    res.view = view;
    for (const Rule& r : flatten_nested_implications(view, db))
      view_ids.push_back(db.add_rule(r, root));
    target = *view.head;
  }
  Solver solver(db);
  try {
    solver.solve_complete(target, root);
  } catch (...) {
    solver.close_all();
    for (int id : view_ids) db.remove_rule(id);
    throw;
  }
  res.answers = solver.answer_bag(target, root);
  res.events = solver.events();
  res.undefined = solver.undefined();
  for (const Rule& r : db.visible_rules(root)) {
    if (r.head) res.root_entries[r.head->pred()] = 0;
  }
  solver.close_all();
  for (int id : view_ids) db.remove_rule(id);
  for (auto& [p, n] : res.root_entries) n = solver.answers().count(p, root);
  return res;
}

/// Result of adding a user rule at the root.
struct UpdateResult {
  std::vector<int> ids;
  std::vector<RejectionReport> rejections;
};

/// Safety-checks, preprocesses and asserts a user rule at the root,
/// enforcing integrity constraints.
inline UpdateResult assert_user_rule(Database& db, const Rule& rule) {
  if (!rule.head) throw EvalError("a constraint cannot be asserted as a rule");
  if (auto rep = check_safety(rule); !rep.safe()) throw SafetyError(rep);
  auto group = flatten_nested_implications(rule, db);
  AssertResult ar = db.assert_group(group, rule, ContextId{}, constraint_checker(db));
  return {ar.ids, ar.rejections};
}

/// Adds an integrity constraint unless the root database already violates it.
inline std::optional<ConstraintViolation> add_user_constraint(Database& db, const Rule& c) {
  if (c.head || c.body.empty()) throw EvalError("a constraint has no head and a non-empty body");
  if (auto rep = check_safety(c); !rep.safe()) throw SafetyError(rep);
  return db.add_constraint(c, [&db](const Rule& r) {
    return evaluate_constraint(db, r, ContextId{});
  });
}

}  // namespace hdl
