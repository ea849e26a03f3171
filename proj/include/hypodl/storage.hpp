#pragma once

// The mutable database: identified rules tagged with the context they were
// asserted in, the constraint store, and the hypothetical context stack.

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hypodl/analysis.hpp"
#include "hypodl/syntax.hpp"

namespace hdl {

/// A satisfied integrity constraint: the constraint shown as an `ic` view
/// and the offending `ic` instances.
struct ConstraintViolation {
  Rule constraint;
  std::vector<Atom> offending;
};

struct RejectionReport {
  Rule constraint;
  std::vector<Atom> offending;
  Rule rejected_rule;
};

/// Evaluates every stored constraint in a context.
using ConstraintChecker = std::function<std::vector<ConstraintViolation>(const ContextId&)>;

struct ContextAnalysis {
  Pdg pdg;
  Stratification strata;
};

struct AssertResult {
  std::vector<int> ids;
  std::vector<RejectionReport> rejections;

  bool accepted() const { return rejections.empty(); }
};

struct OpenResult {
  ContextId ctx;
  bool newly_opened = false;
  std::vector<Rule> accepted;  // premise rules as written
  std::vector<RejectionReport> rejections;
};

namespace detail {

// Canonical text of a rule up to variable renaming.
inline std::string canonical(const Rule& r) {
  std::vector<Term> vs;
  collect_vars(r, vs, true);
  std::map<VarKey, std::string> names;
  for (const auto& v : vs) names.emplace(key_of(v), "V" + std::to_string(names.size()));
  std::function<void(Term&)> fix_term = [&](Term& t) {
    if (t.is_var()) {
      t.text = names[key_of(t)];
      t.scope = 0;
    }
    for (auto& o : t.operands) fix_term(o);
  };
  std::function<void(Rule&)> fix_rule;
  std::function<void(Goal&)> fix_goal = [&](Goal& g) {
    for (auto& a : g.atom.args) fix_term(a);
    fix_term(g.lhs);
    fix_term(g.rhs);
    for (auto& s : g.subgoals) fix_goal(s);
    for (auto& p : g.premise) fix_rule(p);
  };
  fix_rule = [&](Rule& x) {
    if (x.head)
      for (auto& a : x.head->args) fix_term(a);
    for (auto& g : x.body) fix_goal(g);
  };
  Rule copy = r;
  fix_rule(copy);
  return pretty(copy);
}

}  // namespace detail

class Database {
 public:
  struct Stored {
    Rule rule;           // id and context filled in
    std::string origin;  // canonical text of the user-level rule it came from
  };

  // -- raw storage ---------------------------------------------------------

  /// Stores `rule` under `ctx` without any checks and returns its id.
  int add_rule(Rule rule, const ContextId& ctx, std::string origin = {}) {
    const int id = next_id_++;
    rule.id = id;
    rule.context = ctx;
    if (origin.empty()) origin = detail::canonical(rule);
    if (rule.head) index_[key(*rule.head)].push_back(id);
    rules_.emplace(id, Stored{std::move(rule), std::move(origin)});
    ++version_;
    return id;
  }

  bool remove_rule(int id) {
    auto it = rules_.find(id);
    if (it == rules_.end()) return false;
    if (it->second.rule.head) {
      auto& ids = index_[key(*it->second.rule.head)];
      ids.erase(std::remove(ids.begin(), ids.end(), id), ids.end());
    }
    rules_.erase(it);
    ++version_;
    return true;
  }

  const Rule* find_rule(int id) const {
    auto it = rules_.find(id);
    return it == rules_.end() ? nullptr : &it->second.rule;
  }

  int next_id() const { return next_id_; }
  std::size_t size() const { return rules_.size(); }

  // -- assertion -----------------------------------------------------------

  /// Asserts a group of rules that together implement one user rule (the
  /// rule itself plus any auxiliary rules produced by preprocessing). With a
  /// checker, constraints are evaluated on the extended database and the
  /// whole group is withdrawn on violation. In a hypothetical context the
  /// same group is stored only once.
  AssertResult assert_group(const std::vector<Rule>& group, const Rule& original,
                            const ContextId& ctx, const ConstraintChecker& checker = {}) {
    AssertResult res;
    const std::string origin = detail::canonical(original);
    if (!ctx.is_root()) {
      for (const auto& [id, s] : rules_)
        if (s.rule.context == ctx && s.origin == origin) res.ids.push_back(id);
      if (!res.ids.empty()) return res;
    }
    for (const auto& r : group) res.ids.push_back(add_rule(r, ctx, origin));
    if (checker && !constraints_.empty()) {
      auto violations = checker(ctx);
      if (!violations.empty()) {
        for (int id : res.ids) remove_rule(id);
        res.ids.clear();
        for (auto& v : violations)
          res.rejections.push_back({std::move(v.constraint), std::move(v.offending), original});
      }
    }
    return res;
  }

  AssertResult assert_rule(const Rule& rule, const ContextId& ctx,
                           const ConstraintChecker& checker = {}) {
    return assert_group({rule}, rule, ctx, checker);
  }

  /// Removes root rules equal to `rule` up to variable renaming, together
  /// with their auxiliary rules. Returns the number of user rules removed.
  int retract_rule(const Rule& rule) {
    const std::string origin = detail::canonical(rule);
    std::vector<int> doomed;
    int count = 0;
    for (const auto& [id, s] : rules_) {
      if (!s.rule.context.is_root() || s.origin != origin) continue;
      doomed.push_back(id);
      if (s.rule.head && rule.head && s.rule.head->pred() == rule.head->pred() &&
          s.rule.head->restricting == rule.head->restricting)
        ++count;
    }
    for (int id : doomed) remove_rule(id);
    return count;
  }

  // -- constraints ---------------------------------------------------------

  /// Stores constraint `c` unless `evaluate` finds it violated.
  std::optional<ConstraintViolation> add_constraint(
      const Rule& c, const std::function<std::optional<ConstraintViolation>(const Rule&)>& evaluate) {
    if (evaluate) {
      if (auto v = evaluate(c)) return v;
    }
    constraints_.push_back(c);
    return std::nullopt;
  }

  const std::vector<Rule>& constraints() const { return constraints_; }

  // -- visibility ----------------------------------------------------------

  /// Rules asserted in `ctx` or in one of its ancestors, in id order.
  std::vector<Rule> visible_rules(const ContextId& ctx) const {
    std::vector<Rule> out;
    for (const auto& [id, s] : rules_)
      if (s.rule.context.is_ancestor_of(ctx)) out.push_back(s.rule);
    return out;
  }

  /// Visible rules defining `pred` with a regular or restricting head.
  std::vector<const Rule*> rules_for(const PredRef& pred, bool restricting,
                                     const ContextId& ctx) const {
    std::vector<const Rule*> out;
    auto it = index_.find({pred, restricting});
    if (it == index_.end()) return out;
    for (int id : it->second) {
      const Rule& r = rules_.at(id).rule;
      if (r.context.is_ancestor_of(ctx)) out.push_back(&r);
    }
    return out;
  }

  bool is_restricted(const PredRef& pred, const ContextId& ctx) const {
    return !rules_for(pred, true, ctx).empty();
  }

  // -- analysis ------------------------------------------------------------

  /// Dynamic dependency graph and strata for the rules visible in `ctx`.
  const ContextAnalysis& analysis(const ContextId& ctx) const {
    auto it = analysis_cache_.find(ctx);
    if (it != analysis_cache_.end() && it->second.first == version_) return it->second.second;
    auto rules = visible_rules(ctx);
    ContextAnalysis a;
    a.pdg = build_pdg(rules);
    a.strata = stratify(a.pdg);
    auto& slot = analysis_cache_[ctx];
    slot = {version_, std::move(a)};
    return slot.second;
  }

  /// The analysis currently installed: the innermost open context's, or
  /// the root's when no context is open.
  const ContextAnalysis& current_analysis() const {
    return frames_.empty() ? analysis(ContextId{}) : frames_.back().installed;
  }

  // -- hypothetical contexts -----------------------------------------------

  /// Opens `parent ++ [host_rule_id]`, asserting each premise group left to
  /// right under constraint checking. Groups pair the premise rule as
  /// written with the rules actually stored for it.
  OpenResult open_context(const ContextId& parent, int host_rule_id,
                          const std::vector<std::pair<Rule, std::vector<Rule>>>& premise,
                          const ConstraintChecker& checker = {}) {
    OpenResult res;
    res.ctx = parent.child(host_rule_id);
    for (const auto& f : frames_)
      if (f.ctx == res.ctx) return res;
    Frame frame;
    frame.ctx = res.ctx;
    frame.saved = current_analysis();
    for (const auto& [original, group] : premise) {
      AssertResult ar = assert_group(group, original, res.ctx, checker);
      if (ar.accepted()) {
        res.accepted.push_back(original);
      } else {
        for (auto& r : ar.rejections) res.rejections.push_back(std::move(r));
      }
    }
    frame.installed = analysis(res.ctx);
    frames_.push_back(std::move(frame));
    res.newly_opened = true;
    return res;
  }

  /// Closes the innermost open context: its rules are retracted and the
  /// saved analysis is restored.
  void close_context(const ContextId& ctx) {
    if (frames_.empty() || frames_.back().ctx != ctx) return;
    std::vector<int> doomed;
    for (const auto& [id, s] : rules_)
      if (s.rule.context == ctx) doomed.push_back(id);
    for (int id : doomed) remove_rule(id);
    frames_.pop_back();
  }

  bool is_open(const ContextId& ctx) const {
    for (const auto& f : frames_)
      if (f.ctx == ctx) return true;
    return false;
  }

  std::size_t open_depth() const { return frames_.size(); }

  /// Fresh session-unique name for an auxiliary predicate.
  std::string fresh_aux_name() { return "$p" + std::to_string(aux_counter_++); }

 private:
  struct Frame {
    ContextId ctx;
    ContextAnalysis saved;
    ContextAnalysis installed;
  };

  using IndexKey = std::pair<PredRef, bool>;
  static IndexKey key(const Atom& head) { return {head.pred(), head.restricting}; }

  std::map<int, Stored> rules_;
  std::map<IndexKey, std::vector<int>> index_;
  std::vector<Rule> constraints_;
  std::vector<Frame> frames_;
  int next_id_ = 0;
  int aux_counter_ = 0;
  std::size_t version_ = 0;
  mutable std::map<ContextId, std::pair<std::size_t, ContextAnalysis>> analysis_cache_;
};

}  // namespace hdl
