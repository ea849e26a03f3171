#include <gtest/gtest.h>

#include "hypodl/engine.hpp"
#include "hypodl/parser.hpp"

using namespace hdl;

namespace {

Rule rule(const std::string& text) { return parse_program(text).front(); }

void load(Database& db, const std::string& text) {
  for (const auto& r : parse_program(text)) {
    if (r.is_constraint()) add_user_constraint(db, r);
    else assert_user_rule(db, r);
  }
}

std::string ask(Database& db, const std::string& goal) {
  QueryResult res = solve_query(db, parse_input(goal).goal);
  std::string s;
  for (const auto& a : res.answers)
    for (int i = 0; i < a.multiplicity; ++i) s += (s.empty() ? "" : " ") + pretty(a.atom);
  return s;
}

std::vector<std::string> flat(const std::string& text) {
  int n = 0;
  std::vector<std::string> out;
  for (const auto& r : flatten_nested_implications(rule(text), [&n] { return "$p" + std::to_string(n++); }))
    out.push_back(pretty(r));
  return out;
}

const char* kUniversity =
    "student(adam). student(scott). course(eng). take(adam,eng). take(scott,his).\n"
    "student(bob).  student(tony).  course(his). take(pete,his). take(scott,lp).\n"
    "student(pete).                 course(lp).  take(pete,eng). take(tony,his).\n"
    "grad(S) :- take(S,his), take(S,eng).\n";

}  // namespace

TEST(Flatten, NestedImplication) {
  EXPECT_EQ(flat("p :- q => r => s."),
            (std::vector<std::string>{"'$p0' :- r=>s.", "p :- q=>'$p0'."}));
}

TEST(Flatten, CompoundConclusion) {
  EXPECT_EQ(flat("a(X) :- b(X), (f(X) => (g(X), h(X)))."),
            (std::vector<std::string>{"'$p0'(X) :- g(X), h(X).", "a(X) :- b(X), (f(X)=>'$p0'(X))."}));
}

TEST(Flatten, CompoundNegationKeepsSharedVariables) {
  EXPECT_EQ(flat("a(X) :- b(X), not (c(X,W), d(W))."),
            (std::vector<std::string>{"'$p0'(X) :- c(X,W), d(W).", "a(X) :- b(X), not '$p0'(X)."}));
}

TEST(Flatten, OneImplicationPerRule) {
  auto out = flat("a(X) :- (f => b(X)), (g => c(X)).");
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], "'$p0'(X) :- g=>c(X).");
  EXPECT_EQ(out[1], "a(X) :- (f=>b(X)), '$p0'(X).");
}

TEST(Flatten, AtomicRulesUnchanged) {
  EXPECT_EQ(flat("grad(S) :- take(S,his), take(S,eng)."),
            (std::vector<std::string>{"grad(S) :- take(S,his), take(S,eng)."}));
}

TEST(Builtins, IntegerArithmetic) {
  Database db;
  load(db, "n(7). n(-7).");
  EXPECT_EQ(ask(db, "n(X), Y = X / 2"), "answer(-7,-3) answer(7,3)");
  EXPECT_EQ(ask(db, "n(X), Y = X mod 3"), "answer(-7,2) answer(7,1)");
  EXPECT_EQ(ask(db, "n(X), X > 0"), "answer(7)");
  EXPECT_EQ(ask(db, "n(X), X \\= 7"), "answer(-7)");
}

TEST(Builtins, DivisionByZeroIsAnError) {
  Database db;
  load(db, "n(1).");
  EXPECT_THROW(solve_query(db, parse_input("n(X), Y = X / 0").goal), EvalError);
  EXPECT_THROW(solve_query(db, parse_input("n(X), Y = X mod 0").goal), EvalError);
  // The temporary view is gone afterwards.
  EXPECT_EQ(db.size(), 1u);
}

TEST(Builtins, SymbolComparison) {
  Database db;
  load(db, "c(a). c(b).");
  EXPECT_EQ(ask(db, "c(X), X < b"), "answer(a)");
  load(db, "c(1).");
  EXPECT_THROW(solve_query(db, parse_input("c(X), X < 2").goal), EvalError);
}

TEST(Solve, UniversityBaseline) {
  Database db;
  load(db, kUniversity);
  EXPECT_EQ(ask(db, "grad(S)"), "grad(pete)");
}

TEST(Solve, LeftRecursionTerminates) {
  Database db;
  load(db, "e(1,2). e(2,3). e(3,1). path(X,Y) :- path(X,Z), e(Z,Y). path(X,Y) :- e(X,Y).");
  QueryResult res = solve_query(db, parse_input("path(1,Y)").goal);
  EXPECT_EQ(res.answers.size(), 3u);
}

TEST(Solve, Duplicates) {
  Database db;
  load(db, "p(1). p(1). q(X) :- p(X) ; p(X).");
  EXPECT_EQ(ask(db, "p(X)"), "p(1) p(1)");
  EXPECT_EQ(ask(db, "q(X)"), "q(1) q(1)");
}

TEST(Solve, StratifiedNegation) {
  Database db;
  load(db, "a(1). a(2). b(2). c(X) :- a(X), not b(X).");
  EXPECT_EQ(ask(db, "c(X)"), "c(1)");
  EXPECT_EQ(ask(db, "not c(2)"), "answer");
}

TEST(Solve, EvenNumbersByRestriction) {
  Database db;
  load(db, "p(X) :- X=1 ; p(Y), Y<10, X=Y+1.\n-p(X) :- p(X), X mod 2 = 1.");
  EXPECT_EQ(ask(db, "p(X)"), "p(2) p(4) p(6) p(8) p(10)");
  EXPECT_EQ(ask(db, "-p(X)"), "-p(1) -p(3) -p(5) -p(7) -p(9)");
  EXPECT_EQ(ask(db, "p(3)"), "");
  EXPECT_EQ(ask(db, "p(4)"), "p(4)");
  EXPECT_EQ(ask(db, "not p(1)"), "answer");
  EXPECT_EQ(ask(db, "not -p(1)"), "");
}

TEST(Solve, ContextsCloseAfterTheQuery) {
  Database db;
  load(db, kUniversity);
  const std::size_t before = db.size();
  EXPECT_EQ(ask(db, "take(tony,eng) => grad(tony)"), "answer");
  EXPECT_EQ(db.size(), before);
  EXPECT_EQ(db.open_depth(), 0u);
  EXPECT_EQ(ask(db, "grad(tony)"), "");
}

TEST(Solve, NegativeAssumption) {
  Database db;
  load(db, kUniversity);
  EXPECT_EQ(ask(db, "-take(pete,eng) => grad(pete)"), "");
  EXPECT_EQ(ask(db, "grad(pete)"), "grad(pete)");
}

TEST(Solve, AssumptionInsideARule) {
  Database db;
  load(db, kUniversity);
  load(db, "may_grad(S) :- student(S), (take(tony,eng) => grad(S)).");
  EXPECT_EQ(ask(db, "may_grad(S)"), "may_grad(pete) may_grad(tony)");
}

TEST(Solve, RecursionThroughTheSameAssumption) {
  // The host rule recurses on itself under its own premise.
  Database db;
  load(db, "n(1). n(2). n(3). p(X) :- n(X), (q(1) => r(X)). r(X) :- q(X). r(X) :- n(X), Y = X - 1, p(Y).");
  EXPECT_EQ(ask(db, "p(X)"), "p(1) p(2) p(3)");
}

TEST(Solve, DynamicStrataAvoidUnneededTuples) {
  Database db;
  load(db, "t(1). t(2). r(2). p(X) :- t(X).\nq(X) :- (p(Y) :- t(Y), not r(Y)) => s(X).");
  QueryResult res = solve_query(db, parse_input("p(1)").goal);
  EXPECT_EQ(res.answers.size(), 1u);
  EXPECT_EQ(res.root_entries.at(PredRef{"r", 1}), 0u);
  EXPECT_EQ(res.root_entries.at(PredRef{"t", 1}), 1u);
}

TEST(Solve, NonStratifiableIsFlagged) {
  Database db;
  load(db, "p :- not q. q :- not p.");
  QueryResult res = solve_query(db, parse_input("p").goal);
  EXPECT_TRUE(res.undefined);
}

TEST(Solve, UnsafeQueryIsRejected) {
  Database db;
  load(db, "p(1).");
  EXPECT_THROW(solve_query(db, parse_input("not p(X)").goal), SafetyError);
  EXPECT_THROW(assert_user_rule(db, rule("q(X) :- p(Y).")), SafetyError);
}

TEST(Constraints, OffendingValuesAndRejection) {
  Database db;
  load(db, "pre(eng,lp). pre(hist,eng). pre(Pre,Post) :- pre(Pre,X), pre(X,Post).");
  EXPECT_FALSE(add_user_constraint(db, rule(":- pre(X,X).")).has_value());
  QueryResult res = solve_query(db, parse_input("pre(lp,hist) => pre(X,Y)").goal);
  ASSERT_EQ(res.events.size(), 2u);
  ASSERT_EQ(res.events[0].kind, Event::Kind::Rejection);
  const RejectionReport& rej = res.events[0].rejection;
  EXPECT_EQ(pretty(rej.constraint), "ic(X) :- pre(X,X).");
  std::vector<std::string> off;
  for (const auto& a : rej.offending) off.push_back(pretty(a));
  EXPECT_EQ(off, (std::vector<std::string>{"ic(lp)", "ic(eng)", "ic(hist)"}));
  EXPECT_EQ(pretty(rej.rejected_rule), "pre(lp,hist).");
  EXPECT_EQ(res.events[1].kind, Event::Kind::ContextOpened);
  EXPECT_EQ(res.answers.size(), 3u);
}

TEST(Constraints, ViolatedConstraintIsNotStored) {
  Database db;
  load(db, "p(1).");
  auto v = add_user_constraint(db, rule(":- p(X)."));
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->offending.size(), 1u);
  EXPECT_TRUE(db.constraints().empty());
}

TEST(Constraints, RootAssertionIsChecked) {
  Database db;
  load(db, ":- p(X), q(X). p(1).");
  UpdateResult res = assert_user_rule(db, rule("q(1)."));
  EXPECT_EQ(res.rejections.size(), 1u);
  EXPECT_EQ(ask(db, "q(X)"), "");
  EXPECT_TRUE(assert_user_rule(db, rule("q(2).")).rejections.empty());
}

TEST(Solver, TablesAndLookup) {
  Database db;
  load(db, "p(1). p(2). -p(2).");
  Solver s(db);
  s.solve_complete(parse_input("p(X)").goal.atom, {});
  Atom p1{"p", {Term::integer(1)}, false};
  Atom p2{"p", {Term::integer(2)}, false};
  EXPECT_TRUE(s.cwa_lookup(Goal::of(p1), {}));
  EXPECT_FALSE(s.cwa_lookup(Goal::of(p2), {}));
  EXPECT_TRUE(s.cwa_lookup(Goal::neg(Goal::of(p2)), {}));
  Atom m2 = p2;
  m2.restricting = true;
  EXPECT_TRUE(s.cwa_lookup(Goal::of(m2), {}));
  // The removed entry is still recorded.
  EXPECT_EQ(s.answers().entries({"p", 1}, false, {}, true).size(), 2u);
  EXPECT_EQ(s.answers().entries({"p", 1}, false, {}).size(), 1u);
  EXPECT_GT(s.calls().size(), 0u);
}

TEST(Solver, SubsumedCallsReuseAnswers) {
  Database db;
  load(db, "e(1,2). e(2,3).");
  Solver s(db);
  s.solve_complete(parse_input("e(X,Y)").goal.atom, {});
  const std::size_t calls = s.calls().size();
  auto got = s.memo(parse_input("e(1,Y)").goal.atom, {});
  EXPECT_EQ(got.size(), 1u);
  EXPECT_EQ(s.calls().size(), calls);
}
