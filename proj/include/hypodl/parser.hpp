#pragma once

// Tokenizer and recursive-descent parser for the concrete language.
//
// Goal precedence, loosest first:
//   =>  (right associative)  <  ;  <  , and /\  <  not  <  comparisons
//
// Variables of every premise rule are moved into a fresh scope while
// parsing, so a premise never shares variable identities with its host.

#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hypodl/syntax.hpp"

namespace hdl {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line, int column)
      : std::runtime_error(msg), line_(line), column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

  std::string describe() const {
    return "Syntax error at line " + std::to_string(line_) + ", column " +
           std::to_string(column_) + ": " + what();
  }

 private:
  int line_;
  int column_;
};

struct Token {
  enum class Kind { Ident, Var, Int, Quoted, Punct, End };
  Kind kind = Kind::End;
  std::string text;
  std::int64_t value = 0;
  int line = 1;
  int column = 1;
};

inline std::vector<Token> tokenize(std::string_view src) {
  static const char* const kPuncts[] = {":-", "=>", "/\\", "\\=", "=<", ">=",
                                        "(",  ")",  ",",   ";",   ".",  "-",
                                        "+",  "*",  "/",   "=",   "<",  ">"};
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    if (c == '%') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    Token tok;
    tok.line = line;
    tok.column = col;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) ||
                                src[j] == '_'))
        ++j;
      tok.text = std::string(src.substr(i, j - i));
      tok.kind = (std::isupper(static_cast<unsigned char>(c)) || c == '_')
                     ? Token::Kind::Var
                     : Token::Kind::Ident;
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      tok.kind = Token::Kind::Int;
      tok.text = std::string(src.substr(i, j - i));
      try {
        tok.value = std::stoll(tok.text);
      } catch (const std::out_of_range&) {
        throw ParseError("integer out of range", line, col);
      }
      advance(j - i);
    } else if (c == '\'') {
      std::string s;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < src.size()) {
        if (src[j] == '\'') {
          if (j + 1 < src.size() && src[j + 1] == '\'') {
            s += '\'';
            j += 2;
            continue;
          }
          closed = true;
          break;
        }
        s += src[j++];
      }
      if (!closed) throw ParseError("unterminated quoted symbol", line, col);
      tok.kind = Token::Kind::Quoted;
      tok.text = std::move(s);
      advance(j + 1 - i);
    } else {
      bool matched = false;
      for (const char* p : kPuncts) {
        std::string_view pv(p);
        if (src.substr(i, pv.size()) == pv) {
          tok.kind = Token::Kind::Punct;
          tok.text = std::string(pv);
          advance(pv.size());
          matched = true;
          break;
        }
      }
      if (!matched)
        throw ParseError(std::string("unexpected character '") + c + "'", line, col);
    }
    out.push_back(std::move(tok));
  }
  Token end;
  end.line = line;
  end.column = col;
  out.push_back(end);
  return out;
}

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view src) : toks_(tokenize(src)) {}

  bool at_end() const { return peek().kind == Token::Kind::End; }

  Rule parse_rule_or_constraint(bool require_period) {
    Rule r;
    if (is_punct(":-")) {
      next();
      r.body = split_conj(parse_hyp());
    } else {
      Goal head = parse_unary();
      if (head.kind != Goal::Kind::Atom)
        fail("rule head must be an atom", peek());
      r.head = head.atom;
      if (is_punct(":-")) {
        next();
        r.body = split_conj(parse_hyp());
      }
    }
    finish(require_period);
    check_no_rule_markers(r);
    return r;
  }

  Goal parse_query(bool require_period) {
    Goal g = parse_hyp();
    if (is_punct(":-"))
      fail("rules must be added with /assert", peek());
    finish(require_period);
    check_no_rule_markers(g);
    return g;
  }

  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }

 private:
  static constexpr const char* kRuleMarker = "\x01rule";

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int scope_counter_ = 0;
  int anon_counter_ = 0;
  std::vector<Rule> pending_rules_;

  [[noreturn]] void fail(const std::string& msg, const Token& at) const {
    throw ParseError(msg, at.line, at.column);
  }

  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  bool is_punct(std::string_view p, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == Token::Kind::Punct && t.text == p;
  }
  bool is_ident(std::string_view p) const {
    const Token& t = peek();
    return t.kind == Token::Kind::Ident && t.text == p;
  }

  void expect(std::string_view p) {
    if (!is_punct(p)) fail("expected '" + std::string(p) + "'", peek());
    next();
  }

  void finish(bool require_period) {
    if (is_punct(".")) {
      next();
    } else if (require_period) {
      fail("expected '.'", peek());
    }
  }

  static std::vector<Goal> split_conj(Goal g) {
    if (g.kind == Goal::Kind::Conj) return std::move(g.subgoals);
    std::vector<Goal> v;
    v.push_back(std::move(g));
    return v;
  }

  Goal parse_hyp() {
    const Token& start = peek();
    Goal lhs = parse_disj();
    if (!is_punct("=>")) return lhs;
    next();
    std::vector<Rule> premise = to_premise(std::move(lhs), start);
    Goal rhs = parse_hyp();
    return Goal::hyp(std::move(premise), std::move(rhs));
  }

  Goal parse_disj() {
    Goal first = parse_conj();
    if (!is_punct(";")) return first;
    std::vector<Goal> items;
    items.push_back(std::move(first));
    while (is_punct(";")) {
      next();
      items.push_back(parse_conj());
    }
    return Goal::disj(std::move(items));
  }

  Goal parse_conj() {
    Goal first = parse_unary();
    if (!is_punct(",") && !is_punct("/\\")) return first;
    std::vector<Goal> items;
    items.push_back(std::move(first));
    while (is_punct(",") || is_punct("/\\")) {
      next();
      items.push_back(parse_unary());
    }
    return Goal::conj(std::move(items));
  }

  Goal parse_unary() {
    if (is_ident("not")) {
      const Token& at = next();
      if (is_ident("not")) fail("nested negation is not allowed", at);
      Goal inner = parse_unary();
      if (inner.kind == Goal::Kind::Neg) fail("nested negation is not allowed", at);
      return Goal::neg(std::move(inner));
    }
    return parse_primary();
  }

  static bool is_cmp(const Token& t) {
    if (t.kind != Token::Kind::Punct) return false;
    return t.text == "=" || t.text == "\\=" || t.text == "<" || t.text == ">" ||
           t.text == "=<" || t.text == ">=";
  }

  static CmpOp cmp_of(const std::string& s) {
    if (s == "=") return CmpOp::Eq;
    if (s == "\\=") return CmpOp::Ne;
    if (s == "<") return CmpOp::Lt;
    if (s == ">") return CmpOp::Gt;
    if (s == "=<") return CmpOp::Le;
    return CmpOp::Ge;
  }

  Goal parse_primary() {
    const Token& t = peek();
    if (is_punct("(")) {
      std::size_t saved = pos_;
      std::size_t saved_pending = pending_rules_.size();
      try {
        next();
        Goal inner = parse_hyp();
        if (is_punct(":-")) {
          if (inner.kind != Goal::Kind::Atom)
            fail("rule head must be an atom", peek());
          next();
          Rule r;
          r.head = inner.atom;
          r.body = split_conj(parse_hyp());
          expect(")");
          pending_rules_.push_back(std::move(r));
          Atom marker;
          marker.name = kRuleMarker;
          marker.args.push_back(Term::integer(
              static_cast<std::int64_t>(pending_rules_.size() - 1)));
          return Goal::of(std::move(marker));
        }
        expect(")");
        if (!is_cmp(peek()) && !is_arith_punct(peek())) return inner;
      } catch (const ParseError&) {
        // Retry below as a parenthesized arithmetic expression.
      }
      pos_ = saved;
      pending_rules_.resize(saved_pending);
      return parse_comparison();
    }
    if (is_punct("-") && (peek(1).kind == Token::Kind::Ident ||
                          peek(1).kind == Token::Kind::Quoted)) {
      next();
      Atom a = parse_atom();
      a.restricting = true;
      return Goal::of(std::move(a));
    }
    if ((t.kind == Token::Kind::Ident || t.kind == Token::Kind::Quoted) &&
        is_punct("(", 1)) {
      Atom a = parse_atom();
      if (is_cmp(peek()) || is_arith_punct(peek()))
        fail("atoms cannot be used as arithmetic operands", peek());
      return Goal::of(std::move(a));
    }
    if ((t.kind == Token::Kind::Ident || t.kind == Token::Kind::Quoted) &&
        !is_cmp(peek(1)) && !is_arith_punct(peek(1)) &&
        !(peek(1).kind == Token::Kind::Ident && peek(1).text == "mod")) {
      Atom a = parse_atom();
      return Goal::of(std::move(a));
    }
    return parse_comparison();
  }

  static bool is_arith_punct(const Token& t) {
    if (t.kind == Token::Kind::Ident) return t.text == "mod";
    if (t.kind != Token::Kind::Punct) return false;
    return t.text == "+" || t.text == "-" || t.text == "*" || t.text == "/";
  }

  Goal parse_comparison() {
    const Token& start = peek();
    Term lhs = parse_expr();
    if (!is_cmp(peek())) {
      fail("expected a goal", start);
    }
    CmpOp op = cmp_of(next().text);
    Term rhs = parse_expr();
    return Goal::builtin(op, std::move(lhs), std::move(rhs));
  }

  Term parse_expr() {
    Term lhs = parse_mul();
    while (is_punct("+") || is_punct("-")) {
      ArithOp op = next().text == "+" ? ArithOp::Add : ArithOp::Sub;
      lhs = Term::arith(op, std::move(lhs), parse_mul());
    }
    return lhs;
  }

  Term parse_mul() {
    Term lhs = parse_operand();
    while (is_punct("*") || is_punct("/") || is_ident("mod")) {
      const Token& t = next();
      ArithOp op = t.text == "*" ? ArithOp::Mul
                   : t.text == "/" ? ArithOp::Div
                                   : ArithOp::Mod;
      lhs = Term::arith(op, std::move(lhs), parse_operand());
    }
    return lhs;
  }

  Term parse_operand() {
    if (is_punct("(")) {
      next();
      Term t = parse_expr();
      expect(")");
      return t;
    }
    if (is_punct("-") && peek(1).kind == Token::Kind::Int) {
      next();
      return Term::integer(-next().value);
    }
    const Token& t = peek();
    if (t.kind == Token::Kind::Ident && is_punct("(", 1))
      fail("function symbols are not allowed", t);
    return parse_simple_term();
  }

  Term parse_simple_term() {
    const Token& t = next();
    switch (t.kind) {
      case Token::Kind::Var:
        if (t.text == "_") return Term::var("_" + std::to_string(++anon_counter_));
        return Term::var(t.text);
      case Token::Kind::Int: return Term::integer(t.value);
      case Token::Kind::Ident:
      case Token::Kind::Quoted: return Term::sym(t.text);
      case Token::Kind::Punct:
        if (t.text == "-" && peek().kind == Token::Kind::Int)
          return Term::integer(-next().value);
        [[fallthrough]];
      default: fail("expected a term", t);
    }
  }

  Atom parse_atom() {
    const Token& name = next();
    if (name.kind != Token::Kind::Ident && name.kind != Token::Kind::Quoted)
      fail("expected a predicate name", name);
    if (name.kind == Token::Kind::Ident && (name.text == "not" || name.text == "mod"))
      fail("reserved word '" + name.text + "'", name);
    Atom a;
    a.name = name.text;
    if (!is_punct("(")) return a;
    next();
    if (is_punct(")")) fail("zero-arity predicates are written without parentheses", peek());
    while (true) {
      const Token& at = peek();
      Term arg = parse_simple_term();
      if (is_arith_punct(peek()))
        fail("arithmetic expressions are not allowed as predicate arguments", at);
      a.args.push_back(std::move(arg));
      if (is_punct(",")) {
        next();
        continue;
      }
      expect(")");
      break;
    }
    return a;
  }

  static void rescope(Term& t, int from, int to) {
    if (t.is_var() && t.scope == from) t.scope = to;
    for (auto& o : t.operands) rescope(o, from, to);
  }
  static void rescope(Atom& a, int from, int to) {
    for (auto& t : a.args) rescope(t, from, to);
  }
  static void rescope(Goal& g, int from, int to) {
    rescope(g.atom, from, to);
    rescope(g.lhs, from, to);
    rescope(g.rhs, from, to);
    for (auto& s : g.subgoals) rescope(s, from, to);
    for (auto& r : g.premise) rescope(r, from, to);
  }
  static void rescope(Rule& r, int from, int to) {
    if (r.head) rescope(*r.head, from, to);
    for (auto& g : r.body) rescope(g, from, to);
  }

  std::vector<Rule> to_premise(Goal lhs, const Token& at) {
    std::vector<Goal> items = split_conj(std::move(lhs));
    std::vector<Rule> rules;
    for (auto& item : items) {
      if (item.kind != Goal::Kind::Atom)
        fail("a premise must be a conjunction of rules", at);
      Rule r;
      if (item.atom.name == kRuleMarker) {
        r = std::move(pending_rules_[static_cast<std::size_t>(item.atom.args[0].value)]);
      } else {
        r.head = std::move(item.atom);
      }
      rescope(r, 0, ++scope_counter_);
      rules.push_back(std::move(r));
    }
    return rules;
  }

  void check_no_rule_markers(const Goal& g) const {
    if (g.kind == Goal::Kind::Atom && g.atom.name == kRuleMarker)
      fail("a rule may only appear as a premise of '=>'", peek());
    for (const auto& s : g.subgoals) check_no_rule_markers(s);
    for (const auto& r : g.premise) check_no_rule_markers(r);
  }
  void check_no_rule_markers(const Rule& r) const {
    for (const auto& g : r.body) check_no_rule_markers(g);
  }
};

inline void reject_reserved_head(const Rule& r, const Token& at) {
  if (r.head && r.head->name == "answer")
    throw ParseError("'answer' is a reserved predicate name", at.line, at.column);
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace detail

/// Parses one REPL line. The trailing period is optional.
inline Input parse_input(std::string_view line) {
  std::string text = detail::trim(line);
  Input in;
  if (text.size() > 1 && text[0] == '/' && std::isalpha(static_cast<unsigned char>(text[1]))) {
    std::size_t j = 1;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
    std::string cmd = text.substr(1, j - 1);
    std::string rest = detail::trim(std::string_view(text).substr(j));
    if (cmd == "assert" || cmd == "retract") {
      detail::Parser p(rest);
      Token first = p.peek();
      in.rule = p.parse_rule_or_constraint(false);
      if (!p.at_end()) {
        const Token& t = p.peek();
        throw ParseError("unexpected '" + t.text + "'", t.line, t.column);
      }
      if (in.rule.is_constraint())
        throw ParseError("constraints are added with ':-'", first.line, first.column);
      detail::reject_reserved_head(in.rule, first);
      in.rule.source_text = rest;
      in.kind = cmd == "assert" ? Input::Kind::Assertion : Input::Kind::Retraction;
      return in;
    }
    in.kind = Input::Kind::Command;
    in.command = cmd;
    std::string word;
    for (char c : rest) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!word.empty()) in.args.push_back(word);
        word.clear();
      } else {
        word += c;
      }
    }
    if (!word.empty()) in.args.push_back(word);
    return in;
  }
  detail::Parser p(text);
  if (p.at_end()) throw ParseError("empty input", 1, 1);
  if (p.peek().kind == Token::Kind::Punct && p.peek().text == ":-") {
    in.kind = Input::Kind::Constraint;
    in.rule = p.parse_rule_or_constraint(false);
    in.rule.source_text = text;
  } else {
    in.kind = Input::Kind::Query;
    in.goal = p.parse_query(false);
  }
  if (!p.at_end()) {
    const Token& t = p.peek();
    throw ParseError("unexpected '" + t.text + "'", t.line, t.column);
  }
  return in;
}

/// Parses a program: period-terminated rules, facts and constraints.
inline std::vector<Rule> parse_program(std::string_view text) {
  detail::Parser p(text);
  std::vector<Rule> rules;
  while (!p.at_end()) {
    Token first = p.peek();
    Rule r = p.parse_rule_or_constraint(true);
    detail::reject_reserved_head(r, first);
    r.source_text = pretty(r);
    rules.push_back(std::move(r));
  }
  return rules;
}

}  // namespace hdl
