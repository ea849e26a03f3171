#pragma once

// REPL state and transcript rendering. The engine reports structured
// events; every user-visible message is produced here.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hypodl/engine.hpp"
#include "hypodl/parser.hpp"

namespace hdl {

struct SessionState {
  static constexpr std::string_view prompt = "DES> ";

  Database db;
  bool verbose = false;
  bool system = false;  // show `$` auxiliary predicates in dumps
  bool quit = false;
};

class FileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "{ a, b }" with duplicates repeated, or "{ }".
inline std::string format_answers(const std::vector<Answer>& bag) {
  std::string s = "{";
  bool first = true;
  for (const Answer& a : bag)
    for (int i = 0; i < a.multiplicity; ++i) {
      s += first ? " " : ", ";
      s += pretty(a.atom);
      first = false;
    }
  return s + " }";
}

namespace detail {

inline std::string atom_list(const std::vector<Atom>& atoms) {
  std::string s = "[";
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (i) s += ",";
    s += pretty(atoms[i]);
  }
  return s + "]";
}

inline void render_violation(std::ostream& out, const Rule& constraint,
                             const std::vector<Atom>& offending) {
  out << "Error: Integrity constraint violation.\n" << pretty(constraint) << "\n";
  // A nullary constraint has no values to list.
  if (!offending.empty() && offending.front().arity() > 0)
    out << "Offending values in database: " << atom_list(offending) << "\n";
}

inline void render_events(std::ostream& out, const SessionState& st,
                          const std::vector<Event>& events) {
  for (const Event& e : events) {
    switch (e.kind) {
      case Event::Kind::Rejection:
        render_violation(out, e.rejection.constraint, e.rejection.offending);
        out << "Info: The following rule cannot be assumed: " << pretty(e.rejection.rejected_rule)
            << "\n";
        break;
      case Event::Kind::ContextOpened:
        if (!st.verbose) break;
        out << "Info: Building hypothetical computation context " << e.ctx.to_string()
            << " for:\n";
        for (const Rule& r : e.premise) out << pretty(r) << "\n";
        out << "Info: PDG:\n" << format_pdg(e.analysis.pdg, st.system) << "\n";
        out << "Info: Strata:\n" << format_strata(e.analysis.strata, st.system) << "\n";
        break;
      case Event::Kind::Undefined:
        out << "Warning: Non-stratifiable program in context " << e.ctx.to_string()
            << ". Some answers may be undefined.\n";
        break;
    }
  }
}

inline bool parse_switch(const std::vector<std::string>& args, bool& flag) {
  if (args.size() != 1) return false;
  if (args[0] == "on") flag = true;
  else if (args[0] == "off") flag = false;
  else return false;
  return true;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Loads program text into the root database. Aborts on the first parse
/// error; rules rejected by constraints or safety are reported and skipped.
inline std::string consult_text(SessionState& st, std::string_view text) {
  std::ostringstream out;
  const std::vector<Rule> rules = parse_program(text);
  int loaded = 0;
  for (const Rule& r : rules) {
    try {
      if (r.is_constraint()) {
        if (auto v = add_user_constraint(st.db, r)) {
          detail::render_violation(out, v->constraint, v->offending);
          continue;
        }
      } else {
        UpdateResult res = assert_user_rule(st.db, r);
        if (!res.rejections.empty()) {
          for (const auto& rej : res.rejections)
            detail::render_violation(out, rej.constraint, rej.offending);
          out << "Info: The following rule cannot be asserted: " << pretty(r) << "\n";
          continue;
        }
      }
      ++loaded;
    } catch (const std::runtime_error& e) {
      out << "Error: " << e.what() << "\n";
    }
  }
  out << "Info: " << loaded << (loaded == 1 ? " rule" : " rules") << " consulted.\n";
  return out.str();
}

/// Processes one REPL line and returns its output.
inline std::string repl_step(SessionState& st, std::string_view line) {
  std::ostringstream out;
  Input in;
  try {
    in = parse_input(line);
  } catch (const ParseError& e) {
    return "Error: " + e.describe() + "\n";
  }
  try {
    switch (in.kind) {
      case Input::Kind::Query: {
        QueryResult res = solve_query(st.db, in.goal);
        if (res.view) out << "Info: Processing:\n  " << pretty(*res.view) << "\n";
        detail::render_events(out, st, res.events);
        std::size_t n = 0;
        for (const Answer& a : res.answers) n += static_cast<std::size_t>(a.multiplicity);
        out << format_answers(res.answers) << "\n";
        out << "Info: " << n << (n == 1 ? " tuple" : " tuples") << " computed.\n";
        break;
      }
      case Input::Kind::Assertion: {
        UpdateResult res = assert_user_rule(st.db, in.rule);
        if (!res.rejections.empty()) {
          for (const auto& rej : res.rejections)
            detail::render_violation(out, rej.constraint, rej.offending);
          out << "Info: The following rule cannot be asserted: " << pretty(in.rule) << "\n";
        }
        break;
      }
      case Input::Kind::Retraction:
        if (st.db.retract_rule(in.rule) == 0) out << "Warning: Nothing retracted.\n";
        break;
      case Input::Kind::Constraint:
        if (auto v = add_user_constraint(st.db, in.rule)) {
          detail::render_violation(out, v->constraint, v->offending);
          out << "Info: The constraint has not been asserted.\n";
        }
        break;
      case Input::Kind::Command: {
        const std::string& c = in.command;
        if (c == "pdg" && in.args.empty()) {
          out << format_pdg(st.db.current_analysis().pdg, st.system) << "\n";
        } else if (c == "strata" && in.args.empty()) {
          out << format_strata(st.db.current_analysis().strata, st.system) << "\n";
        } else if (c == "verbose" && detail::parse_switch(in.args, st.verbose)) {
          out << "Info: Verbose output is " << (st.verbose ? "on" : "off") << ".\n";
        } else if (c == "system" && detail::parse_switch(in.args, st.system)) {
          out << "Info: System predicates are " << (st.system ? "shown" : "hidden") << ".\n";
        } else if (c == "consult" && in.args.size() == 1) {
          out << consult_text(st, detail::read_file(in.args[0]));
        } else if (c == "quit" || c == "q" || c == "exit") {
          st.quit = true;
        } else {
          out << "Error: Unknown command or wrong arguments: /" << c << "\n";
        }
        break;
      }
    }
  } catch (const ParseError& e) {
    out << "Error: " << e.describe() << "\n";
  } catch (const std::runtime_error& e) {
    out << "Error: " << e.what() << "\n";
  }
  return out.str();
}

/// Replays session text: each non-blank line not starting with `#` is
/// echoed after the prompt and processed.
inline std::string replay(SessionState& st, std::string_view text) {
  std::string transcript;
  std::istringstream in{std::string(text)};
  std::string line;
  while (!st.quit && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    transcript += std::string(SessionState::prompt) + line.substr(first) + "\n";
    transcript += repl_step(st, line);
  }
  return transcript;
}

/// Runs a file: `.session` files are replayed, anything else is consulted.
inline std::string run_file(SessionState& st, const std::string& path) {
  const std::string text = detail::read_file(path);
  const bool session = path.size() >= 8 && path.compare(path.size() - 8, 8, ".session") == 0;
  if (session) return replay(st, text);
  try {
    return consult_text(st, text);
  } catch (const ParseError& e) {
    throw FileError(path + ": " + e.describe());
  }
}

}  // namespace hdl
