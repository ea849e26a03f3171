// Command-line front end: consult programs, replay sessions, or run a REPL.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hypodl/session.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hypothetical Datalog interpreter"};
  std::vector<std::string> load;
  std::vector<std::string> run;
  bool verbose = false;
  app.add_option("--load", load, "Consult a program file")->type_name("FILE");
  app.add_option("--run", run, "Replay a .session file")->type_name("FILE");
  app.add_flag("--verbose", verbose, "Start with verbose output on");
  CLI11_PARSE(app, argc, argv);

  hdl::SessionState st;
  st.verbose = verbose;
  try {
    for (const auto& f : load) std::cout << hdl::run_file(st, f);
    for (const auto& f : run) {
      std::string text = hdl::detail::read_file(f);
      std::cout << hdl::replay(st, text);
    }
  } catch (const std::exception& e) {
    std::cerr << "Error: " << e.what() << "\n";
    return 1;
  }
  if (!run.empty()) return 0;

  std::string line;
  while (!st.quit) {
    std::cout << hdl::SessionState::prompt << std::flush;
    if (!std::getline(std::cin, line)) break;
    std::cout << hdl::repl_step(st, line) << std::flush;
  }
  return 0;
}
