#pragma once

#include <string>
#include <vector>

namespace scribe {

struct ProcessResult {
  int exit_code = -1; // -1 when killed by a signal
  int term_signal = 0;
  bool timed_out = false;
  std::string out;
  std::string err;

  bool ok() const { return exit_code == 0 && term_signal == 0 && !timed_out; }
};

// Runs argv[0] from PATH. Throws IoError only when the process cannot be
// started; a missing program shows up as exit code 127.
ProcessResult run_process(const std::vector<std::string> &argv, const std::string &cwd = "",
                          double timeout_seconds = 120.0);

std::string shell_quote(const std::string &s);
std::string join_command(const std::vector<std::string> &argv);

} // namespace scribe
