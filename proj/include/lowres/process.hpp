#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lowres/corpus.hpp"
#include "lowres/error.hpp"

namespace lowres {

struct CommandResult {
  int exit_code = 0;
  std::string out;
  std::string err;
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') q += "'\\''";
    else q += c;
  }
  return q + "'";
}

/// Scratch directory removed on destruction.
class ScratchDir {
 public:
  ScratchDir() {
    std::string templ = (std::filesystem::temp_directory_path() / "lowres-XXXXXX").string();
    if (!::mkdtemp(templ.data())) throw Error("cannot create a temporary directory");
    path_ = templ;
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace detail

/// Runs `command` through /bin/sh with `input` on standard input and captures
/// both output streams.
inline CommandResult run_command(const std::string& command, const std::string& input) {
  detail::ScratchDir dir;
  const auto in = dir.path() / "stdin";
  const auto out = dir.path() / "stdout";
  const auto err = dir.path() / "stderr";
  {
    std::ofstream f(in, std::ios::binary);
    f.write(input.data(), static_cast<std::streamsize>(input.size()));
    if (!f) throw Error("cannot write command input");
  }
  const std::string line = "( " + command + " ) < " + detail::shell_quote(in.string()) + " > " +
                           detail::shell_quote(out.string()) + " 2> " + detail::shell_quote(err.string());
  const int status = std::system(line.c_str());
  CommandResult r;
  if (status == -1) throw Error("cannot launch shell for command: " + command);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
  r.out = std::filesystem::exists(out) ? detail::read_file(out) : std::string();
  r.err = std::filesystem::exists(err) ? detail::read_file(err) : std::string();
  return r;
}

/// An external line-oriented command: N lines in, exactly N lines out.
struct LineCommand {
  std::string command;
  // Lines per invocation; 0 sends everything at once.
  std::size_t batch_size = 0;
  // Concurrent invocations. Batches are reassembled by index.
  unsigned workers = 1;
};

inline std::vector<std::string> run_line_command(const LineCommand& cmd, const std::vector<std::string>& lines,
                                                 std::string_view what = "command") {
  if (lines.empty()) return {};
  if (cmd.command.empty()) throw Error(std::string(what) + ": no command given");
  const std::size_t batch = cmd.batch_size == 0 ? lines.size() : cmd.batch_size;
  const std::size_t nbatches = (lines.size() + batch - 1) / batch;
  std::vector<std::vector<std::string>> outputs(nbatches);
  std::vector<std::string> errors(nbatches);
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (std::size_t b = next++; b < nbatches; b = next++) {
      const std::size_t lo = b * batch;
      const std::size_t hi = std::min(lines.size(), lo + batch);
      std::string input;
      for (std::size_t i = lo; i < hi; ++i) {
        detail::check_no_break(lines[i], i);
        input += lines[i];
        input += '\n';
      }
      CommandResult r;
      try {
        r = run_command(cmd.command, input);
      } catch (const Error& e) {
        errors[b] = e.what();
        continue;
      }
      if (r.exit_code != 0) {
        errors[b] = std::string(what) + " exited with status " + std::to_string(r.exit_code) +
                    (r.err.empty() ? std::string() : ": " + r.err);
        while (!errors[b].empty() && errors[b].back() == '\n') errors[b].pop_back();
        continue;
      }
      auto got = detail::split_lines(r.out);
      if (got.size() != hi - lo) {
        errors[b] = std::string(what) + " line count mismatch: sent " + std::to_string(hi - lo) +
                    " lines, received " + std::to_string(got.size());
        continue;
      }
      outputs[b] = std::move(got);
    }
  };
  const unsigned n = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, cmd.workers), nbatches));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error(e);
  std::vector<std::string> result;
  result.reserve(lines.size());
  for (auto& o : outputs) result.insert(result.end(), std::make_move_iterator(o.begin()), std::make_move_iterator(o.end()));
  return result;
}

}  // namespace lowres
