#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace brsmfg {

inline constexpr const char* kArtifactVersion = "1.0.0";

/// Exit statuses of the runner.
enum ExitCode : int {
  exit_ok = 0,
  exit_config = 2,
  exit_numerical = 3,
  exit_not_converged = 4,
};

/// Flat key=value configuration. Every accepted key has a default; unknown
/// keys are rejected with the key named.
class RunConfig {
 public:
  RunConfig();

  /// Parses `key = value` lines; `#` starts a comment.
  void load_text(const std::string& text, const std::string& origin = "config");
  void load_file(const std::string& path);
  /// Applies one `key=value` override.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool explicitly_set(const std::string& key) const { return explicit_.count(key) != 0; }
  const std::string& raw(const std::string& key) const;

  double number(const std::string& key) const;
  long long integer(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  const std::string& text(const std::string& key) const { return raw(key); }

  const std::map<std::string, std::string>& values() const { return values_; }

  static const std::map<std::string, std::string>& defaults();

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> explicit_;
};

/// Entry point shared by the executable and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace brsmfg
