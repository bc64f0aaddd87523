#pragma once

#include <stdexcept>
#include <string>

namespace xote {

// Base for every error raised by the library. `kind()` is the machine-readable
// category the CLI reports.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Shape mismatches, bad hyperparameters, bad flags.
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config", w) {}
};

// Non-finite values, non-convergence.
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error("numeric", w) {}
};

// Malformed files. `line` is 1-based, 0 when not applicable.
struct FormatError : Error {
  FormatError(const std::string& w, std::size_t line = 0)
      : Error("format", line ? w + " (line " + std::to_string(line) + ")" : w),
        line(line) {}
  std::size_t line;
};

// Well-formed input whose content is inconsistent (offsets out of range, ...).
struct DataError : Error {
  explicit DataError(const std::string& w) : Error("data", w) {}
};

// A target span that does not fall on token boundaries.
struct AlignmentError : Error {
  explicit AlignmentError(const std::string& w) : Error("alignment", w) {}
};

// Caller broke a precondition (empty sentence, mismatched ids, ...).
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error("contract", w) {}
};

}  // namespace xote
