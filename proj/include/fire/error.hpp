#ifndef FIRE_ERROR_HPP
#define FIRE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace fire {

/// Broad failure categories; the CLI maps them onto exit codes.
enum class ErrorKind {
  invalid_input,  // malformed files, bad flags, dimension mismatches
  infeasible,     // request cannot be met (e.g. rule budget)
  numeric         // non-finite objective or similar
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error invalid_input(const std::string& what) {
  return Error(ErrorKind::invalid_input, what);
}

inline Error infeasible(const std::string& what) {
  return Error(ErrorKind::infeasible, what);
}

inline Error numeric_failure(const std::string& what) {
  return Error(ErrorKind::numeric, what);
}

}  // namespace fire

#endif  // FIRE_ERROR_HPP
