#ifndef BARKSCOPE_ERROR_HPP
#define BARKSCOPE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace barkscope {

// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data (manifest, annotation file, contract violation by caller).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what) {}
  ValidationError(const std::string& what, std::vector<std::string> diagnostics)
      : Error(what), diagnostics_(std::move(diagnostics)) {}

  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace barkscope

#endif  // BARKSCOPE_ERROR_HPP
