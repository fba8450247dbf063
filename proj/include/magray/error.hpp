#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace magray {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, std::vector<std::string> expected, const std::string& found)
      : Error(format(offset, expected, found)), offset_(offset), expected_(std::move(expected)) {}

  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  static std::string format(std::size_t offset, const std::vector<std::string>& expected,
                            const std::string& found) {
    std::string msg = "syntax error at byte " + std::to_string(offset) + ": found " + found + ", expected one of {";
    for (std::size_t i = 0; i < expected.size(); ++i) msg += (i ? ", " : "") + expected[i];
    return msg + "}";
  }
  std::size_t offset_;
  std::vector<std::string> expected_;
};

class UnknownIdentifier : public Error {
 public:
  UnknownIdentifier(std::string name, std::size_t offset)
      : Error("unknown identifier '" + name + "' at byte " + std::to_string(offset)),
        name_(std::move(name)), offset_(offset) {}
  const std::string& name() const { return name_; }
  std::size_t offset() const { return offset_; }

 private:
  std::string name_;
  std::size_t offset_;
};

class SkewHermitianViolation : public Error {
 public:
  SkewHermitianViolation(std::string entry, double x, double y, double norm)
      : Error("matrix field " + entry + " is not skew-Hermitian at (" + std::to_string(x) + ", " +
              std::to_string(y) + "): |M + M*| = " + std::to_string(norm)),
        entry_(std::move(entry)), x_(x), y_(y), norm_(norm) {}
  const std::string& entry() const { return entry_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double norm() const { return norm_; }

 private:
  std::string entry_;
  double x_, y_, norm_;
};

class RankMismatch : public Error {
 public:
  using Error::Error;
};

class TrappedRay : public Error {
 public:
  TrappedRay(double x, double y, double theta, double tmax)
      : Error("ray from (" + std::to_string(x) + ", " + std::to_string(y) + ", " + std::to_string(theta) +
              ") did not exit within T_max = " + std::to_string(tmax)) {}
};

class BandLimitExceeded : public Error {
 public:
  using Error::Error;
};

class SolverStalled : public Error {
 public:
  using Error::Error;
};

class ResolutionTooCoarse : public Error {
 public:
  using Error::Error;
};

class FrequencyUnresolvable : public Error {
 public:
  using Error::Error;
};

class InvalidScene : public Error {
 public:
  using Error::Error;
};

}  // namespace magray
