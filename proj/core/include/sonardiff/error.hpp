#pragma once

#include <stdexcept>
#include <string>

namespace sonardiff {

// Precondition or configuration violated by the caller.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical trajectory produced NaN/Inf. `step` is the diffusion step or
// training step at which it was detected.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

// Training loss blew up past the divergence bound.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// TP + FP == 0: precision is 0/0, which is not the same thing as 0.
class UndefinedPrecision : public std::domain_error {
 public:
  UndefinedPrecision() : std::domain_error("undefined precision: no predictions") {}
};

// Constant image: the noise power is zero.
class InfiniteSnr : public std::domain_error {
 public:
  InfiniteSnr() : std::domain_error("infinite SNR: zero pixel standard deviation") {}
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sonardiff
