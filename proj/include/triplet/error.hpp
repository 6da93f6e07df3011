#pragma once

#include <stdexcept>
#include <string>

namespace triplet {

// Base for every error raised by the library. Subclasses map one-to-one onto
// the failure categories callers are expected to distinguish.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Steady state is not unique (null space of the rate matrix has dim > 1).
class AmbiguityError : public Error {
 public:
  using Error::Error;
};

class UnsupportedSequence : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class Underdetermined : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

class NonMonotoneBracket : public Error {
 public:
  using Error::Error;
};

class NoModulation : public Error {
 public:
  using Error::Error;
};

}  // namespace triplet
