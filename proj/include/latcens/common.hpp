#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace latcens {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Model-syntax problems; carries the 1-based source line.
class ParseError : public Error {
public:
  ParseError(const std::string& msg, int line)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const { return line_; }

private:
  int line_ = 0;
};

// Malformed or inconsistent input data (CSV, status columns, dimensions).
class DataError : public Error {
public:
  using Error::Error;
};

// Numerical failure: non-PD covariance, near-singular system, overflow.
class NumericalError : public Error {
public:
  using Error::Error;
};

// Observation whose censored-block probability underflows to zero.
class DegeneratePatternError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

// SplitMix64 step; used to derive independent per-row RNG seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x51ed2701));
}

}  // namespace latcens
