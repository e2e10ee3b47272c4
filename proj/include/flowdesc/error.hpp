#ifndef FLOWDESC_ERROR_HPP_
#define FLOWDESC_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace flowdesc
{

/// Base of all library errors. `ConfigError` maps to CLI exit code 2, everything else to 1.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

class IoError : public Error
{
public:
  using Error::Error;
};

class ShapeError : public Error
{
public:
  using Error::Error;
};

/// Non-invertible transform or a frame whose object left the image.
class DegenerateError : public Error
{
public:
  using Error::Error;
};

class EmptyMaskError : public Error
{
public:
  using Error::Error;
};

/// Sampling could not produce a match set (no valid correspondences, tiny masks).
class SamplingError : public Error
{
public:
  using Error::Error;
};

}  // namespace flowdesc

#endif  // FLOWDESC_ERROR_HPP_
