#pragma once

#include <stdexcept>
#include <string>

namespace smoe {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class ContractError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class RoutingError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class LimitError : public Error { using Error::Error; };
class MalformedSequenceError : public Error { using Error::Error; };
class TooShortError : public Error { using Error::Error; };
class InputError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

}  // namespace smoe
