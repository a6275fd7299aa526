#pragma once

#include <stdexcept>
#include <string>

namespace afgan {

// Failure classes. The C API maps each onto a stable error code.
enum class ErrorKind {
  shape,
  contract,
  config,
  ingest,
  io,
  numerical,
  format,
  adapter,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define AFGAN_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

AFGAN_DEFINE_ERROR(ShapeError, shape)
AFGAN_DEFINE_ERROR(ContractError, contract)
AFGAN_DEFINE_ERROR(ConfigError, config)
AFGAN_DEFINE_ERROR(IngestError, ingest)
AFGAN_DEFINE_ERROR(IoError, io)
AFGAN_DEFINE_ERROR(NumericalError, numerical)
AFGAN_DEFINE_ERROR(FormatError, format)
AFGAN_DEFINE_ERROR(AdapterError, adapter)

#undef AFGAN_DEFINE_ERROR

}  // namespace afgan
