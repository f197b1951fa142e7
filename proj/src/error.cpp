#include "ctdgm/error.hpp"

namespace ctdgm {

ParseError::ParseError(std::size_t line, const std::string& what)
    : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

RejectedRecord::RejectedRecord(std::size_t line, const std::string& what)
    : DataError("line " + std::to_string(line) + ": rejected record: " + what),
      line_(line) {}

}  // namespace ctdgm
