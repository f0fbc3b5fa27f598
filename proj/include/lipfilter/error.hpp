#pragma once

#include <stdexcept>
#include <string>

namespace lipfilter {

/// Raised for every contract violation in the library (bad arguments,
/// malformed files, preconditions that do not hold on the data).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lipfilter
