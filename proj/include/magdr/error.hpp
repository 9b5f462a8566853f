#pragma once

#include <stdexcept>
#include <string>

namespace magdr {

// Bad input, bad configuration or a violated precondition. The CLI maps this
// to exit code 1; anything else that escapes is a runtime failure (exit 2).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class RuntimeError : public std::runtime_error {
public:
    explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace magdr
