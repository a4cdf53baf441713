#pragma once

#include <stdexcept>
#include <string>

namespace xrec {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data or configuration; maps to exit code 2 at the CLI.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed input file; carries the 1-based line number.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& file, int line, const std::string& what)
        : ValidationError(file + ":" + std::to_string(line) + ": " + what),
          file_(file),
          line_(line) {}

    const std::string& file() const { return file_; }
    int line() const { return line_; }

private:
    std::string file_;
    int line_;
};

}  // namespace xrec
