#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace hgnn {

/// Malformed input file. what() names the file and, when known, the line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& msg)
      : std::runtime_error(format(file, line, msg)), file_(std::move(file)), line_(line) {}

  [[nodiscard]] const std::string& file() const noexcept { return file_; }
  /// 1-based; 0 when the error is not tied to a line.
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& file, std::size_t line, const std::string& msg) {
    if (line == 0) return file + ": " + msg;
    return file + ":" + std::to_string(line) + ": " + msg;
  }

  std::string file_;
  std::size_t line_;
};

}  // namespace hgnn
