#pragma once

#include <stdexcept>
#include <string>

namespace sgg {

/// Malformed or inconsistent on-disk data. `plane()` names the offending part
/// (e.g. "mask", "embeddings", "image", "checkpoint").
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string plane, const std::string& what)
      : std::runtime_error(plane + ": " + what), plane_(std::move(plane)) {}
  const std::string& plane() const { return plane_; }

 private:
  std::string plane_;
};

/// An operation was called on data that does not meet its documented precondition.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace sgg
