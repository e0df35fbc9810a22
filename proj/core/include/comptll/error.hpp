#ifndef COMPTLL_ERROR_HPP_
#define COMPTLL_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace comptll {

// Contract violations on domain data: bad shapes, out-of-range parameters,
// malformed containers. The CLI maps these to exit code 1.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failures. The CLI maps these to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bitstream or container that cannot be parsed. Carries the byte offset at
// which the problem was detected.
class FormatError : public DomainError {
 public:
  enum class Kind {
    kTruncated,
    kInvalidMarker,
    kBadHuffmanCode,
    kUnsupported,
    kMalformed,
    kBadMagic,
    kSizeMismatch,
  };

  FormatError(Kind kind, std::size_t offset, const std::string& what);

  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

const char* to_string(FormatError::Kind kind);

}  // namespace comptll

#endif  // COMPTLL_ERROR_HPP_
