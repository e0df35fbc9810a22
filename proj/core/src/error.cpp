#include "comptll/error.hpp"

namespace comptll {

FormatError::FormatError(Kind kind, std::size_t offset, const std::string& what)
    : DomainError(std::string(to_string(kind)) + " at byte " +
                  std::to_string(offset) + ": " + what),
      kind_(kind),
      offset_(offset) {}

const char* to_string(FormatError::Kind kind) {
  switch (kind) {
    case FormatError::Kind::kTruncated: return "truncated stream";
    case FormatError::Kind::kInvalidMarker: return "invalid marker";
    case FormatError::Kind::kBadHuffmanCode: return "bad huffman code";
    case FormatError::Kind::kUnsupported: return "unsupported feature";
    case FormatError::Kind::kMalformed: return "malformed segment";
    case FormatError::Kind::kBadMagic: return "bad magic";
    case FormatError::Kind::kSizeMismatch: return "size mismatch";
  }
  return "format error";
}

}  // namespace comptll
