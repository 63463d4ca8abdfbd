#pragma once

#include <stdexcept>
#include <string>

namespace voxelmem {

// Inputs violate a structural contract (dimension or grid-geometry mismatch).
struct StructuralError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Loaders/parsers: missing, malformed or version-incompatible data.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An internal invariant no longer holds (e.g. a live image id with no stored frame).
struct InternalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// mLLM client reply is outside its contract (index out of range, unparseable text).
struct MalformedAnswerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// mLLM transport failed after the configured retries.
struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace voxelmem
