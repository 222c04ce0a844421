#pragma once

#include <stdexcept>

namespace vecspace {

// A file could not be opened, created or written.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input bytes or JSON do not follow the expected format.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace vecspace
