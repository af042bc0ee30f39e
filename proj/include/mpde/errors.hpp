#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mpde {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad shapes, bad configuration values, unknown keys.
struct config_error : error {
    using error::error;
};

// Non-finite values produced by numeric code.
struct numeric_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

// Input outside the mathematical domain of an operation
// (e.g. a point that is not on the boundary).
struct domain_error : error {
    using error::error;
};

// Text that does not match the PDE expression grammar. Carries the byte
// offset of the offending token.
struct parse_error : config_error {
    parse_error(std::size_t offset, const std::string& what)
        : config_error("parse error at byte " + std::to_string(offset) + ": " + what),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

// Checkpoint file problems, each a distinct kind.
struct checkpoint_error : error {
    using error::error;
};

struct checkpoint_version_error : checkpoint_error {
    using checkpoint_error::checkpoint_error;
};

struct checkpoint_shape_error : checkpoint_error {
    using checkpoint_error::checkpoint_error;
};

struct checkpoint_truncated_error : checkpoint_error {
    using checkpoint_error::checkpoint_error;
};

}  // namespace mpde
