#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace granular {

/// Unreadable input, invalid configuration, or a record that violates the data model.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical or model-level failure: non-convergence, degenerate samples,
/// parameters outside their admissible range, unfitted components.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-fatal notes collected while fitting or simulating.
struct Diagnostics {
    std::vector<std::string> warnings;

    void warn(std::string message) { warnings.push_back(std::move(message)); }
};

inline void warn(Diagnostics* diag, std::string message)
{
    if (diag != nullptr) {
        diag->warn(std::move(message));
    }
}

} // namespace granular
