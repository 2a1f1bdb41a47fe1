#pragma once

#include <stdexcept>
#include <string>

namespace blend {

class BlendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad argument or parameter combination supplied by the caller.
class ValidationError : public BlendError {
public:
    using BlendError::BlendError;
};

class ShapeMismatchError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class NotFoundError : public BlendError {
public:
    using BlendError::BlendError;
};

// Export requested for a batch that has no submitted rankings yet.
class EmptyDatasetError : public NotFoundError {
public:
    using NotFoundError::NotFoundError;
};

// Request that conflicts with state already recorded (e.g. a second ranking for one pair).
class ConflictError : public BlendError {
public:
    using BlendError::BlendError;
};

// A latent or embedding picked up NaN/Inf. step is the 1-based iteration, 0 outside the loop.
class NonFiniteError : public BlendError {
public:
    NonFiniteError(const std::string& what, int step)
        : BlendError(what + (step > 0 ? " (at step " + std::to_string(step) + ")" : std::string{})),
          m_step(step) {}

    int step() const noexcept { return m_step; }

private:
    int m_step;
};

}  // namespace blend
