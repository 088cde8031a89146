#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tcmf {

/// A particle path produced NaN/inf. Carries the first bad (particle, step).
class explosion_error : public std::runtime_error {
public:
    explosion_error(std::size_t particle, std::size_t step)
        : std::runtime_error("path explosion at particle " +
                             std::to_string(particle) + ", step " +
                             std::to_string(step)),
          particle_(particle),
          step_(step) {}

    std::size_t particle() const { return particle_; }
    std::size_t step() const { return step_; }

private:
    std::size_t particle_;
    std::size_t step_;
};

/// Least-squares system stayed singular after the ridge fallback.
class regression_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scenario file failed schema validation.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tcmf
