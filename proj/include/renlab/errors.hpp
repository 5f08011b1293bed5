#pragma once

#include <stdexcept>
#include <string>

namespace renlab {

// Error categories, mapped one-to-one onto CLI exit codes (see tools/).
enum class ErrorCategory {
    config = 2,
    precondition = 3,
    dimension = 4,
    decomposition = 5,
    eigen = 6,
    grid = 7,
    resolution = 8,
    singular = 9,
    degenerate_spectrum = 10,
    out_of_domain = 11,
    empty_regular_set = 12,
    non_transient = 13,
    quadrature = 14,
    cutoff = 15,
    tolerance = 16,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory cat, const std::string& what)
        : std::runtime_error(what), cat_(cat) {}
    ErrorCategory category() const noexcept { return cat_; }

private:
    ErrorCategory cat_;
};

#define RENLAB_DEFINE_ERROR(Name, cat)                                       \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what)                               \
            : Error(ErrorCategory::cat, #Name ": " + what) {}                \
    }

RENLAB_DEFINE_ERROR(ConfigError, config);
RENLAB_DEFINE_ERROR(PreconditionError, precondition);
RENLAB_DEFINE_ERROR(DimensionError, dimension);
RENLAB_DEFINE_ERROR(DecompositionError, decomposition);
RENLAB_DEFINE_ERROR(EigenError, eigen);
RENLAB_DEFINE_ERROR(GridError, grid);
RENLAB_DEFINE_ERROR(ResolutionError, resolution);
RENLAB_DEFINE_ERROR(SingularError, singular);
RENLAB_DEFINE_ERROR(DegenerateSpectrumError, degenerate_spectrum);
RENLAB_DEFINE_ERROR(OutOfDomainError, out_of_domain);
RENLAB_DEFINE_ERROR(EmptyRegularSetError, empty_regular_set);
RENLAB_DEFINE_ERROR(NonTransientError, non_transient);
RENLAB_DEFINE_ERROR(QuadratureError, quadrature);
RENLAB_DEFINE_ERROR(CutoffError, cutoff);
RENLAB_DEFINE_ERROR(ToleranceError, tolerance);

#undef RENLAB_DEFINE_ERROR

} // namespace renlab
