#pragma once

#include <stdexcept>
#include <string>

namespace umi {

// Every failure raised by the library derives from Error so callers can
// catch one type at the stage boundary and tag it with context.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define UMI_DEFINE_ERROR(Name)                                            \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& what) : Error(#Name, what) {}   \
    }

// data
UMI_DEFINE_ERROR(HoleInPanel);
UMI_DEFINE_ERROR(BadPrice);
UMI_DEFINE_ERROR(DuplicateRow);
UMI_DEFINE_ERROR(TooShort);
UMI_DEFINE_ERROR(BadSpec);
UMI_DEFINE_ERROR(ParseError);

// diffcore
UMI_DEFINE_ERROR(ShapeError);
UMI_DEFINE_ERROR(DomainError);
UMI_DEFINE_ERROR(NotScalar);
UMI_DEFINE_ERROR(NumericalFailure);

// factor models and forecaster
UMI_DEFINE_ERROR(TooFewStocks);
UMI_DEFINE_ERROR(TooEarly);
UMI_DEFINE_ERROR(EmptySubset);
UMI_DEFINE_ERROR(NoNegatives);
UMI_DEFINE_ERROR(AlignmentError);

// evaluation and cli
UMI_DEFINE_ERROR(UniverseTooSmall);
UMI_DEFINE_ERROR(MissingArtifact);
UMI_DEFINE_ERROR(ConfigError);
UMI_DEFINE_ERROR(IoError);

#undef UMI_DEFINE_ERROR

}  // namespace umi
