#pragma once

#include <stdexcept>
#include <string>

namespace clipsplat {

/// Coarse classification used by the command line to pick an exit code.
enum class ErrorCategory {
    Input,          // bad paths, files, arguments (exit 2)
    Compatibility,  // models or data that cannot be combined (exit 3)
    Divergence,     // training produced non-finite losses (exit 4)
    Internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

struct InvalidParameterError : Error {
    explicit InvalidParameterError(const std::string& what) : Error(ErrorCategory::Input, what) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error(ErrorCategory::Input, what) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error(ErrorCategory::Input, what) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error(ErrorCategory::Input, what) {}
};

struct InvalidCameraError : Error {
    explicit InvalidCameraError(const std::string& what) : Error(ErrorCategory::Input, what) {}
};

struct DatasetError : Error {
    explicit DatasetError(const std::string& what) : Error(ErrorCategory::Input, what) {}
};

struct IncompatibleModelsError : Error {
    explicit IncompatibleModelsError(const std::string& what)
        : Error(ErrorCategory::Compatibility, what) {}
};

struct UndefinedMetricError : Error {
    explicit UndefinedMetricError(const std::string& what) : Error(ErrorCategory::Input, what) {}
};

struct WeightsUnavailableError : Error {
    explicit WeightsUnavailableError(const std::string& what) : Error(ErrorCategory::Input, what) {}
};

/// A loss component or total became non-finite. `component` names the offending term.
struct TrainingDivergedError : Error {
    TrainingDivergedError(const std::string& what, std::string component = {})
        : Error(ErrorCategory::Divergence, what), component(std::move(component)) {}

    std::string component;
};

}  // namespace clipsplat
