#include "sadapt/error.hpp"

#include <sstream>

namespace sadapt {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DegenerateVector: return "DegenerateVector";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionUnsupported: return "VersionUnsupported";
    case ErrorKind::CorruptLength: return "CorruptLength";
    case ErrorKind::MalformedMetadata: return "MalformedMetadata";
    case ErrorKind::NormViolation: return "NormViolation";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InsufficientShots: return "InsufficientShots";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::EmptyBank: return "EmptyBank";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ClassSetMismatch: return "ClassSetMismatch";
    case ErrorKind::RedTooLarge: return "RedTooLarge";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EquivalenceViolation: return "EquivalenceViolation";
    }
    return "Unknown";
}

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::RedTooLarge:
    case ErrorKind::InvalidArgument:
        return 1;
    case ErrorKind::BadMagic:
    case ErrorKind::VersionUnsupported:
    case ErrorKind::CorruptLength:
    case ErrorKind::MalformedMetadata:
    case ErrorKind::NormViolation:
    case ErrorKind::IoFailure:
    case ErrorKind::InsufficientShots:
    case ErrorKind::EmptyClass:
    case ErrorKind::EmptyBank:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::ClassSetMismatch:
        return 2;
    case ErrorKind::ShapeMismatch:
    case ErrorKind::DegenerateVector:
    case ErrorKind::LengthMismatch:
    case ErrorKind::NumericalFailure:
    case ErrorKind::EquivalenceViolation:
        return 3;
    }
    return 3;
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), m_kind(kind) {}

namespace {

std::string shots_message(std::size_t cls, std::size_t available, std::size_t requested) {
    std::ostringstream os;
    os << "class " << cls << " has " << available << " samples, " << requested << " requested";
    return os.str();
}

std::string equivalence_message(double worst, std::size_t index, double tolerance) {
    std::ostringstream os;
    os.precision(6);
    os << "worst deviation " << std::scientific << worst << " at input " << index
       << " exceeds tolerance " << tolerance;
    return os.str();
}

} // namespace

InsufficientShotsError::InsufficientShotsError(std::size_t class_index, std::size_t available,
                                               std::size_t requested)
    : Error(ErrorKind::InsufficientShots, shots_message(class_index, available, requested)),
      m_class(class_index), m_available(available) {}

EquivalenceViolationError::EquivalenceViolationError(double worst_deviation, std::size_t input_index,
                                                     double tolerance)
    : Error(ErrorKind::EquivalenceViolation,
            equivalence_message(worst_deviation, input_index, tolerance)),
      m_worst(worst_deviation), m_index(input_index) {}

void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace sadapt
