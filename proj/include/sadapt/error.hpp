#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sadapt {

enum class ErrorKind {
    // numerics / shapes
    ShapeMismatch,
    DegenerateVector,
    LengthMismatch,
    NumericalFailure,
    // file formats
    BadMagic,
    VersionUnsupported,
    CorruptLength,
    MalformedMetadata,
    NormViolation,
    IoFailure,
    // data
    InsufficientShots,
    EmptyClass,
    EmptyBank,
    DimensionMismatch,
    ClassSetMismatch,
    // configuration
    RedTooLarge,
    InvalidArgument,
    // soup
    EquivalenceViolation,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Process exit code for a failure of this kind: 1 usage, 2 data format,
/// 3 numerical or equivalence failure.
int exit_code_for(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return m_kind; }

private:
    ErrorKind m_kind;
};

class InsufficientShotsError : public Error {
public:
    InsufficientShotsError(std::size_t class_index, std::size_t available, std::size_t requested);

    std::size_t class_index() const noexcept { return m_class; }
    std::size_t available() const noexcept { return m_available; }

private:
    std::size_t m_class;
    std::size_t m_available;
};

class EquivalenceViolationError : public Error {
public:
    EquivalenceViolationError(double worst_deviation, std::size_t input_index, double tolerance);

    double worst_deviation() const noexcept { return m_worst; }
    std::size_t input_index() const noexcept { return m_index; }

private:
    double m_worst;
    std::size_t m_index;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

} // namespace sadapt
