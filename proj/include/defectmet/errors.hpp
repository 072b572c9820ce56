#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace defectmet {

// Base class for all toolkit errors. Everything user-facing derives from
// std::runtime_error so callers can catch one type at the CLI boundary.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg, std::size_t byte_offset = 0)
        : Error(msg), byte_offset_(byte_offset) {}
    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

class MissingMetadataError : public Error {
public:
    using Error::Error;
};

class DuplicateImageError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class DegenerateGeometryError : public Error {
public:
    using Error::Error;
};

class EmptySeriesError : public Error {
public:
    using Error::Error;
};

class ZeroBaselineError : public Error {
public:
    using Error::Error;
};

class MismatchedImageSetError : public Error {
public:
    using Error::Error;
};

class UnknownTagError : public Error {
public:
    using Error::Error;
};

class EmptySideError : public Error {
public:
    using Error::Error;
};

class MissingResultError : public Error {
public:
    using Error::Error;
};

}  // namespace defectmet
