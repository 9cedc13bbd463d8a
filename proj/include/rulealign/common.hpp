#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rulealign {

// Broad failure classes; the CLI maps them onto process exit codes.
enum class ErrorClass : std::uint8_t {
    Usage,    // bad arguments, bad config
    Data,     // malformed or unusable input data
    Numeric,  // non-finite losses, overflowing contexts
};

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, std::string kind, const std::string& message)
        : std::runtime_error(message), class_(cls), kind_(std::move(kind)) {}

    ErrorClass error_class() const noexcept { return class_; }
    // Stable machine-readable name, e.g. "UnmappedDisease".
    const std::string& kind() const noexcept { return kind_; }

private:
    ErrorClass class_;
    std::string kind_;
};

#define RULEALIGN_DEFINE_ERROR(Name, Class)                                      \
    class Name : public Error {                                                  \
    public:                                                                      \
        explicit Name(const std::string& message) : Error(Class, #Name, message) {} \
    }

RULEALIGN_DEFINE_ERROR(InvalidArgument, ErrorClass::Usage);
RULEALIGN_DEFINE_ERROR(ConfigError, ErrorClass::Usage);
RULEALIGN_DEFINE_ERROR(DataError, ErrorClass::Data);
RULEALIGN_DEFINE_ERROR(UnresolvedPlaceholder, ErrorClass::Data);
RULEALIGN_DEFINE_ERROR(BackendFailure, ErrorClass::Data);
RULEALIGN_DEFINE_ERROR(MalformedDialogue, ErrorClass::Data);
RULEALIGN_DEFINE_ERROR(RuleViolation, ErrorClass::Data);
RULEALIGN_DEFINE_ERROR(NoDisruptionSource, ErrorClass::Data);
RULEALIGN_DEFINE_ERROR(ContextOverflow, ErrorClass::Numeric);
RULEALIGN_DEFINE_ERROR(NonFiniteLoss, ErrorClass::Numeric);

#undef RULEALIGN_DEFINE_ERROR

class UnmappedDisease : public Error {
public:
    explicit UnmappedDisease(std::string raw)
        : Error(ErrorClass::Data, "UnmappedDisease", "unmapped disease name: '" + raw + "'"),
          raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);
std::uint64_t derive_seed(std::uint64_t base, std::string_view label, std::uint64_t index);

// Uniform double in [0, 1) from a 64-bit engine draw (53 bits of mantissa).
inline double unit_interval(std::uint64_t draw) {
    return static_cast<double>(draw >> 11) * 0x1.0p-53;
}

}  // namespace rulealign
