#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace promo {

/// Base of every error raised by the library. `code()` is a stable
/// machine-readable name (e.g. "FeatureMismatch") used in CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(code + ": " + what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define PROMO_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(#Name, what) {}        \
    }

// ingestion
class MalformedRow : public Error {
public:
    MalformedRow(std::size_t line, const std::string& what)
        : Error("MalformedRow", "line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};
PROMO_DEFINE_ERROR(DuplicateId);
PROMO_DEFINE_ERROR(UnknownReference);
PROMO_DEFINE_ERROR(InvariantViolation);

// indicators / dataprep
PROMO_DEFINE_ERROR(NoHitReceipts);
PROMO_DEFINE_ERROR(UnknownGroupNoFallback);
PROMO_DEFINE_ERROR(EmptyGroup);

// gbt
PROMO_DEFINE_ERROR(NonFiniteInput);
PROMO_DEFINE_ERROR(EmptyDataset);
PROMO_DEFINE_ERROR(FeatureMismatch);
PROMO_DEFINE_ERROR(NoSplits);
PROMO_DEFINE_ERROR(ModelFormatError);

// metrics
PROMO_DEFINE_ERROR(LengthMismatch);
PROMO_DEFINE_ERROR(EmptyVectors);
PROMO_DEFINE_ERROR(WmapeUndefined);

// hpo
PROMO_DEFINE_ERROR(EmptyTargets);
PROMO_DEFINE_ERROR(BudgetZero);

// config / synth
PROMO_DEFINE_ERROR(InvalidConfig);
PROMO_DEFINE_ERROR(IoError);

#undef PROMO_DEFINE_ERROR

} // namespace promo
