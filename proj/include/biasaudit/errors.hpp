#pragma once

#include <stdexcept>
#include <string>

namespace biasaudit {

// Base class for every error raised by the toolkit.
struct AuditError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Declared columns missing, malformed schema, protected set empty, ...
struct SchemaError : AuditError {
    using AuditError::AuditError;
};

// A cell failed to parse; message carries row/column location.
struct ParseError : AuditError {
    using AuditError::AuditError;
};

// Structurally valid input with unusable content (empty after filtering,
// non-finite values, constant protected column, ...).
struct DataError : AuditError {
    using AuditError::AuditError;
};

// Caller violated an operation precondition.
struct ArgumentError : AuditError {
    using AuditError::AuditError;
};

// External-model child process misbehaved; message carries its stderr.
struct AdapterError : AuditError {
    using AuditError::AuditError;
};

// Non-finite loss or gradient during generator training.
struct TrainingError : AuditError {
    using AuditError::AuditError;
};

// Re-weighting cannot proceed (no replicable sample, stalled variance).
struct MitigationError : AuditError {
    using AuditError::AuditError;
};

// Run configuration failed validation; message carries field paths.
struct ConfigError : AuditError {
    using AuditError::AuditError;
};

} // namespace biasaudit
