#pragma once

#include <stdexcept>
#include <string>

namespace relgraph {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- storage / ingestion ---
struct IoError : Error {
    using Error::Error;
};
struct ManifestParseError : Error {
    using Error::Error;
};
// Constraint failures carry table/row coordinates in the message.
struct SchemaViolation : Error {
    using Error::Error;
};
struct InvalidSpec : Error {
    using Error::Error;
};
struct UnknownColumn : Error {
    using Error::Error;
};

// --- tokenizer ---
struct EmptyCorpus : Error {
    using Error::Error;
};
struct RowOutOfRange : Error {
    using Error::Error;
};
struct MaskTargetNotInRow : Error {
    using Error::Error;
};

// --- graph ---
struct InvalidSeedNode : Error {
    using Error::Error;
};

// --- neural core ---
struct TokenOutOfRange : Error {
    using Error::Error;
};
struct SequenceTooLong : Error {
    using Error::Error;
};
struct DimensionMismatch : Error {
    using Error::Error;
};
struct TargetTooLong : Error {
    using Error::Error;
};
struct LengthMismatch : Error {
    using Error::Error;
};
struct MissingGradients : Error {
    using Error::Error;
};
struct ChecksumError : Error {
    using Error::Error;
};

// --- training / evaluation ---
struct EmptyTrainSplit : Error {
    using Error::Error;
};
struct InvalidMaskSpec : Error {
    using Error::Error;
};
struct MissingPhase1State : Error {
    using Error::Error;
};
struct EmptySplit : Error {
    using Error::Error;
};
struct MissingVariant : Error {
    using Error::Error;
};
struct MissingCheckpoint : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace relgraph
