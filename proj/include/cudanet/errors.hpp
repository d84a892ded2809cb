#pragma once

#include <stdexcept>
#include <string>

namespace cudanet {

// Process exit codes used by the command line tool.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumerical = 4,
  kMissingPrerequisite = 5,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual ExitCode exit_code() const noexcept = 0;
};

// Invalid or unknown configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

// Malformed input data (bad class ids, unreadable files, missing labels).
class DataError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite losses, undefined metrics, degenerate inputs to a loss.
class NumericalError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kNumerical; }
};

// Something that must exist before this step (a checkpoint, a split, a stage) does not.
class PrerequisiteError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kMissingPrerequisite; }
};

// Training pipeline misuse: out-of-order stages, freeze violations, missing labels.
class PipelineError : public PrerequisiteError {
 public:
  using PrerequisiteError::PrerequisiteError;
};

// Runs `fn`; any library error is rethrown with `context` prepended, keeping its type.
template <class F>
decltype(auto) with_context(const std::string& context, F&& fn) {
  try {
    return fn();
  } catch (const PipelineError& e) {
    throw PipelineError(context + ": " + e.what());
  } catch (const PrerequisiteError& e) {
    throw PrerequisiteError(context + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(context + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  }
}

}  // namespace cudanet
