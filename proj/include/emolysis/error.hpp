#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace emolysis {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition or malformed value.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The media container could not be opened or decoded.
class IngestError : public Error {
 public:
  using Error::Error;
};

/// Decoding stopped in the middle of a segment. Frames up to and including
/// `last_good_frame()` were delivered.
class PartialSegmentError : public IngestError {
 public:
  PartialSegmentError(const std::string& what, std::int64_t last_good_frame)
      : IngestError(what), last_good_frame_(last_good_frame) {}

  /// -1 when no frame of the segment decoded.
  std::int64_t last_good_frame() const noexcept { return last_good_frame_; }

 private:
  std::int64_t last_good_frame_;
};

/// A modality (or one observation of it) cannot be produced. Never fatal to a
/// session: the pipeline drops the affected observations.
class ModalityUnavailable : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class RegistryError : public Error {
 public:
  using Error::Error;
};

class RegistryConflict : public RegistryError {
 public:
  using RegistryError::RegistryError;
};

/// Operation not allowed in the current session state.
class StateError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class Cancelled : public Error {
 public:
  using Error::Error;
};

}  // namespace emolysis
