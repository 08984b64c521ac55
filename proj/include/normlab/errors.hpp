#pragma once

#include <stdexcept>
#include <string>

namespace normlab {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// seq
struct InvalidActorId : Error { using Error::Error; };
struct EmptyPattern : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };

// backend
struct NotEnumerable : Error { using Error::Error; };
struct NotSupported : Error { using Error::Error; };
struct VocabularyTooLarge : Error { using Error::Error; };
struct RemoteUnavailable : Error {
  RemoteUnavailable(const std::string& what, int attempts, int last_status)
      : Error(what), attempts(attempts), last_status(last_status) {}
  int attempts;
  int last_status;
};

// actor
struct EmptyMemory : Error { using Error::Error; };
struct MissingPlaceholder : Error { using Error::Error; };
struct MalformedRule : Error { using Error::Error; };

// lmae
struct NoMatchingRule : Error { using Error::Error; };
struct ScenarioError : Error { using Error::Error; };

// certify
struct NoMatchingRecords : Error { using Error::Error; };
struct EditRejected : Error { using Error::Error; };
struct InsufficientMatches : Error { using Error::Error; };
struct MismatchedActors : Error { using Error::Error; };

// config / experiments
struct ConfigError : Error { using Error::Error; };

}  // namespace normlab
