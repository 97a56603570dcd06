#pragma once

#include <stdexcept>
#include <string>

namespace metaflow {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a partition or replacement needs an idle node and none is left
// anywhere in the eligible scope ("more storage servers should be added").
struct CapacityExhausted : Error {
  using Error::Error;
};

// A full leaf whose objects all share one /32 identifier cannot be split.
struct UnsplittableHotspot : Error {
  using Error::Error;
};

struct AlreadyBootstrapped : Error {
  using Error::Error;
};

// NAT agent errors.
struct NoBinding : Error {
  using Error::Error;
};
struct BindingTableFull : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct CoordinatorDown : Error {
  using Error::Error;
};

}  // namespace metaflow
