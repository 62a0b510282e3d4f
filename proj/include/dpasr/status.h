//
// Copyright 2026 The dpasr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPASR_STATUS_H_
#define DPASR_STATUS_H_

#include <stdexcept>
#include <string>

namespace dpasr {

// Base class for every error raised by the library. Callers that only care
// about "something went wrong" catch this; the subclasses exist for the few
// places where the caller recovers from a specific condition.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A CTC target that cannot be aligned to the available output frames.
class InfeasibleLabelsError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A run finished but one of its guarantees (privacy budget, reproducibility)
// does not hold. The CLI maps this to a distinct exit code.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace dpasr

#endif  // DPASR_STATUS_H_
