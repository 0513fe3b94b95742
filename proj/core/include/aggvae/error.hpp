#pragma once

#include <stdexcept>
#include <string>

namespace aggvae {

// All library failures surface as this type; callers that need to tell
// cases apart inspect the message.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace aggvae
