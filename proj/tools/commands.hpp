#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "cotforge/config.hpp"
#include "cotforge/transport.hpp"

namespace cotforge::cli {

struct Hooks {
  // Replaces the transport chosen from --backend; tests use it to inject
  // mocks with custom policies.
  std::function<std::shared_ptr<Transport>(const RunConfig&)> transport;
};

// Exit codes: 0 success, 1 validation or usage error, 2 backend failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const Hooks& hooks = {});
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Hooks& hooks = {});

}  // namespace cotforge::cli
