#pragma once

#include <string>

#include "evomcts/errors.hpp"

namespace evomcts {

// Extracts the payload between the last `begin` fence and the first `end`
// fence after it. Throws ParseError when no complete block exists.
std::string extract_fenced_block(const std::string& raw, const std::string& begin,
                                 const std::string& end);

} // namespace evomcts
