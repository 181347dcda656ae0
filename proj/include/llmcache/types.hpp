#pragma once

#include <cstdint>
#include <vector>

namespace llmcache {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

}  // namespace llmcache
