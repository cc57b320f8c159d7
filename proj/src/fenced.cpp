#include "evomcts/fenced.hpp"

namespace evomcts {

std::string extract_fenced_block(const std::string& raw, const std::string& begin,
                                 const std::string& end) {
    // The model may mention the fence while reasoning; the last begin fence
    // that is followed by an end fence is taken as the actual block.
    std::size_t start = std::string::npos;
    for (std::size_t pos = raw.find(begin); pos != std::string::npos;
         pos = raw.find(begin, pos + 1)) {
        if (raw.find(end, pos + begin.size()) != std::string::npos) start = pos;
    }
    if (start == std::string::npos)
        throw ParseError("no complete " + begin + " block found");
    const std::size_t payload = start + begin.size();
    const std::size_t stop = raw.find(end, payload);
    return raw.substr(payload, stop - payload);
}

} // namespace evomcts
