#include "chimera/stage.hpp"

#include "chimera/error.hpp"

namespace chimera {

char stage_letter(Stage s) {
    switch (s) {
        case Stage::D: return 'D';
        case Stage::M: return 'M';
        case Stage::U: return 'U';
    }
    return '?';
}

Stage parse_stage(char letter) {
    switch (letter) {
        case 'D': case 'd': return Stage::D;
        case 'M': case 'm': return Stage::M;
        case 'U': case 'u': return Stage::U;
        default: break;
    }
    fail(ErrorKind::InvalidArgument, std::string("unknown stage '") + letter + "'");
}

std::string to_string(const StageId& id) {
    return std::string(1, stage_letter(id.stage)) + std::to_string(id.block);
}

}  // namespace chimera
