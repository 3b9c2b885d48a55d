#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace chimera {

// U-Net block groups in forward order.
enum class Stage : std::uint8_t { D = 0, M = 1, U = 2 };

inline constexpr Stage kStages[] = {Stage::D, Stage::M, Stage::U};

char stage_letter(Stage s);
Stage parse_stage(char letter);

struct StageId {
    Stage stage = Stage::D;
    int block = 0;

    auto operator<=>(const StageId&) const = default;
};

// "D0", "M0", "U2", ...
std::string to_string(const StageId& id);

}  // namespace chimera
