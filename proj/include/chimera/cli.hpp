#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "chimera/engine.hpp"
#include "chimera/metrics.hpp"
#include "chimera/prompting.hpp"

namespace chimera::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kBadInput = 2,
    kBackendFailure = 3,
    kVlmFailure = 4,
};

// Every config-file key; CLI flags override the file.
struct Settings {
    MorphConfig morph;
    std::string backend = "toy";
    VlmOptions vlm;
    double gamma = 1.0;
    SimInterp sim_interp = SimInterp::Angle;
    double cutoff_fraction = 0.25;
};

// Flat JSON object. Unknown keys and values of the wrong type or range raise
// invalid-argument naming the key.
Settings settings_from_json(const nlohmann::json& j, Settings base = {});
nlohmann::json to_json(const Settings& s);
Settings load_settings(const std::filesystem::path& path, Settings base = {});

std::string sha256_hex(const std::filesystem::path& path);

// Raw little-endian f32 values of each latent, back to back.
void write_latents(const std::filesystem::path& path, const std::vector<Tensor>& latents);
std::vector<Tensor> read_latents(const std::filesystem::path& path, const Shape& shape, std::size_t count);

struct SequenceFiles {
    std::filesystem::path endpoint_a;
    std::filesystem::path endpoint_b;
    std::vector<std::filesystem::path> frames;
    std::filesystem::path latents;  // empty when absent
    Shape latent_shape;
    std::size_t latent_count = 0;
};

// Frame order from run.json when present, else frame_*.png in lexicographic
// order. Missing endpoints raise not-found naming the file.
SequenceFiles locate_sequence(const std::filesystem::path& dir);

// Entry point shared by the executable and the tests. The vector form takes
// arguments without the program name.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace chimera::cli
