#include "chimera/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <openssl/evp.h>

#include "CLI11.hpp"

#include "chimera/analysis.hpp"
#include "chimera/denoiser.hpp"
#include "chimera/error.hpp"
#include "chimera/image.hpp"

namespace chimera::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config keys

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
    fail(ErrorKind::InvalidArgument, "config key '" + key + "': " + why);
}

double get_number(const std::string& key, const json& v) {
    if (!v.is_number()) bad_key(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) bad_key(key, "must be finite");
    return d;
}

std::int64_t get_int(const std::string& key, const json& v) {
    if (!v.is_number_integer()) bad_key(key, "expected an integer");
    return v.get<std::int64_t>();
}

bool get_bool(const std::string& key, const json& v) {
    if (!v.is_boolean()) bad_key(key, "expected true or false");
    return v.get<bool>();
}

std::string get_string(const std::string& key, const json& v) {
    if (!v.is_string()) bad_key(key, "expected a string");
    return v.get<std::string>();
}

int get_small_int(const std::string& key, const json& v) {
    const auto i = get_int(key, v);
    if (i < 0 || i > 1'000'000'000) bad_key(key, "out of range");
    return static_cast<int>(i);
}

template <typename F>
auto parse_enum(const std::string& key, const json& v, F parse) {
    const std::string s = get_string(key, v);
    try {
        return parse(s);
    } catch (const Error& e) {
        bad_key(key, e.what());
    }
}

using Setter = std::function<void(const std::string&, const json&, Settings&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"frames", [](auto& k, auto& v, Settings& s) { s.morph.frames = get_small_int(k, v); }},
        {"lambda_d", [](auto& k, auto& v, Settings& s) { s.morph.lambda[Stage::D] = get_number(k, v); }},
        {"lambda_m", [](auto& k, auto& v, Settings& s) { s.morph.lambda[Stage::M] = get_number(k, v); }},
        {"lambda_u", [](auto& k, auto& v, Settings& s) { s.morph.lambda[Stage::U] = get_number(k, v); }},
        {"aci", [](auto& k, auto& v, Settings& s) { s.morph.aci = get_bool(k, v); }},
        {"aci_mid_until", [](auto& k, auto& v, Settings& s) { s.morph.aci_mid_until = get_number(k, v); }},
        {"aci_up_from", [](auto& k, auto& v, Settings& s) { s.morph.aci_up_from = get_number(k, v); }},
        {"sap", [](auto& k, auto& v, Settings& s) { s.morph.sap = get_bool(k, v); }},
        {"sap_stage_fraction",
         [](auto& k, auto& v, Settings& s) { s.morph.sap_stage_fraction = get_number(k, v); }},
        {"sap_layers", [](auto& k, auto& v, Settings& s) { s.morph.sap_layers = parse_enum(k, v, parse_sap_layers); }},
        {"branch_blend",
         [](auto& k, auto& v, Settings& s) { s.morph.branch_blend = parse_enum(k, v, parse_branch_blend); }},
        {"guidance", [](auto& k, auto& v, Settings& s) { s.morph.guidance = get_number(k, v); }},
        {"resolution", [](auto& k, auto& v, Settings& s) { s.morph.resolution = get_small_int(k, v); }},
        {"t_max", [](auto& k, auto& v, Settings& s) { s.morph.schedule.t_max = get_small_int(k, v); }},
        {"beta_start", [](auto& k, auto& v, Settings& s) { s.morph.schedule.beta_start = get_number(k, v); }},
        {"beta_end", [](auto& k, auto& v, Settings& s) { s.morph.schedule.beta_end = get_number(k, v); }},
        {"n_inv", [](auto& k, auto& v, Settings& s) { s.morph.schedule.n_inv = get_small_int(k, v); }},
        {"n_dng", [](auto& k, auto& v, Settings& s) { s.morph.schedule.n_dng = get_small_int(k, v); }},
        {"toy_seed",
         [](auto& k, auto& v, Settings& s) {
             if (!v.is_number_unsigned()) bad_key(k, "expected a non-negative integer");
             s.morph.toy_seed = v.template get<std::uint64_t>();
         }},
        {"workers", [](auto& k, auto& v, Settings& s) { s.morph.workers = get_small_int(k, v); }},
        {"backend",
         [](auto& k, auto& v, Settings& s) {
             s.backend = get_string(k, v);
             if (s.backend != "toy" && s.backend != "adapter") bad_key(k, "expected 'toy' or 'adapter'");
         }},
        {"vlm_url", [](auto& k, auto& v, Settings& s) { s.vlm.url = get_string(k, v); }},
        {"vlm_model", [](auto& k, auto& v, Settings& s) { s.vlm.model = get_string(k, v); }},
        {"vlm_timeout",
         [](auto& k, auto& v, Settings& s) {
             s.vlm.timeout_seconds = get_number(k, v);
             if (s.vlm.timeout_seconds <= 0) bad_key(k, "must be positive");
         }},
        {"gamma",
         [](auto& k, auto& v, Settings& s) {
             s.gamma = get_number(k, v);
             if (s.gamma < 1.0) bad_key(k, "must be >= 1");
         }},
        {"sim_interp", [](auto& k, auto& v, Settings& s) { s.sim_interp = parse_enum(k, v, parse_sim_interp); }},
        {"cutoff_fraction",
         [](auto& k, auto& v, Settings& s) {
             s.cutoff_fraction = get_number(k, v);
             if (s.cutoff_fraction <= 0.0 || s.cutoff_fraction >= 1.0) bad_key(k, "must lie in (0,1)");
         }},
    };
    return table;
}

// ---------------------------------------------------------------------------
// Helpers

using Clock = std::chrono::steady_clock;

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    out << text;
    require(out.good(), ErrorKind::Io, "failed writing '" + path.string() + "'");
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Parse, "'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

Image read_input(const fs::path& path) {
    try {
        return read_png(path);
    } catch (const Error& e) {
        fail(ErrorKind::Io, "cannot read image '" + path.string() + "': " + e.what());
    }
}

std::string frame_name(std::size_t k) {
    std::ostringstream os;
    os << "frame_" << std::setw(3) << std::setfill('0') << k << ".png";
    return os.str();
}

std::optional<std::string> vlm_url(const Settings& s) {
    if (!s.vlm.url.empty()) return s.vlm.url;
    if (const char* env = std::getenv("CHIMERA_VLM_URL"); env != nullptr && *env != '\0') return std::string(env);
    return std::nullopt;
}

std::unique_ptr<Backend> make_backend(const Settings& s) {
    if (s.backend == "toy") {
        ToyOptions o;
        o.seed = s.morph.toy_seed;
        o.t_max = s.morph.schedule.t_max;
        return std::make_unique<ToyBackend>(o);
    }
    return std::make_unique<AdapterBackend>(latent_diffusion_descriptor(s.morph.resolution), AdapterCallbacks{},
                                            s.morph.guidance);
}

Image conform_to(const Backend& backend, const Image& img) {
    const auto& d = backend.descriptor();
    return conform(img, d.image_channels, d.image_height, d.image_width);
}

int report(const Error& e, int code) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return code;
}

// Maps library errors to exit codes; input problems are exit 2.
int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const Error& e) {
        switch (e.kind()) {
            case ErrorKind::Backend:
                return report(e, kBackendFailure);
            case ErrorKind::Io:
            case ErrorKind::Format:
            case ErrorKind::Corruption:
            case ErrorKind::Parse:
            case ErrorKind::NotFound:
            case ErrorKind::InvalidArgument:
                return report(e, kBadInput);
            default:
                return report(e, kFailure);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}

// ---------------------------------------------------------------------------
// Commands

struct CommonFlags {
    std::string config;
    std::string backend;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string vlm_url;
};

Settings resolve_settings(const CommonFlags& f) {
    Settings s;
    if (!f.config.empty()) s = load_settings(f.config);
    if (!f.backend.empty()) s = settings_from_json(json{{"backend", f.backend}}, s);
    if (f.seed) s.morph.toy_seed = *f.seed;
    if (f.workers) s.morph.workers = *f.workers;
    if (!f.vlm_url.empty()) s.vlm.url = f.vlm_url;
    return s;
}

struct RunFlags {
    std::vector<std::string> pair;
    std::optional<int> frames;
    std::string out;
    bool no_sap = false;
    bool no_aci = false;
    std::optional<double> lambda;
    std::optional<int> steps;
    std::string prompts;
    std::optional<std::string> anchor;
    bool contact_sheet = false;
    bool save_cache = false;
};

int cmd_run(const CommonFlags& common, const RunFlags& f) {
    const auto start = Clock::now();
    Settings s = resolve_settings(common);
    if (f.frames) s.morph.frames = *f.frames;
    if (f.no_sap) s.morph.sap = false;
    if (f.no_aci) s.morph.aci = false;
    if (f.lambda) {
        for (Stage st : kStages) s.morph.lambda[st] = *f.lambda;
    }
    if (f.steps) s.morph.schedule.n_inv = s.morph.schedule.n_dng = *f.steps;
    s.morph.validate();

    const fs::path path_a = f.pair.at(0), path_b = f.pair.at(1);
    const Image raw_a = read_input(path_a);
    const Image raw_b = read_input(path_b);

    const auto backend = make_backend(s);
    const Image img_a = conform_to(*backend, raw_a);
    const Image img_b = conform_to(*backend, raw_b);

    PromptTexts texts;
    std::string prompt_source;
    if (!f.prompts.empty()) {
        texts = prompt_texts_from_json(read_json(f.prompts));
        prompt_source = "file";
    } else if (auto url = vlm_url(s)) {
        VlmOptions opts = s.vlm;
        opts.url = *url;
        const VlmClient client(opts);
        texts = caption_or_fallback(&client, path_a, path_b);
        prompt_source = texts.anchor.empty() ? "fallback" : "vlm";
    } else {
        prompt_source = "none";
    }
    if (f.anchor) texts.anchor = *f.anchor;

    const ToyTextEncoder encoder(s.morph.toy_seed, backend->descriptor().text_dim);
    const PromptTriplet prompts = encode_prompts(texts, encoder);

    MorphResult result = generate_sequence(img_a, img_b, prompts, s.morph, *backend);

    const fs::path out = f.out;
    fs::create_directories(out);
    json frames = json::array();
    json hashes = json::object();
    auto emit = [&](const std::string& name, const Image& img) {
        write_png(out / name, img);
        hashes[name] = sha256_hex(out / name);
    };
    for (std::size_t k = 0; k < result.sequence.frames.size(); ++k) {
        emit(frame_name(k), result.sequence.frames[k]);
        frames.push_back(frame_name(k));
    }
    emit("endpoint_a.png", img_a);
    emit("endpoint_b.png", img_b);

    std::vector<Tensor> path_latents{result.z_a};
    path_latents.insert(path_latents.end(), result.z_k.begin(), result.z_k.end());
    path_latents.push_back(result.z_b);
    write_latents(out / "latents.f32", path_latents);
    hashes["latents.f32"] = sha256_hex(out / "latents.f32");

    if (f.contact_sheet) {
        std::vector<Image> strip{img_a};
        strip.insert(strip.end(), result.sequence.frames.begin(), result.sequence.frames.end());
        strip.push_back(img_b);
        emit("contact_sheet.png", contact_sheet(strip));
    }
    if (f.save_cache) {
        save_cache(merge_caches(result.cache_a, result.cache_b), out / "cache.chimcache");
        hashes["cache.chimcache"] = sha256_hex(out / "cache.chimcache");
    }

    json manifest;
    manifest["config"] = to_json(s);
    manifest["inputs"] = {{"a", {{"path", path_a.string()}, {"sha256", sha256_hex(path_a)}}},
                          {"b", {{"path", path_b.string()}, {"sha256", sha256_hex(path_b)}}}};
    manifest["prompts"] = to_json(texts);
    manifest["prompts"]["source"] = prompt_source;
    manifest["frames"] = frames;
    manifest["alphas"] = result.sequence.alphas.alphas;
    manifest["endpoints"] = {{"a", "endpoint_a.png"}, {"b", "endpoint_b.png"}};
    manifest["latents"] = {{"file", "latents.f32"},
                           {"count", path_latents.size()},
                           {"shape", result.z_a.shape},
                           {"order", "z_A, z_1..z_K, z_B"}};
    manifest["outputs"] = hashes;
    manifest["versions"] = {{"chimera", kVersion}, {"backend", backend->descriptor().name},
                            {"text_encoder", encoder.id()}};
    manifest["timings"] = {{"inversion_ms", result.timings.inversion_ms},
                           {"denoise_ms", result.timings.denoise_ms},
                           {"total_ms", std::chrono::duration<double, std::milli>(Clock::now() - start).count()}};
    write_text(out / "run.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << frames.size() << " frames to " << out.string() << "\n";
    return kOk;
}

struct EvalFlags {
    std::vector<std::string> seqs;
    std::optional<double> gamma;
    std::string provider = "embed-cosine";
    std::string csv;
    std::string out;
};

int cmd_eval(const CommonFlags& common, const EvalFlags& f) {
    Settings s = resolve_settings(common);
    if (f.gamma) s = settings_from_json(json{{"gamma", *f.gamma}}, s);
    const auto similarity = make_similarity_provider(f.provider);
    const auto features = std::make_shared<ImageEmbedder>();
    const PixelRms distance;
    const EvalProviders providers{similarity.get(), features.get(), &distance};
    const EvalOptions options{s.gamma, s.sim_interp};
    require(f.out.empty() || f.seqs.size() == 1, ErrorKind::InvalidArgument, "--out needs exactly one --seq");

    std::vector<std::pair<std::string, MetricReport>> rows;
    std::vector<MorphPair> pairs;
    for (const auto& dir : f.seqs) {
        const SequenceFiles files = locate_sequence(dir);
        MorphPair pair{read_input(files.endpoint_a), read_input(files.endpoint_b), {}};
        for (const auto& p : files.frames) pair.frames.push_back(read_input(p));
        std::vector<Tensor> latents;
        if (!files.latents.empty()) latents = read_latents(files.latents, files.latent_shape, files.latent_count);
        if (!latents.empty() && latents.size() != pair.frames.size() + 2) {
            std::cerr << "warning: " << files.latents.string() << " does not match the frame count; skipping PPL\n";
            latents.clear();
        }
        MetricReport r = evaluate_sequence(pair.a, pair.b, pair.frames, latents, providers, options);
        const fs::path target = f.out.empty() ? fs::path(dir) / "metrics.json" : fs::path(f.out);
        write_text(target, to_json(r).dump(2) + "\n");
        std::cout << dir << ": GLCS " << r.glcs_display() << " (GCS " << r.gcs_display() << ", LCS "
                  << r.lcs_display() << ")\n";
        rows.emplace_back(dir, std::move(r));
        pairs.push_back(std::move(pair));
    }
    if (pairs.size() > 1) {
        std::cout << "dataset: FID_local " << fid_local(pairs, *features) << ", FID_global "
                  << fid_global(pairs, *features) << "\n";
    }
    if (!f.csv.empty()) write_text(f.csv, metrics_csv(rows));
    return kOk;
}

struct CaptionFlags {
    std::vector<std::string> pair;
    std::string out;
};

int cmd_caption(const CommonFlags& common, const CaptionFlags& f) {
    const Settings s = resolve_settings(common);
    const auto url = vlm_url(s);
    require(url.has_value(), ErrorKind::InvalidArgument, "no VLM endpoint: pass --vlm-url or set CHIMERA_VLM_URL");
    for (const auto& p : f.pair) (void)read_input(p);
    VlmOptions opts = s.vlm;
    opts.url = *url;
    PromptTexts texts;
    try {
        texts = VlmClient(opts).caption(f.pair.at(0), f.pair.at(1));
    } catch (const Error& e) {
        return report(e, kVlmFailure);
    }
    write_text(f.out, to_json(texts).dump(2) + "\n");
    std::cout << "anchor-prompt: " << texts.anchor << "\n";
    return kOk;
}

struct FreqFlags {
    std::string cache;
    std::string image;
    std::string axis = "layer";
    std::optional<double> cutoff;
    std::string out;
};

int cmd_analyze_freq(const CommonFlags& common, const FreqFlags& f) {
    Settings s = resolve_settings(common);
    if (f.cutoff) s = settings_from_json(json{{"cutoff_fraction", *f.cutoff}}, s);
    require(f.cache.empty() != f.image.empty(), ErrorKind::InvalidArgument, "pass exactly one of --cache or --image");
    const ProfileAxis axis = parse_profile_axis(f.axis);

    FeatureCache cache;
    if (!f.cache.empty()) {
        cache = load_cache(f.cache);
    } else {
        const auto backend = make_backend(s);
        const Image img = conform_to(*backend, read_input(f.image));
        const NoiseSchedule schedule = build_schedule(s.morph.schedule);
        const ToyTextEncoder encoder(s.morph.toy_seed, backend->descriptor().text_dim);
        cache = FeatureCache(schedule.t_inv);
        (void)invert(img, *backend, schedule, &cache, "X", TextConditioning::single(encoder.encode("")));
    }
    const std::string csv = profile_csv(profile(cache, axis, s.cutoff_fraction));
    if (f.out.empty()) {
        std::cout << csv;
    } else {
        write_text(f.out, csv);
    }
    return kOk;
}

}  // namespace

// ---------------------------------------------------------------------------

Settings settings_from_json(const json& j, Settings base) {
    require(j.is_object(), ErrorKind::InvalidArgument, "config must be a JSON object");
    const auto& table = setters();
    for (const auto& [key, value] : j.items()) {
        auto it = table.find(key);
        if (it == table.end()) bad_key(key, "unknown key");
        it->second(key, value, base);
    }
    return base;
}

json to_json(const Settings& s) {
    const auto& m = s.morph;
    return json{
        {"frames", m.frames},
        {"lambda_d", m.lambda.at(Stage::D)},
        {"lambda_m", m.lambda.at(Stage::M)},
        {"lambda_u", m.lambda.at(Stage::U)},
        {"aci", m.aci},
        {"aci_mid_until", m.aci_mid_until},
        {"aci_up_from", m.aci_up_from},
        {"sap", m.sap},
        {"sap_stage_fraction", m.sap_stage_fraction},
        {"sap_layers", to_string(m.sap_layers)},
        {"branch_blend", to_string(m.branch_blend)},
        {"guidance", m.guidance},
        {"resolution", m.resolution},
        {"t_max", m.schedule.t_max},
        {"beta_start", m.schedule.beta_start},
        {"beta_end", m.schedule.beta_end},
        {"n_inv", m.schedule.n_inv},
        {"n_dng", m.schedule.n_dng},
        {"toy_seed", m.toy_seed},
        {"workers", m.workers},
        {"backend", s.backend},
        {"vlm_url", s.vlm.url},
        {"vlm_model", s.vlm.model},
        {"vlm_timeout", s.vlm.timeout_seconds},
        {"gamma", s.gamma},
        {"sim_interp", to_string(s.sim_interp)},
        {"cutoff_fraction", s.cutoff_fraction},
    };
}

Settings load_settings(const fs::path& path, Settings base) {
    return settings_from_json(read_json(path), std::move(base));
}

std::string sha256_hex(const fs::path& path) {
    const std::string bytes = read_text(path);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) == 1, ErrorKind::Io,
            "sha256 failed for '" + path.string() + "'");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

void write_latents(const fs::path& path, const std::vector<Tensor>& latents) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    for (const auto& t : latents) {
        for (float v : t.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            const char b[4] = {char(bits & 0xff), char((bits >> 8) & 0xff), char((bits >> 16) & 0xff),
                               char((bits >> 24) & 0xff)};
            out.write(b, 4);
        }
    }
    require(out.good(), ErrorKind::Io, "failed writing '" + path.string() + "'");
}

std::vector<Tensor> read_latents(const fs::path& path, const Shape& shape, std::size_t count) {
    const std::string bytes = read_text(path);
    const std::size_t per = element_count(shape);
    require(bytes.size() == per * count * 4, ErrorKind::Corruption,
            "'" + path.string() + "' holds " + std::to_string(bytes.size()) + " bytes, expected " +
                std::to_string(per * count * 4));
    std::vector<Tensor> out;
    std::size_t off = 0;
    for (std::size_t i = 0; i < count; ++i) {
        Tensor t(shape);
        for (auto& v : t.data) {
            const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + off);
            const std::uint32_t bits = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
                                       std::uint32_t(p[3]) << 24;
            std::memcpy(&v, &bits, sizeof v);
            off += 4;
        }
        out.push_back(std::move(t));
    }
    return out;
}

SequenceFiles locate_sequence(const fs::path& dir) {
    require(fs::is_directory(dir), ErrorKind::NotFound, "sequence directory '" + dir.string() + "' not found");
    SequenceFiles files;
    const fs::path manifest = dir / "run.json";
    if (fs::exists(manifest)) {
        const json m = read_json(manifest);
        try {
            files.endpoint_a = dir / m.at("endpoints").at("a").get<std::string>();
            files.endpoint_b = dir / m.at("endpoints").at("b").get<std::string>();
            for (const auto& name : m.at("frames")) files.frames.push_back(dir / name.get<std::string>());
            if (m.contains("latents")) {
                const auto& l = m.at("latents");
                files.latents = dir / l.at("file").get<std::string>();
                files.latent_shape = l.at("shape").get<Shape>();
                files.latent_count = l.at("count").get<std::size_t>();
                if (!fs::exists(files.latents)) files.latents.clear();
            }
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse, "'" + manifest.string() + "': " + e.what());
        }
    } else {
        files.endpoint_a = dir / "endpoint_a.png";
        files.endpoint_b = dir / "endpoint_b.png";
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".png") files.frames.push_back(entry.path());
        }
        std::sort(files.frames.begin(), files.frames.end());
    }
    for (const auto& p : {files.endpoint_a, files.endpoint_b}) {
        require(fs::exists(p), ErrorKind::NotFound, "missing endpoint '" + p.string() + "'");
    }
    require(!files.frames.empty(), ErrorKind::NotFound, "no frames in '" + dir.string() + "'");
    for (const auto& p : files.frames) {
        require(fs::exists(p), ErrorKind::NotFound, "missing frame '" + p.string() + "'");
    }
    return files;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Diffusion image morphing with cached-feature injection and anchor prompts", "chimera"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    CommonFlags common;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", common.config, "Flat JSON config file");
        cmd->add_option("--backend", common.backend, "toy | adapter");
        cmd->add_option("--seed", common.seed, "Toy backend and text-encoder seed");
        cmd->add_option("--workers", common.workers, "Parallel frame workers (0 = all cores)");
        cmd->add_option("--vlm-url", common.vlm_url, "Chat-completions endpoint for captioning");
    };

    RunFlags run;
    auto* run_cmd = app.add_subcommand("run", "Generate a morph sequence");
    add_common(run_cmd);
    run_cmd->add_option("--pair", run.pair, "Endpoint images A B")->expected(2)->required();
    run_cmd->add_option("--frames", run.frames, "Number of intermediate frames K");
    run_cmd->add_option("--out", run.out, "Output directory")->required();
    run_cmd->add_flag("--no-sap", run.no_sap, "Disable anchor-prompt attention");
    run_cmd->add_flag("--no-aci", run.no_aci, "Disable cached-feature injection");
    run_cmd->add_option("--lambda", run.lambda, "Injection weight for every stage");
    run_cmd->add_option("--steps", run.steps, "Inversion and denoising step count");
    run_cmd->add_option("--prompts", run.prompts, "Prompt triplet JSON (skips the VLM)");
    run_cmd->add_option("--anchor", run.anchor, "Override the anchor-prompt text");
    run_cmd->add_flag("--contact-sheet", run.contact_sheet, "Also write contact_sheet.png");
    run_cmd->add_flag("--save-cache", run.save_cache, "Also write cache.chimcache");

    EvalFlags eval;
    auto* eval_cmd = app.add_subcommand("eval", "Score stored sequences");
    add_common(eval_cmd);
    eval_cmd->add_option("--seq", eval.seqs, "Sequence directory (repeatable)")->required();
    eval_cmd->add_option("--gamma", eval.gamma, "GCS sharpening exponent (>= 1)");
    eval_cmd->add_option("--provider", eval.provider, "Similarity provider");
    eval_cmd->add_option("--csv", eval.csv, "Write a CSV table");
    eval_cmd->add_option("--out", eval.out, "metrics.json path (single sequence)");

    CaptionFlags caption;
    auto* caption_cmd = app.add_subcommand("caption", "Query the VLM for an anchor-prompt and captions");
    add_common(caption_cmd);
    caption_cmd->add_option("--pair", caption.pair, "Endpoint images A B")->expected(2)->required();
    caption_cmd->add_option("--out", caption.out, "Triplet JSON output")->required();

    FreqFlags freq;
    auto* freq_cmd = app.add_subcommand("analyze-freq", "Frequency-band profile of cached features");
    add_common(freq_cmd);
    freq_cmd->add_option("--cache", freq.cache, ".chimcache file");
    freq_cmd->add_option("--image", freq.image, "Invert this image on the toy backend and profile its cache");
    freq_cmd->add_option("--axis", freq.axis, "layer | timestep");
    freq_cmd->add_option("--cutoff", freq.cutoff, "Low-band cutoff as a fraction of Nyquist");
    freq_cmd->add_option("--out", freq.out, "CSV output (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kBadInput;
    }

    if (run_cmd->parsed()) return guarded([&] { return cmd_run(common, run); });
    if (eval_cmd->parsed()) return guarded([&] { return cmd_eval(common, eval); });
    if (caption_cmd->parsed()) return guarded([&] { return cmd_caption(common, caption); });
    return guarded([&] { return cmd_analyze_freq(common, freq); });
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("chimera");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace chimera::cli
