#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "chimera/tensor.hpp"

namespace chimera {

// ---------------------------------------------------------------------------
// Attention with anchor rows

struct AttentionInputs {
    Matrix q;         // n_q x d
    Matrix k_x;       // n_x x d
    Matrix v_x;       // n_x x d
    Matrix k_anchor;  // n_a x d, n_a may be 0
    Matrix v_anchor;  // n_a x d
};

// softmax(Q K^T / sqrt(d)) V with a row-wise, max-shifted softmax.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v);

// Row-softmax weights of attention(); exposed for inspection and tests.
Matrix attention_weights(const Matrix& q, const Matrix& k);
// Softmax weights of query row i in double precision.
std::vector<double> attention_row_weights(const Matrix& q, std::size_t i, const Matrix& k);

// Endpoint branch attention with the anchor keys/values appended:
// softmax(Q [K_X || K_anc]^T / sqrt(d)) [V_X || V_anc].
// An empty anchor is exactly plain attention over (K_X, V_X).
Matrix sap_attention(const AttentionInputs& in);

enum class BranchBlend { Linear, Slerp };

BranchBlend parse_branch_blend(const std::string& name);
const char* to_string(BranchBlend blend);

// Mixes the A and B branch outputs for an intermediate frame.
// Linear: (1-alpha) A + alpha B. Slerp: slerp over the flattened outputs.
Matrix combine_branches(const Matrix& attn_a, const Matrix& attn_b, double alpha,
                        BranchBlend blend = BranchBlend::Linear);

// ---------------------------------------------------------------------------
// Text embeddings

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    // tokens x dim(); never empty (start/end rows are always present).
    virtual Matrix encode(std::string_view text) const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::string id() const = 0;
};

// Offline stand-in for a CLIP-style encoder: each lower-cased word hashes to a
// fixed pseudorandom row, framed by <bos>/<eos> rows. Texts sharing words share rows.
class ToyTextEncoder final : public TextEncoder {
public:
    explicit ToyTextEncoder(std::uint64_t seed = 42, std::size_t dim = 16);

    Matrix encode(std::string_view text) const override;
    std::size_t dim() const override { return dim_; }
    std::string id() const override;

    static std::vector<std::string> tokenize(std::string_view text);

private:
    std::vector<float> token_row(std::string_view token) const;

    std::uint64_t seed_;
    std::size_t dim_;
};

struct PromptTexts {
    std::string anchor;
    std::string caption_a;
    std::string caption_b;

    bool operator==(const PromptTexts&) const = default;
};

struct PromptTriplet {
    PromptTexts text;
    Matrix e_anchor;  // 0 rows in empty-anchor mode
    Matrix e_a;
    Matrix e_b;

    bool empty_anchor() const { return e_anchor.rows == 0; }
    // Captions swapped; used for reversed morphs.
    PromptTriplet mirrored() const;
};

// Encodes all three texts; an empty anchor string yields a 0-row anchor.
PromptTriplet encode_prompts(const PromptTexts& texts, const TextEncoder& encoder);

nlohmann::json to_json(const PromptTexts& texts);
PromptTexts prompt_texts_from_json(const nlohmann::json& j);

// Mean over token rows.
std::vector<double> pool_embedding(const Matrix& e);

// Cosine similarity of the pooled anchor against each pooled caption embedding.
std::pair<double, double> anchor_similarity(std::span<const double> e_anchor, std::span<const double> e_a,
                                            std::span<const double> e_b);

// ---------------------------------------------------------------------------
// Vision-language model protocol

// Instruction text sent with every image pair.
extern const std::string_view kAnchorPromptTemplate;

// Chat-completions style payload carrying both PNGs as base64 data URIs plus the template.
nlohmann::json build_vlm_request(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b,
                                 const std::string& model);
// Reads both files; unreadable paths raise io-error.
nlohmann::json build_vlm_request(const std::filesystem::path& image_a, const std::filesystem::path& image_b,
                                 const std::string& model);

// Extracts the last "Anchor-prompt:", "Caption A:" and "Caption B:" lines.
// Throws parse-error (message carries the raw text) if any label is missing or empty.
PromptTexts parse_vlm_response(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);

struct VlmOptions {
    std::string url;  // e.g. http://127.0.0.1:8000/v1/chat/completions
    std::string model = "Qwen2.5-VL-7B-Instruct";
    double timeout_seconds = 60.0;
    int retries = 1;
};

// Blocking HTTP client; one request per call, retried `retries` times on
// transport failure or a non-2xx status. Safe to use from several threads.
class VlmClient {
public:
    explicit VlmClient(VlmOptions options);

    // Raw completion text; throws io-error when the endpoint is unreachable.
    std::string complete(const nlohmann::json& request) const;
    PromptTexts caption(const std::filesystem::path& image_a, const std::filesystem::path& image_b) const;

    const VlmOptions& options() const { return options_; }

private:
    VlmOptions options_;
};

// Runs the VLM step; on any failure logs a warning to stderr and returns empty
// anchor/captions (plain attention downstream).
PromptTexts caption_or_fallback(const VlmClient* client, const std::filesystem::path& image_a,
                                const std::filesystem::path& image_b);

}  // namespace chimera
