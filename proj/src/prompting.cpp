#include "chimera/prompting.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>

#include "httplib.h"

#include "chimera/core_math.hpp"
#include "chimera/error.hpp"
#include "chimera/rng.hpp"

namespace chimera {

// ---------------------------------------------------------------------------
// Attention

namespace {

void check_attention_shapes(const Matrix& q, const Matrix& k) {
    require(q.cols > 0, ErrorKind::InvalidArgument, "attention: head dimension d must be positive");
    require(k.cols == q.cols, ErrorKind::Shape,
            "attention: key width " + std::to_string(k.cols) + " != query width " + std::to_string(q.cols));
    require(k.rows > 0, ErrorKind::InvalidArgument, "attention: no keys");
}

// Normalized softmax over the scaled logits of query row i, max-shifted.
void softmax_row(const Matrix& q, std::size_t i, const Matrix& k, std::vector<double>& p) {
    const std::size_t d = q.cols;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    double max_logit = -INFINITY;
    for (std::size_t j = 0; j < k.rows; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(q(i, c)) * k(j, c);
        p[j] = dot * scale;
        max_logit = std::max(max_logit, p[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < k.rows; ++j) {
        p[j] = std::exp(p[j] - max_logit);
        denom += p[j];
    }
    for (std::size_t j = 0; j < k.rows; ++j) p[j] /= denom;
}

}  // namespace

Matrix attention_weights(const Matrix& q, const Matrix& k) {
    check_attention_shapes(q, k);
    Matrix w(q.rows, k.rows);
    std::vector<double> p(k.rows);
    for (std::size_t i = 0; i < q.rows; ++i) {
        softmax_row(q, i, k, p);
        for (std::size_t j = 0; j < k.rows; ++j) w(i, j) = static_cast<float>(p[j]);
    }
    return w;
}

std::vector<double> attention_row_weights(const Matrix& q, std::size_t i, const Matrix& k) {
    check_attention_shapes(q, k);
    require(i < q.rows, ErrorKind::InvalidArgument, "attention_row_weights: row out of range");
    std::vector<double> p(k.rows);
    softmax_row(q, i, k, p);
    return p;
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v) {
    check_attention_shapes(q, k);
    require(v.rows == k.rows, ErrorKind::Shape, "attention: key/value row counts differ");

    Matrix out(q.rows, v.cols);
    std::vector<double> p(k.rows);
    std::vector<double> acc(v.cols);
    for (std::size_t i = 0; i < q.rows; ++i) {
        softmax_row(q, i, k, p);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < k.rows; ++j) {
            for (std::size_t c = 0; c < v.cols; ++c) acc[c] += p[j] * v(j, c);
        }
        for (std::size_t c = 0; c < v.cols; ++c) out(i, c) = static_cast<float>(acc[c]);
    }
    return out;
}

namespace {

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
    if (bottom.rows == 0) return top;
    require(top.cols == bottom.cols, ErrorKind::Shape,
            "concatenation width mismatch: " + std::to_string(top.cols) + " vs " + std::to_string(bottom.cols));
    Matrix out(top.rows + bottom.rows, top.cols);
    std::copy(top.data.begin(), top.data.end(), out.data.begin());
    std::copy(bottom.data.begin(), bottom.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(top.data.size()));
    return out;
}

}  // namespace

Matrix sap_attention(const AttentionInputs& in) {
    require(in.q.cols > 0, ErrorKind::InvalidArgument, "sap_attention: d must be positive");
    require(in.k_anchor.rows == in.v_anchor.rows, ErrorKind::Shape, "sap_attention: anchor K/V row counts differ");
    return attention(in.q, stack_rows(in.k_x, in.k_anchor), stack_rows(in.v_x, in.v_anchor));
}

BranchBlend parse_branch_blend(const std::string& name) {
    if (name == "linear") return BranchBlend::Linear;
    if (name == "slerp") return BranchBlend::Slerp;
    fail(ErrorKind::InvalidArgument, "unknown branch blend '" + name + "'");
}

const char* to_string(BranchBlend blend) {
    return blend == BranchBlend::Linear ? "linear" : "slerp";
}

Matrix combine_branches(const Matrix& attn_a, const Matrix& attn_b, double alpha, BranchBlend blend) {
    require(attn_a.rows == attn_b.rows && attn_a.cols == attn_b.cols, ErrorKind::Shape,
            "combine_branches: branch shapes differ");
    Matrix out(attn_a.rows, attn_a.cols);
    if (blend == BranchBlend::Slerp) {
        out.data = slerp_vec<float>(attn_a.data, attn_b.data, alpha);
        return out;
    }
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<float>((1.0 - alpha) * attn_a.data[i] + alpha * attn_b.data[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Text embeddings

ToyTextEncoder::ToyTextEncoder(std::uint64_t seed, std::size_t dim) : seed_(seed), dim_(dim) {
    require(dim > 0, ErrorKind::InvalidArgument, "ToyTextEncoder: dim must be positive");
}

std::string ToyTextEncoder::id() const {
    return "toy-text-" + std::to_string(dim_) + "-seed" + std::to_string(seed_);
}

std::vector<std::string> ToyTextEncoder::tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::vector<float> ToyTextEncoder::token_row(std::string_view token) const {
    SplitMix64 rng(fnv1a64(token) ^ seed_);
    std::vector<float> row(dim_);
    for (auto& v : row) v = static_cast<float>(rng.symmetric());
    return row;
}

Matrix ToyTextEncoder::encode(std::string_view text) const {
    std::vector<std::string> tokens{"<bos>"};
    for (auto& t : tokenize(text)) tokens.push_back(std::move(t));
    tokens.emplace_back("<eos>");

    Matrix m(tokens.size(), dim_);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto row = token_row(tokens[i]);
        std::copy(row.begin(), row.end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * dim_));
    }
    return m;
}

PromptTriplet PromptTriplet::mirrored() const {
    PromptTriplet m = *this;
    std::swap(m.text.caption_a, m.text.caption_b);
    std::swap(m.e_a, m.e_b);
    return m;
}

PromptTriplet encode_prompts(const PromptTexts& texts, const TextEncoder& encoder) {
    PromptTriplet p;
    p.text = texts;
    if (!texts.anchor.empty()) p.e_anchor = encoder.encode(texts.anchor);
    else p.e_anchor = Matrix(0, encoder.dim());
    p.e_a = encoder.encode(texts.caption_a);
    p.e_b = encoder.encode(texts.caption_b);
    return p;
}

nlohmann::json to_json(const PromptTexts& texts) {
    return {{"anchor", texts.anchor}, {"caption_a", texts.caption_a}, {"caption_b", texts.caption_b}};
}

PromptTexts prompt_texts_from_json(const nlohmann::json& j) {
    try {
        return PromptTexts{j.value("anchor", std::string{}), j.at("caption_a").get<std::string>(),
                           j.at("caption_b").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("prompt triplet JSON: ") + e.what());
    }
}

std::vector<double> pool_embedding(const Matrix& e) {
    require(e.rows > 0, ErrorKind::InvalidArgument, "pool_embedding: empty embedding");
    std::vector<double> pooled(e.cols, 0.0);
    for (std::size_t r = 0; r < e.rows; ++r) {
        for (std::size_t c = 0; c < e.cols; ++c) pooled[c] += e(r, c);
    }
    for (auto& v : pooled) v /= static_cast<double>(e.rows);
    return pooled;
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorKind::InvalidArgument, "cosine: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    require(na > 0.0 && nb > 0.0, ErrorKind::InvalidArgument, "cosine: zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace

std::pair<double, double> anchor_similarity(std::span<const double> e_anchor, std::span<const double> e_a,
                                            std::span<const double> e_b) {
    return {cosine(e_anchor, e_a), cosine(e_anchor, e_b)};
}

// ---------------------------------------------------------------------------
// VLM protocol

const std::string_view kAnchorPromptTemplate =
    "You are given two correlated images.\n"
    "Your goal is to analyze them in a way that helps to generate smooth and semantically consistent "
    "transitions between the two.\n"
    "1. First, carefully identify their shared semantic concept, the main subject, action, or event that "
    "connects both images.\n"
    "2. Next, identify their shared layout structure, the spatial arrangement or composition of major elements\n"
    "   (e.g., background, perspective, subject position) that remains partially consistent between both.\n"
    "3. Summarize the shared theme (semantic and/or layout) in one short compact phrase.\n"
    "4. Then, write short but precise captions for each image, ensuring that both captions naturally include\n"
    "   the shared semantic meaning and layout structure.\n"
    "\n"
    "Use this exact format strictly:\n"
    "   Anchor-prompt: [compact phrase capturing shared semantic or layout aspect]\n"
    "   Caption A: [short factual description of image1 including the shared theme]\n"
    "   Caption B: [short factual description of image2 including the shared theme]\n"
    "\n"
    "Avoid artistic or stylistic adjectives (e.g., \"beautiful\", \"vibrant\"). Focus only on semantic meaning "
    "and spatial arrangement, not texture, color tone, or artistic style.\n"
    "\n"
    "Output format.\n"
    "Anchor-prompt: [compact shared concept]\n"
    "Caption A: [description of image A including the shared theme]\n"
    "Caption B: [description of image B including the shared theme]\n"
    "\n"
    "Avoid artistic or stylistic adjectives; focus strictly on semantics and spatial structure.\n";

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) return {};
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

nlohmann::json build_vlm_request(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b,
                                 const std::string& model) {
    auto image_part = [](std::span<const std::uint8_t> png) {
        return nlohmann::json{{"type", "image_url"},
                              {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}};
    };
    nlohmann::json content = nlohmann::json::array();
    content.push_back(image_part(png_a));
    content.push_back(image_part(png_b));
    content.push_back({{"type", "text"}, {"text", std::string(kAnchorPromptTemplate)}});
    return {{"model", model},
            {"temperature", 0},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", std::move(content)}}})}};
}

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot read image '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// Strips list bullets, quote markers and markdown emphasis around a label.
std::string_view strip_decoration(std::string_view s) {
    s = trim(s);
    while (!s.empty() && (s.front() == '*' || s.front() == '-' || s.front() == '#' || s.front() == '>' ||
                          s.front() == '`' || s.front() == '_')) {
        s.remove_prefix(1);
        s = trim(s);
    }
    return s;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
            return false;
        }
    }
    return true;
}

std::string clean_value(std::string_view v) {
    v = trim(v);
    // "**Caption A:** text" leaves emphasis markers after the colon.
    while (!v.empty() && (v.front() == '*' || v.front() == '_' || v.front() == '`')) {
        v.remove_prefix(1);
        v = trim(v);
    }
    while (!v.empty() && (v.back() == '*' || v.back() == '_' || v.back() == '`')) {
        v.remove_suffix(1);
        v = trim(v);
    }
    if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = trim(v.substr(1, v.size() - 2));
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = trim(v.substr(1, v.size() - 2));
    return std::string(v);
}

}  // namespace

nlohmann::json build_vlm_request(const std::filesystem::path& image_a, const std::filesystem::path& image_b,
                                 const std::string& model) {
    return build_vlm_request(read_file_bytes(image_a), read_file_bytes(image_b), model);
}

PromptTexts parse_vlm_response(std::string_view text) {
    struct Label {
        std::string_view name;
        std::optional<std::string> value;
    };
    Label labels[] = {{"Anchor-prompt:", {}}, {"Caption A:", {}}, {"Caption B:", {}}};

    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = text.find('\n', pos);
        const auto line = strip_decoration(text.substr(pos, end == std::string_view::npos ? text.npos : end - pos));
        for (auto& label : labels) {
            if (starts_with_ci(line, label.name)) {
                // Later occurrences win.
                label.value = clean_value(line.substr(label.name.size()));
            } else {
                // Also accept "**Caption A**: ..." where the colon follows the emphasis.
                const auto bare = label.name.substr(0, label.name.size() - 1);
                if (starts_with_ci(line, bare)) {
                    auto rest = strip_decoration(line.substr(bare.size()));
                    if (!rest.empty() && rest.front() == ':') label.value = clean_value(rest.substr(1));
                }
            }
        }
        if (end == std::string_view::npos) break;
        pos = end + 1;
    }

    for (const auto& label : labels) {
        if (!label.value || label.value->empty()) {
            fail(ErrorKind::Parse, "VLM response is missing '" + std::string(label.name) + "'; raw response:\n" +
                                       std::string(text));
        }
    }
    return PromptTexts{*labels[0].value, *labels[1].value, *labels[2].value};
}

VlmClient::VlmClient(VlmOptions options) : options_(std::move(options)) {
    require(!options_.url.empty(), ErrorKind::InvalidArgument, "VLM endpoint URL is empty");
    require(options_.retries >= 0, ErrorKind::InvalidArgument, "VLM retries must be >= 0");
}

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    require(scheme_end != std::string::npos, ErrorKind::InvalidArgument, "VLM URL lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string extract_completion_text(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::Parse, "VLM response is not JSON:\n" + body);
    }
    if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
        const auto& msg = j["choices"][0].value("message", nlohmann::json::object());
        const auto& content = msg.value("content", nlohmann::json());
        if (content.is_string()) return content.get<std::string>();
        if (content.is_array()) {
            std::string text;
            for (const auto& part : content) {
                if (part.value("type", "") == "text") text += part.value("text", "");
            }
            return text;
        }
        if (j["choices"][0].contains("text")) return j["choices"][0]["text"].get<std::string>();
    }
    if (j.contains("text") && j["text"].is_string()) return j["text"].get<std::string>();
    fail(ErrorKind::Parse, "VLM response has no completion text:\n" + body);
}

}  // namespace

std::string VlmClient::complete(const nlohmann::json& request) const {
    const auto [origin, path] = split_url(options_.url);
    const std::string body = request.dump();
    const auto secs = static_cast<time_t>(options_.timeout_seconds);
    const auto usecs = static_cast<time_t>((options_.timeout_seconds - static_cast<double>(secs)) * 1e6);

    std::string last_error;
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        httplib::Client client(origin);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        auto res = client.Post(path, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        return extract_completion_text(res->body);
    }
    fail(ErrorKind::Io, "VLM request to " + options_.url + " failed after " + std::to_string(options_.retries + 1) +
                            " attempt(s): " + last_error);
}

PromptTexts VlmClient::caption(const std::filesystem::path& image_a, const std::filesystem::path& image_b) const {
    return parse_vlm_response(complete(build_vlm_request(image_a, image_b, options_.model)));
}

PromptTexts caption_or_fallback(const VlmClient* client, const std::filesystem::path& image_a,
                                const std::filesystem::path& image_b) {
    if (client == nullptr) {
        std::cerr << "warning: no VLM endpoint configured; using empty anchor-prompt\n";
        return {};
    }
    try {
        return client->caption(image_a, image_b);
    } catch (const Error& e) {
        std::cerr << "warning: VLM captioning failed (" << to_string(e.kind())
                  << "); falling back to empty anchor-prompt: " << e.what() << "\n";
        return {};
    }
}

}  // namespace chimera
