/// @file retrieval.hpp
/// @brief Prompt embeddings, exact cosine top-k index, and target-similarity
///        training pairs.
///
/// Few-shot examples are chosen by embedding the user query and taking the
/// k nearest stored prompts by cosine similarity. The same index type serves
/// API-definition retrieval (see grounding.hpp).
///
/// Target similarity tuning scores an utterance-similarity function against
/// program similarity: over pairs (i, j), the loss is the mean of
/// (f(u_i, u_j) - S(p_i, p_j))^2 where S is the Jaccard index of the two
/// flows' function-name sets. Pairs are labelled positive when the prompt
/// cosine exceeds a threshold (0.7 by default).

#pragma once

#include "flowrag/metrics.hpp"
#include "flowrag/sample.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace flowrag {

class RetrievalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EmbeddingVector {
    std::vector<double> components;
    bool normalized = false;

    std::size_t dimension() const noexcept { return components.size(); }
    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

inline double l2_norm(const EmbeddingVector& v)
{
    double sum = 0.0;
    for (const double x : v.components)
        sum += x * x;
    return std::sqrt(sum);
}

/// Unit-length copy. Throws RetrievalError for a zero or non-finite vector.
inline EmbeddingVector normalize(const EmbeddingVector& v)
{
    const double norm = l2_norm(v);
    if (!(norm > 0.0) || !std::isfinite(norm))
        throw RetrievalError("cannot normalize a zero or non-finite vector");
    EmbeddingVector out{v.components, true};
    for (double& x : out.components)
        x /= norm;
    return out;
}

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) noexcept
{
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        sum += a[i] * b[i];
    return sum;
}

} // namespace detail

/// Dot product of the normalized inputs, clamped to [-1, 1].
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b)
{
    if (a.dimension() != b.dimension())
        throw RetrievalError("dimension mismatch: " + std::to_string(a.dimension()) + " vs " +
                             std::to_string(b.dimension()));
    if (a.normalized && b.normalized)
        return std::clamp(detail::dot(a.components, b.components), -1.0, 1.0);
    return cosine(a.normalized ? a : normalize(a), b.normalized ? b : normalize(b));
}

/// Maps text to a fixed-dimension vector. Implementations must be
/// deterministic per instance and safe to call from several threads.
class Embedder {
public:
    virtual ~Embedder() = default;

    /// Identifies the backing model and its parameters.
    virtual std::string name() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual EmbeddingVector embed(std::string_view text) const = 0;

    /// Order-preserving batch form.
    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const
    {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts)
            out.push_back(embed(t));
        return out;
    }
};

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 14695981039346656037ull)
{
    for (const char c : bytes) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 1099511628211ull;
    }
    return hash;
}

/// Offline embedder: each whitespace token (ASCII-lowercased) is hashed into
/// one of `dimension` buckets, bucket counts are L2-normalized. A salt gives
/// distinct but equally deterministic "models". Text without tokens yields an
/// unnormalized zero vector.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dimension = 256, std::string salt = {})
        : dimension_(dimension), salt_(std::move(salt))
    {
        if (dimension_ == 0)
            throw RetrievalError("embedding dimension must be positive");
    }

    std::string name() const override
    {
        return "hashing-" + std::to_string(dimension_) + (salt_.empty() ? "" : "-" + salt_);
    }

    std::size_t dimension() const override { return dimension_; }

    EmbeddingVector embed(std::string_view text) const override
    {
        EmbeddingVector v{std::vector<double>(dimension_, 0.0), false};
        const std::uint64_t seed = fnv1a64(salt_);
        bool any = false;
        std::string token;
        auto flush = [&] {
            if (token.empty())
                return;
            v.components[fnv1a64(token, seed) % dimension_] += 1.0;
            token.clear();
            any = true;
        };
        for (const char c : text) {
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
                flush();
            } else {
                token.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
            }
        }
        flush();
        return any ? normalize(v) : v;
    }

private:
    std::size_t dimension_;
    std::string salt_;
};

struct ScoredId {
    std::string id;
    double score = 0.0;

    friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

/// Exact (flat) cosine index. Vectors are stored normalized; iteration order
/// is insertion order.
class SampleIndex {
public:
    struct Entry {
        std::string id;
        EmbeddingVector vector;
    };

    SampleIndex() = default;
    explicit SampleIndex(std::size_t dimension, std::string embedder_name = {})
        : dimension_(dimension), embedder_name_(std::move(embedder_name))
    {
    }

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::string& embedder_name() const noexcept { return embedder_name_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    void add(std::string id, const EmbeddingVector& vector)
    {
        if (dimension_ == 0 && entries_.empty())
            dimension_ = vector.dimension();
        if (vector.dimension() != dimension_)
            throw RetrievalError("entry '" + id + "' has dimension " + std::to_string(vector.dimension()) +
                                 ", index expects " + std::to_string(dimension_));
        if (ids_.count(id))
            throw RetrievalError("duplicate id '" + id + "' in index");
        EmbeddingVector stored = vector.normalized ? vector : normalize(vector);
        ids_.insert(id);
        entries_.push_back(Entry{std::move(id), std::move(stored)});
    }

    /// Top-k by cosine, descending; ties keep insertion order.
    std::vector<ScoredId> search(const EmbeddingVector& query, std::size_t k) const
    {
        if (k == 0 || entries_.empty())
            return {};
        const EmbeddingVector q = query.normalized ? query : normalize(query);
        std::vector<double> scores(entries_.size());
        if (q.dimension() != dimension_)
            throw RetrievalError("query has dimension " + std::to_string(q.dimension()) + ", index expects " +
                                 std::to_string(dimension_));
        for (std::size_t i = 0; i < entries_.size(); ++i)
            scores[i] = std::clamp(detail::dot(q.components, entries_[i].vector.components), -1.0, 1.0);

        std::vector<std::size_t> order(entries_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto better = [&](std::size_t a, std::size_t b) {
            return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
        };
        const std::size_t n = std::min(k, order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), better);

        std::vector<ScoredId> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            out.push_back({entries_[order[i]].id, scores[order[i]]});
        return out;
    }

    nlohmann::ordered_json to_json() const
    {
        nlohmann::ordered_json ids = nlohmann::ordered_json::array();
        nlohmann::ordered_json vectors = nlohmann::ordered_json::array();
        for (const auto& e : entries_) {
            ids.push_back(e.id);
            vectors.push_back(e.vector.components);
        }
        return {{"format", "flowrag.index"}, {"version", 1},          {"embedder", embedder_name_},
                {"dimension", dimension_},   {"ids", std::move(ids)}, {"vectors", std::move(vectors)}};
    }

    static SampleIndex from_json(const nlohmann::json& j)
    {
        if (j.value("format", "") != "flowrag.index" || j.value("version", 0) != 1)
            throw RetrievalError("not a version 1 index snapshot");
        SampleIndex index(j.at("dimension").get<std::size_t>(), j.value("embedder", ""));
        const auto& ids = j.at("ids");
        const auto& vectors = j.at("vectors");
        if (ids.size() != vectors.size())
            throw RetrievalError("index snapshot has " + std::to_string(ids.size()) + " ids but " +
                                 std::to_string(vectors.size()) + " vectors");
        for (std::size_t i = 0; i < ids.size(); ++i) {
            // Stored vectors are already unit length; keep their exact bits.
            EmbeddingVector v{vectors[i].get<std::vector<double>>(), false};
            v.normalized = std::abs(l2_norm(v) - 1.0) <= 1e-9;
            index.add(ids[i].get<std::string>(), v);
        }
        return index;
    }

    void save(const std::filesystem::path& path) const
    {
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw RetrievalError("cannot write index file " + path.string());
        out << to_json().dump() << '\n';
    }

    static SampleIndex load(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw RetrievalError("cannot open index file " + path.string());
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw RetrievalError("malformed index file " + path.string() + ": " + e.what());
        }
    }

private:
    std::size_t dimension_ = 0;
    std::string embedder_name_;
    std::vector<Entry> entries_;
    std::unordered_set<std::string> ids_;
};

/// Embeds every prompt (batch, order-preserving) into a new index.
inline SampleIndex build_index(std::span<const Sample> samples, const Embedder& embedder)
{
    std::unordered_set<std::string> ids;
    std::vector<std::string> prompts;
    prompts.reserve(samples.size());
    for (const auto& s : samples) {
        if (!ids.insert(s.id).second)
            throw RetrievalError("duplicate sample id '" + s.id + "'");
        if (s.prompt.empty())
            throw RetrievalError("sample '" + s.id + "' has an empty prompt");
        prompts.push_back(s.prompt);
    }
    const auto vectors = embedder.embed_batch(prompts);
    if (vectors.size() != samples.size())
        throw RetrievalError("embedder returned " + std::to_string(vectors.size()) + " vectors for " +
                             std::to_string(samples.size()) + " texts");
    SampleIndex index(embedder.dimension(), embedder.name());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        try {
            index.add(samples[i].id, vectors[i]);
        } catch (const RetrievalError& e) {
            throw RetrievalError("sample '" + samples[i].id + "': " + e.what());
        }
    }
    return index;
}

inline std::vector<ScoredId> retrieve_few_shots(const SampleIndex& index, std::string_view query,
                                                std::size_t k, const Embedder& embedder)
{
    if (k == 0 || index.empty())
        return {};
    return index.search(embedder.embed(query), k);
}

//===----------------------------------------------------------------------===//
// Target similarity tuning
//===----------------------------------------------------------------------===//

inline constexpr double kTstPositiveThreshold = 0.7;

struct TstPair {
    std::string id_i;
    std::string id_j;
    std::string prompt_i;
    std::string prompt_j;
    double utterance_similarity = 0.0; // cosine of prompt embeddings
    double program_similarity = 0.0;   // Jaccard of function-name sets
    bool positive = false;             // utterance_similarity > threshold

    friend bool operator==(const TstPair&, const TstPair&) = default;
};

/// Enumerates unordered pairs in lexicographic (id_i, id_j) order over the
/// id-sorted samples, stopping after `budget` pairs. Throws ParseError when a
/// flow does not parse.
inline std::vector<TstPair> generate_tst_pairs(std::span<const Sample> samples, const Embedder& embedder,
                                               std::size_t budget, double threshold = kTstPositiveThreshold)
{
    std::vector<const Sample*> sorted;
    sorted.reserve(samples.size());
    for (const auto& s : samples)
        sorted.push_back(&s);
    std::sort(sorted.begin(), sorted.end(), [](const Sample* a, const Sample* b) { return a->id < b->id; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i]->id == sorted[i - 1]->id)
            throw RetrievalError("duplicate sample id '" + sorted[i]->id + "'");

    std::vector<Flow> flows;
    std::vector<std::string> prompts;
    for (const Sample* s : sorted) {
        try {
            flows.push_back(s->parsed_flow());
        } catch (const ParseError& e) {
            throw ParseError(e.line(), e.column(), e.expected(), e.found() + " in sample '" + s->id + "'");
        }
        prompts.push_back(s->prompt);
    }
    const auto vectors = embedder.embed_batch(prompts);

    std::vector<TstPair> pairs;
    for (std::size_t i = 0; i < sorted.size() && pairs.size() < budget; ++i) {
        for (std::size_t j = i + 1; j < sorted.size() && pairs.size() < budget; ++j) {
            TstPair p;
            p.id_i = sorted[i]->id;
            p.id_j = sorted[j]->id;
            p.prompt_i = prompts[i];
            p.prompt_j = prompts[j];
            p.utterance_similarity = cosine(vectors[i], vectors[j]);
            p.program_similarity = jaccard_program_similarity(flows[i], flows[j]);
            p.positive = p.utterance_similarity > threshold;
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

using UtteranceSimilarity = std::function<double(std::string_view, std::string_view)>;

/// Mean squared error between the candidate's utterance similarity and the
/// program similarity. Throws RetrievalError on an empty pair list.
inline double tst_loss(std::span<const TstPair> pairs, const UtteranceSimilarity& candidate)
{
    if (pairs.empty())
        throw RetrievalError("tst_loss needs at least one pair");
    double sum = 0.0;
    for (const auto& p : pairs) {
        const double diff = candidate(p.prompt_i, p.prompt_j) - p.program_similarity;
        sum += diff * diff;
    }
    return sum / static_cast<double>(pairs.size());
}

/// Cosine of the embedder's vectors, as an utterance-similarity candidate.
inline UtteranceSimilarity embedder_similarity(const Embedder& embedder)
{
    return [&embedder](std::string_view a, std::string_view b) {
        return cosine(embedder.embed(a), embedder.embed(b));
    };
}

inline nlohmann::ordered_json to_json(const TstPair& p)
{
    return {{"id_i", p.id_i},
            {"id_j", p.id_j},
            {"prompt_i", p.prompt_i},
            {"prompt_j", p.prompt_j},
            {"utterance_similarity", p.utterance_similarity},
            {"program_similarity", p.program_similarity},
            {"label", p.positive ? "positive" : "negative"}};
}

inline TstPair tst_pair_from_json(const nlohmann::json& j)
{
    TstPair p;
    p.id_i = j.at("id_i").get<std::string>();
    p.id_j = j.at("id_j").get<std::string>();
    p.prompt_i = j.at("prompt_i").get<std::string>();
    p.prompt_j = j.at("prompt_j").get<std::string>();
    p.utterance_similarity = j.at("utterance_similarity").get<double>();
    p.program_similarity = j.at("program_similarity").get<double>();
    const auto label = j.at("label").get<std::string>();
    if (label != "positive" && label != "negative")
        throw RetrievalError("pair label must be positive or negative, got '" + label + "'");
    p.positive = label == "positive";
    return p;
}

inline void write_tst_pairs(const std::filesystem::path& path, std::span<const TstPair> pairs)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw RetrievalError("cannot write pairs file " + path.string());
    for (const auto& p : pairs)
        out << to_json(p).dump() << '\n';
}

inline std::vector<TstPair> read_tst_pairs(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw RetrievalError("cannot open pairs file " + path.string());
    std::vector<TstPair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            pairs.push_back(tst_pair_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw RetrievalError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return pairs;
}

} // namespace flowrag
