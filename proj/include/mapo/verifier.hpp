#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mapo/expected.hpp"
#include "mapo/vocab.hpp"
#include "mapo/world.hpp"

namespace mapo {

// Hard cap on label length, in whitespace-delimited tokens.
inline constexpr int kMaxLabelTokens = 8;

// Deterministic embedding oracle standing in for a pre-trained image/text
// encoder. Every attribute word gets a seeded random unit vector; cell
// content embeds as the normalized weighted sum of its attribute vectors.
// Random directions in dimension 64 are near-orthogonal, so the cosine score
// roughly tracks the fraction of shared attributes.
class EmbeddingSpace {
public:
    EmbeddingSpace(Vocabulary vocab, std::uint64_t seed, std::size_t dim = 64);

    std::size_t dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }
    const Vocabulary& vocab() const { return vocab_; }

    // Unit vector for a single word. Vocabulary words come from the
    // precomputed table; unknown words get a seeded hash-derived direction.
    std::vector<double> word_vector(const std::string& word) const;

    const std::vector<double>& object_vector(int id) const { return object_vecs_.at(id); }
    const std::vector<double>& color_vector(int id) const { return color_vecs_.at(id); }
    const std::vector<double>& size_vector(int id) const { return size_vecs_.at(id); }

    // Normalized weighted sum of the cell's attribute vectors. The size
    // attribute is down-weighted so that class and color dominate the
    // direction while size stays linearly decodable.
    std::vector<double> content_embedding(const CellContent& cell) const;

    static constexpr double kSizeWeight = 0.5;

private:
    Vocabulary vocab_;
    std::uint64_t seed_;
    std::size_t dim_;
    std::vector<std::vector<double>> object_vecs_;
    std::vector<std::vector<double>> color_vecs_;
    std::vector<std::vector<double>> size_vecs_;
};

// Normalized sum of the label's word vectors. Throws std::invalid_argument
// on an empty label or one longer than kMaxLabelTokens tokens.
std::vector<double> embed_label(const EmbeddingSpace& space, const std::string& label);

// Patch -> normalized mean of the covered content embeddings (i.e. the
// normalized observation features); Blank -> zero vector. Coarse views are
// never verifier inputs and throw std::invalid_argument.
std::vector<double> embed_observation(const EmbeddingSpace& space, const Observation& obs);

// Cosine similarity between the label and observation embeddings; a blank
// observation scores 0 by convention.
double semantic_score(const EmbeddingSpace& space, const std::string& label,
                      const Observation& obs);

// ---- External-verifier adapter ------------------------------------------
//
// Line protocol, one JSON object per newline-terminated UTF-8 line:
//   request:  {"label":"<string>","features":[f,...,f]}
//   response: {"score":f}

enum class VerifierErrorKind { Transport, Protocol, OutOfRange };

struct VerifierError {
    VerifierErrorKind kind;
    std::string message;
};

Expected<double, VerifierError> external_score(std::iostream& endpoint, const std::string& label,
                                               const Observation& obs);

}  // namespace mapo
