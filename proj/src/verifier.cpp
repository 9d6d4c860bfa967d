#include "mapo/verifier.hpp"

#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>

#include "mapo/matrix.hpp"
#include "mapo/rng.hpp"
#include <nlohmann/json.hpp>

namespace mapo {

namespace {

std::vector<double> seeded_unit_vector(std::uint64_t space_seed, const std::string& word,
                                       std::size_t dim) {
    Rng rng(mix_seed(space_seed, hash_bytes(word.data(), word.size())));
    return rng.unit_vector(dim);
}

std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

void normalize_or_zero(std::vector<double>& v) {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    if (n2 < 1e-24) {
        for (auto& x : v) x = 0.0;
        return;
    }
    double inv = 1.0 / std::sqrt(n2);
    for (auto& x : v) x *= inv;
}

}  // namespace

EmbeddingSpace::EmbeddingSpace(Vocabulary vocab, std::uint64_t seed, std::size_t dim)
    : vocab_(std::move(vocab)), seed_(seed), dim_(dim) {
    if (vocab_.empty()) throw std::invalid_argument("EmbeddingSpace: empty vocabulary");
    if (dim_ == 0) throw std::invalid_argument("EmbeddingSpace: zero dimension");
    for (const auto& w : vocab_.objects) object_vecs_.push_back(seeded_unit_vector(seed_, w, dim_));
    for (const auto& w : vocab_.colors) color_vecs_.push_back(seeded_unit_vector(seed_, w, dim_));
    for (const auto& w : vocab_.sizes) size_vecs_.push_back(seeded_unit_vector(seed_, w, dim_));
}

std::vector<double> EmbeddingSpace::word_vector(const std::string& word) const {
    // The table and the hash rule agree by construction (same derivation),
    // so vocabulary membership does not change the vector.
    return seeded_unit_vector(seed_, word, dim_);
}

std::vector<double> EmbeddingSpace::content_embedding(const CellContent& cell) const {
    const auto& vo = object_vector(cell.object_class);
    const auto& vc = color_vector(cell.color);
    const auto& vs = size_vector(cell.size);
    std::vector<double> v(dim_);
    for (std::size_t i = 0; i < dim_; ++i) v[i] = vo[i] + vc[i] + kSizeWeight * vs[i];
    normalize_or_zero(v);
    return v;
}

std::vector<double> embed_label(const EmbeddingSpace& space, const std::string& label) {
    auto words = split_tokens(label);
    if (words.empty()) throw std::invalid_argument("embed_label: empty label");
    if (words.size() > static_cast<std::size_t>(kMaxLabelTokens))
        throw std::invalid_argument("embed_label: label exceeds token cap");
    std::vector<double> v(space.dim(), 0.0);
    for (const auto& w : words) {
        auto wv = space.word_vector(w);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += wv[i];
    }
    normalize_or_zero(v);
    return v;
}

std::vector<double> embed_observation(const EmbeddingSpace& space, const Observation& obs) {
    if (obs.kind == ObsKind::Coarse)
        throw std::invalid_argument("embed_observation: coarse views are not verifier inputs");
    if (obs.kind == ObsKind::Blank) return std::vector<double>(space.dim(), 0.0);
    if (obs.features.size() != space.dim())
        throw std::invalid_argument("embed_observation: feature dimension mismatch");
    auto v = obs.features;
    normalize_or_zero(v);
    return v;
}

double semantic_score(const EmbeddingSpace& space, const std::string& label,
                      const Observation& obs) {
    auto el = embed_label(space, label);
    auto eo = embed_observation(space, obs);
    return dot(el.data(), eo.data(), el.size());
}

Expected<double, VerifierError> external_score(std::iostream& endpoint, const std::string& label,
                                               const Observation& obs) {
    nlohmann::json req;
    req["label"] = label;
    req["features"] = obs.features;
    endpoint << req.dump() << "\n";
    endpoint.flush();
    if (!endpoint)
        return VerifierError{VerifierErrorKind::Transport, "failed to write request"};

    std::string line;
    if (!std::getline(endpoint, line))
        return VerifierError{VerifierErrorKind::Transport, "endpoint closed before response"};

    nlohmann::json resp = nlohmann::json::parse(line, nullptr, false);
    if (resp.is_discarded() || !resp.is_object() || !resp.contains("score") ||
        !resp["score"].is_number())
        return VerifierError{VerifierErrorKind::Protocol, "response is not {\"score\":f}"};
    double z = resp["score"].get<double>();
    if (!(z >= -1.0 && z <= 1.0))
        return VerifierError{VerifierErrorKind::OutOfRange, "score outside [-1,1]"};
    return z;
}

}  // namespace mapo
