#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mapo/protocol.hpp"
#include "mapo/rng.hpp"
#include "mapo/verifier.hpp"
#include "mapo/world.hpp"

namespace mapo {

// Synthetic visual-search world: an N x N grid over the unit square where
// exactly one cell holds the queried object class. The coarse view reveals
// only the class layout; colors and sizes are visible only after zooming.
struct Scene {
    std::uint64_t seed = 0;
    int grid_size = 0;               // N; cells form an N x N grid
    std::vector<CellContent> cells;  // length N*N, row-major
    int target_cell = 0;

    int num_cells() const { return grid_size * grid_size; }
    bool operator==(const Scene&) const = default;
};

struct Query {
    int target_class = 0;
    enum class Attribute { Color, Size } asked_attribute = Attribute::Color;
    int ground_truth = 0;  // answer-vocabulary id

    bool operator==(const Query&) const = default;
};

// Throws std::invalid_argument on grid_size < 2, empty vocabulary, or a
// target class outside the vocabulary. Same seed, same scene, byte for byte.
Scene generate_scene(std::uint64_t seed, int grid_size, int target_class,
                     const Vocabulary& vocab);

// Derives the asked attribute from the seed and reads the ground truth off
// the unique target cell.
Query make_query(const Scene& scene, std::uint64_t seed, const Vocabulary& vocab);

// Coarse view: per-cell object-class presence only (channel c holds a scalar
// code of cell c's class), padded with zeros up to the embedding dimension.
// Attributes are withheld entirely, so answering requires a zoom.
Observation initial_observation(const Scene& scene, const EmbeddingSpace& space);

// Cells whose centers lie inside the (closed) bbox; features are the plain
// mean of their content embeddings. An empty cover yields a Blank
// observation with all-zero features, never an error.
Observation execute_zoom(const Scene& scene, const Bbox& bbox, const EmbeddingSpace& space);

// Binary outcome reward: 1 iff the answer matches the ground truth.
// Throws std::out_of_range for an answer id outside the answer vocabulary.
int judge_answer(const Query& query, int answer, const Vocabulary& vocab);

// Exact bounds of a cell, used to turn a discrete cell choice into a
// paper-format bbox.
Bbox cell_bbox(const Scene& scene, int cell);

// Plain-text scene record: header `needlegrid-v1,N,seed,target_cell`, then
// one `index,object_class,color,size` line per cell.
void write_scene(std::ostream& out, const Scene& scene);
Scene read_scene(std::istream& in);

}  // namespace mapo
