#pragma once

#include <cstdint>
#include <vector>

namespace mapo {

// One cell of the NeedleGrid: an object class plus the two fine-grained
// attributes that only become visible after zooming in.
struct CellContent {
    int object_class = 0;
    int color = 0;
    int size = 0;

    bool operator==(const CellContent&) const = default;
};

enum class ObsKind { Coarse, Patch, Blank };

struct Observation {
    ObsKind kind = ObsKind::Blank;
    std::vector<double> features;    // dimension d_obs; all-zero for Blank
    std::vector<int> covered_cells;  // empty for Blank

    bool operator==(const Observation&) const = default;
};

}  // namespace mapo
