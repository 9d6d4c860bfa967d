#include "mapo/env.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mapo {

Scene generate_scene(std::uint64_t seed, int grid_size, int target_class,
                     const Vocabulary& vocab) {
    if (grid_size < 2) throw std::invalid_argument("generate_scene: grid_size must be >= 2");
    if (vocab.empty()) throw std::invalid_argument("generate_scene: empty vocabulary");
    if (vocab.num_objects() < 2)
        throw std::invalid_argument("generate_scene: need at least 2 object classes");
    if (target_class < 0 || static_cast<std::size_t>(target_class) >= vocab.num_objects())
        throw std::invalid_argument("generate_scene: target class out of range");

    Scene scene;
    scene.seed = seed;
    scene.grid_size = grid_size;
    Rng rng(mix_seed(seed, 0x5ce7eULL));
    int n_cells = grid_size * grid_size;
    scene.target_cell = static_cast<int>(rng.uniform_int(n_cells));
    scene.cells.resize(n_cells);
    for (int c = 0; c < n_cells; ++c) {
        CellContent& cell = scene.cells[c];
        if (c == scene.target_cell) {
            cell.object_class = target_class;
        } else {
            // Distractors drawn i.i.d. over the non-target classes.
            int k = static_cast<int>(rng.uniform_int(vocab.num_objects() - 1));
            cell.object_class = k >= target_class ? k + 1 : k;
        }
        cell.color = static_cast<int>(rng.uniform_int(vocab.num_colors()));
        cell.size = static_cast<int>(rng.uniform_int(vocab.num_sizes()));
    }
    return scene;
}

Query make_query(const Scene& scene, std::uint64_t seed, const Vocabulary& vocab) {
    const CellContent& target = scene.cells.at(scene.target_cell);
    Rng rng(mix_seed(seed, 0x9e44ULL));
    Query q;
    q.target_class = target.object_class;
    if (rng.uniform_int(2) == 0) {
        q.asked_attribute = Query::Attribute::Color;
        q.ground_truth = vocab.answer_id_for_color(target.color);
    } else {
        q.asked_attribute = Query::Attribute::Size;
        q.ground_truth = vocab.answer_id_for_size(target.size);
    }
    return q;
}

Observation initial_observation(const Scene& scene, const EmbeddingSpace& space) {
    int n_cells = scene.num_cells();
    if (static_cast<std::size_t>(n_cells) > space.dim())
        throw std::invalid_argument("initial_observation: grid too large for d_obs");
    Observation obs;
    obs.kind = ObsKind::Coarse;
    obs.features.assign(space.dim(), 0.0);
    double denom = static_cast<double>(space.vocab().num_objects());
    for (int c = 0; c < n_cells; ++c)
        obs.features[c] = (scene.cells[c].object_class + 1) / denom;
    obs.covered_cells.resize(n_cells);
    for (int c = 0; c < n_cells; ++c) obs.covered_cells[c] = c;
    return obs;
}

Observation execute_zoom(const Scene& scene, const Bbox& bbox, const EmbeddingSpace& space) {
    if (!bbox.valid()) throw std::invalid_argument("execute_zoom: invalid bbox");
    Observation obs;
    int n = scene.grid_size;
    for (int c = 0; c < scene.num_cells(); ++c) {
        double cx = (c % n + 0.5) / n;
        double cy = (c / n + 0.5) / n;
        if (bbox.x1 <= cx && cx <= bbox.x2 && bbox.y1 <= cy && cy <= bbox.y2)
            obs.covered_cells.push_back(c);
    }
    obs.features.assign(space.dim(), 0.0);
    if (obs.covered_cells.empty()) {
        obs.kind = ObsKind::Blank;
        return obs;
    }
    obs.kind = ObsKind::Patch;
    for (int c : obs.covered_cells) {
        auto e = space.content_embedding(scene.cells[c]);
        for (std::size_t i = 0; i < obs.features.size(); ++i) obs.features[i] += e[i];
    }
    double inv = 1.0 / static_cast<double>(obs.covered_cells.size());
    for (auto& x : obs.features) x *= inv;
    return obs;
}

int judge_answer(const Query& query, int answer, const Vocabulary& vocab) {
    if (answer < 0 || static_cast<std::size_t>(answer) >= vocab.num_answers())
        throw std::out_of_range("judge_answer: answer id out of range");
    return answer == query.ground_truth ? 1 : 0;
}

Bbox cell_bbox(const Scene& scene, int cell) {
    if (cell < 0 || cell >= scene.num_cells())
        throw std::out_of_range("cell_bbox: cell index out of range");
    int n = scene.grid_size;
    Bbox b;
    b.x1 = static_cast<double>(cell % n) / n;
    b.y1 = static_cast<double>(cell / n) / n;
    b.x2 = static_cast<double>(cell % n + 1) / n;
    b.y2 = static_cast<double>(cell / n + 1) / n;
    return b;
}

void write_scene(std::ostream& out, const Scene& scene) {
    out << "needlegrid-v1," << scene.grid_size << "," << scene.seed << "," << scene.target_cell
        << "\n";
    for (int c = 0; c < scene.num_cells(); ++c) {
        const CellContent& cell = scene.cells[c];
        out << c << "," << cell.object_class << "," << cell.color << "," << cell.size << "\n";
    }
}

Scene read_scene(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_scene: empty input");
    std::istringstream header(line);
    std::string magic;
    char comma;
    if (!std::getline(header, magic, ',') || magic != "needlegrid-v1")
        throw std::runtime_error("read_scene: bad header magic");
    Scene scene;
    if (!(header >> scene.grid_size >> comma >> scene.seed >> comma >> scene.target_cell))
        throw std::runtime_error("read_scene: bad header fields");
    scene.cells.resize(scene.num_cells());
    for (int c = 0; c < scene.num_cells(); ++c) {
        if (!std::getline(in, line)) throw std::runtime_error("read_scene: truncated record");
        std::istringstream row(line);
        int idx;
        CellContent& cell = scene.cells[c];
        if (!(row >> idx >> comma >> cell.object_class >> comma >> cell.color >> comma >>
              cell.size) ||
            idx != c)
            throw std::runtime_error("read_scene: bad cell line " + std::to_string(c));
    }
    return scene;
}

}  // namespace mapo
