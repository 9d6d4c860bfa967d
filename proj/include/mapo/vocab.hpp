#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapo {

// Word lists for the synthetic world. Answers are colors followed by sizes;
// labels are every (color, size, object) triple rendered as a 3-word string.
struct Vocabulary {
    std::vector<std::string> objects;
    std::vector<std::string> colors;
    std::vector<std::string> sizes;

    std::size_t num_objects() const { return objects.size(); }
    std::size_t num_colors() const { return colors.size(); }
    std::size_t num_sizes() const { return sizes.size(); }
    std::size_t num_answers() const { return colors.size() + sizes.size(); }
    std::size_t num_labels() const { return objects.size() * colors.size() * sizes.size(); }

    bool empty() const { return objects.empty() || colors.empty() || sizes.empty(); }

    // Answer ids: [0, C) are colors, [C, C+S) are sizes.
    int answer_id_for_color(int color) const { return color; }
    int answer_id_for_size(int size) const { return static_cast<int>(colors.size()) + size; }

    const std::string& answer_word(int answer) const {
        if (answer < 0 || static_cast<std::size_t>(answer) >= num_answers())
            throw std::out_of_range("answer id out of range");
        auto c = static_cast<std::size_t>(answer);
        return c < colors.size() ? colors[c] : sizes[c - colors.size()];
    }

    // Label id layout: ((color * S) + size) * O + object.
    int label_id(int object, int color, int size) const {
        return (color * static_cast<int>(sizes.size()) + size) * static_cast<int>(objects.size()) + object;
    }

    std::string label_string(int label) const {
        if (label < 0 || static_cast<std::size_t>(label) >= num_labels())
            throw std::out_of_range("label id out of range");
        int o = label % static_cast<int>(objects.size());
        int rest = label / static_cast<int>(objects.size());
        int s = rest % static_cast<int>(sizes.size());
        int c = rest / static_cast<int>(sizes.size());
        return colors[c] + " " + sizes[s] + " " + objects[o];
    }
};

inline Vocabulary default_vocabulary() {
    return Vocabulary{
        {"ball", "book", "cup", "hat", "key", "lamp", "shoe", "helmet"},
        {"red", "green", "blue", "yellow", "purple", "orange"},
        {"small", "medium", "large"},
    };
}

}  // namespace mapo
