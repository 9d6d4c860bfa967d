#pragma once

#include <string>

#include "mapo/expected.hpp"
#include "mapo/verifier.hpp"

namespace mapo {

// Relative-coordinate bounding box, top-left (x1,y1) to bottom-right (x2,y2).
struct Bbox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    bool valid() const { return 0.0 <= x1 && x1 < x2 && x2 <= 1.0 && 0.0 <= y1 && y1 < y2 && y2 <= 1.0; }
    bool operator==(const Bbox&) const = default;
};

inline constexpr const char* kZoomToolName = "image_zoom_in_tool";

struct ToolCall {
    std::string name;  // must equal kZoomToolName
    int image_idx = 1; // 1-based index into the images seen so far
    Bbox bbox;
    std::string label; // non-empty, at most kMaxLabelTokens tokens

    bool operator==(const ToolCall&) const = default;
};

// Each failure mode gets its own kind so the trainer can attribute it.
enum class ProtocolErrorKind {
    MissingTags,      // no <tool_call>...</tool_call> block
    MalformedJson,    // block content is not a JSON object
    UnknownTool,      // "name" is not the zoom tool
    MissingField,     // a required argument is absent
    BadFieldType,     // an argument has the wrong JSON type
    BboxGrammar,      // bbox string does not match <box>(f,f),(f,f)</box>
    BboxInvalid,      // coordinates parse but violate the Bbox invariants
    LabelInvalid,     // empty label or over the token cap
};

struct ProtocolError {
    ProtocolErrorKind kind;
    std::string message;
};

const char* protocol_error_name(ProtocolErrorKind kind);

// Grammar: `<box>(x1,y1),(x2,y2)</box>` where each coordinate is a decimal
// literal (optional sign, digits, optional fraction). No whitespace.
// Grammar mismatch and invariant violation are distinct error kinds.
Expected<Bbox, ProtocolError> parse_bbox(const std::string& text);

// Extracts the JSON object between <tool_call> and </tool_call>, validates
// the tool name, the required arguments, and the bbox grammar. Total: every
// input yields either a ToolCall or a classified error.
Expected<ToolCall, ProtocolError> parse_tool_call(const std::string& text);

// Canonical single-line form: fixed field order (name, image_idx, bbox_2d,
// label), minimal whitespace, coordinates at 6 decimal places.
// parse_tool_call(serialize_tool_call(tc)) == tc for any tc whose
// coordinates lie on the 1e-6 grid; serialization of an invariant-violating
// ToolCall is refused.
Expected<std::string, ProtocolError> serialize_tool_call(const ToolCall& tc);

// Canonical bbox rendering used inside the bbox_2d argument string.
std::string format_bbox(const Bbox& bbox);

}  // namespace mapo
