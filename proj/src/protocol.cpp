#include "mapo/protocol.hpp"

#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mapo {

namespace {

// Consumes a decimal literal `-?[0-9]+(\.[0-9]+)?` at position i; returns
// false on mismatch. No exponents, no leading '.', no whitespace.
bool consume_decimal(const std::string& s, std::size_t& i, double& out) {
    std::size_t start = i;
    if (i < s.size() && s[i] == '-') ++i;
    std::size_t digits = i;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
    if (i == digits) return false;
    if (i < s.size() && s[i] == '.') {
        ++i;
        std::size_t frac = i;
        while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
        if (i == frac) return false;
    }
    out = std::stod(s.substr(start, i - start));
    return true;
}

bool consume_literal(const std::string& s, std::size_t& i, const char* lit) {
    std::size_t j = i;
    for (const char* p = lit; *p; ++p, ++j) {
        if (j >= s.size() || s[j] != *p) return false;
    }
    i = j;
    return true;
}

int count_tokens(const std::string& s) {
    std::istringstream is(s);
    std::string tok;
    int n = 0;
    while (is >> tok) ++n;
    return n;
}

}  // namespace

const char* protocol_error_name(ProtocolErrorKind kind) {
    switch (kind) {
        case ProtocolErrorKind::MissingTags: return "missing_tags";
        case ProtocolErrorKind::MalformedJson: return "malformed_json";
        case ProtocolErrorKind::UnknownTool: return "unknown_tool";
        case ProtocolErrorKind::MissingField: return "missing_field";
        case ProtocolErrorKind::BadFieldType: return "bad_field_type";
        case ProtocolErrorKind::BboxGrammar: return "bbox_grammar";
        case ProtocolErrorKind::BboxInvalid: return "bbox_invalid";
        case ProtocolErrorKind::LabelInvalid: return "label_invalid";
    }
    return "unknown";
}

Expected<Bbox, ProtocolError> parse_bbox(const std::string& text) {
    Bbox b;
    std::size_t i = 0;
    bool ok = consume_literal(text, i, "<box>(") && consume_decimal(text, i, b.x1) &&
              consume_literal(text, i, ",") && consume_decimal(text, i, b.y1) &&
              consume_literal(text, i, "),(") && consume_decimal(text, i, b.x2) &&
              consume_literal(text, i, ",") && consume_decimal(text, i, b.y2) &&
              consume_literal(text, i, ")</box>") && i == text.size();
    if (!ok)
        return ProtocolError{ProtocolErrorKind::BboxGrammar,
                             "expected <box>(x1,y1),(x2,y2)</box>"};
    if (!b.valid())
        return ProtocolError{ProtocolErrorKind::BboxInvalid,
                             "coordinates must satisfy 0<=x1<x2<=1 and 0<=y1<y2<=1"};
    return b;
}

Expected<ToolCall, ProtocolError> parse_tool_call(const std::string& text) {
    const std::string open = "<tool_call>";
    const std::string close = "</tool_call>";
    auto lo = text.find(open);
    if (lo == std::string::npos)
        return ProtocolError{ProtocolErrorKind::MissingTags, "no <tool_call> tag"};
    auto hi = text.find(close, lo + open.size());
    if (hi == std::string::npos)
        return ProtocolError{ProtocolErrorKind::MissingTags, "no closing </tool_call> tag"};

    std::string body = text.substr(lo + open.size(), hi - lo - open.size());
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        return ProtocolError{ProtocolErrorKind::MalformedJson, "tool call body is not a JSON object"};

    if (!j.contains("name"))
        return ProtocolError{ProtocolErrorKind::MissingField, "missing field: name"};
    if (!j["name"].is_string())
        return ProtocolError{ProtocolErrorKind::BadFieldType, "name must be a string"};
    if (j["name"].get<std::string>() != kZoomToolName)
        return ProtocolError{ProtocolErrorKind::UnknownTool,
                             "unknown tool: " + j["name"].get<std::string>()};

    if (!j.contains("arguments"))
        return ProtocolError{ProtocolErrorKind::MissingField, "missing field: arguments"};
    const auto& args = j["arguments"];
    if (!args.is_object())
        return ProtocolError{ProtocolErrorKind::BadFieldType, "arguments must be an object"};

    for (const char* field : {"image_idx", "bbox_2d", "label"}) {
        if (!args.contains(field))
            return ProtocolError{ProtocolErrorKind::MissingField,
                                 std::string("missing field: ") + field};
    }

    ToolCall tc;
    tc.name = kZoomToolName;
    if (!args["image_idx"].is_number_integer())
        return ProtocolError{ProtocolErrorKind::BadFieldType, "image_idx must be an integer"};
    tc.image_idx = args["image_idx"].get<int>();
    if (tc.image_idx < 1)
        return ProtocolError{ProtocolErrorKind::BadFieldType, "image_idx must be >= 1"};

    if (!args["bbox_2d"].is_string())
        return ProtocolError{ProtocolErrorKind::BadFieldType, "bbox_2d must be a string"};
    auto bbox = parse_bbox(args["bbox_2d"].get<std::string>());
    if (!bbox.ok()) return bbox.error();
    tc.bbox = bbox.value();

    if (!args["label"].is_string())
        return ProtocolError{ProtocolErrorKind::BadFieldType, "label must be a string"};
    tc.label = args["label"].get<std::string>();
    int tokens = count_tokens(tc.label);
    if (tokens == 0 || tokens > kMaxLabelTokens)
        return ProtocolError{ProtocolErrorKind::LabelInvalid,
                             "label must be 1.." + std::to_string(kMaxLabelTokens) + " tokens"};

    return tc;
}

std::string format_bbox(const Bbox& bbox) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "<box>(%.6f,%.6f),(%.6f,%.6f)</box>", bbox.x1, bbox.y1,
                  bbox.x2, bbox.y2);
    return buf;
}

Expected<std::string, ProtocolError> serialize_tool_call(const ToolCall& tc) {
    if (tc.name != kZoomToolName)
        return ProtocolError{ProtocolErrorKind::UnknownTool, "refusing to serialize unknown tool"};
    if (tc.image_idx < 1)
        return ProtocolError{ProtocolErrorKind::BadFieldType, "image_idx must be >= 1"};
    if (!tc.bbox.valid())
        return ProtocolError{ProtocolErrorKind::BboxInvalid, "bbox violates invariants"};
    int tokens = count_tokens(tc.label);
    if (tokens == 0 || tokens > kMaxLabelTokens)
        return ProtocolError{ProtocolErrorKind::LabelInvalid, "label violates invariants"};

    nlohmann::ordered_json j;
    j["name"] = tc.name;
    j["arguments"] = nlohmann::ordered_json{
        {"image_idx", tc.image_idx},
        {"bbox_2d", format_bbox(tc.bbox)},
        {"label", tc.label},
    };
    return "<tool_call>" + j.dump() + "</tool_call>";
}

}  // namespace mapo
