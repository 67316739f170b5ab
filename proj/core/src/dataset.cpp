#include "ctb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "ctb/errors.hpp"
#include "json.hpp"

namespace ctb {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::pair<std::size_t, std::size_t> line_col_of(std::string_view text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

json parse_json(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
        const auto [line, col] = line_col_of(text, byte);
        std::ostringstream msg;
        msg << "parse error at line " << line << ", column " << col << " (offset " << byte
            << "): " << e.what();
        throw ParseError(msg.str());
    }
}

const json& require_field(const json& obj, const char* name, const std::string& ctx) {
    if (!obj.is_object()) throw ParseError("expected object for " + ctx);
    auto it = obj.find(name);
    if (it == obj.end()) {
        throw ParseError("missing field '" + std::string(name) + "' in " + ctx);
    }
    return *it;
}

std::string require_string(const json& obj, const char* name, const std::string& ctx) {
    const json& v = require_field(obj, name, ctx);
    if (!v.is_string()) {
        throw ParseError("field '" + std::string(name) + "' in " + ctx + " must be a string");
    }
    return v.get<std::string>();
}

std::int64_t require_int(const json& obj, const char* name, const std::string& ctx) {
    const json& v = require_field(obj, name, ctx);
    if (!v.is_number_integer()) {
        throw ParseError("field '" + std::string(name) + "' in " + ctx + " must be an integer");
    }
    return v.get<std::int64_t>();
}

Polygon parse_polygon(const json& v, const std::string& ctx) {
    if (!v.is_array()) throw ParseError("polygon in " + ctx + " must be an array of [x,y] pairs");
    Polygon poly;
    poly.vertices.reserve(v.size());
    for (const json& p : v) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
            throw ParseError("polygon vertex in " + ctx + " must be a [x,y] number pair");
        }
        poly.vertices.push_back(Point{p[0].get<double>(), p[1].get<double>()});
    }
    return poly;
}

IntegralUnit parse_unit(const json& v, const std::string& image_ctx) {
    if (!v.is_object()) throw ParseError("unit in " + image_ctx + " must be an object");
    IntegralUnit unit;
    unit.unit_id = require_string(v, "unit_id", "unit of " + image_ctx);
    const std::string ctx = "unit '" + unit.unit_id + "' of " + image_ctx;
    unit.polygon = parse_polygon(require_field(v, "polygon", ctx), ctx);
    if (auto it = v.find("text"); it != v.end()) {
        if (!it->is_string()) throw ParseError("field 'text' in " + ctx + " must be a string");
        unit.text = it->get<std::string>();
    }
    if (auto it = v.find("score"); it != v.end()) {
        if (!it->is_number()) throw ParseError("field 'score' in " + ctx + " must be a number");
        unit.score = it->get<double>();
    }
    return unit;
}

ContextualBlock parse_block(const json& v, const std::string& image_ctx) {
    if (!v.is_object()) throw ParseError("block in " + image_ctx + " must be an object");
    ContextualBlock block;
    block.block_id = require_string(v, "block_id", "block of " + image_ctx);
    const std::string ctx = "block '" + block.block_id + "' of " + image_ctx;
    const json& units = require_field(v, "units", ctx);
    if (!units.is_array()) throw ParseError("field 'units' in " + ctx + " must be an array");
    for (const json& u : units) {
        if (!u.is_string()) throw ParseError("unit reference in " + ctx + " must be a string");
        block.units.push_back(u.get<std::string>());
    }
    return block;
}

ImageAnnotation parse_image(const json& v, bool require_blocks) {
    if (!v.is_object()) throw ParseError("image entry must be an object");
    ImageAnnotation img;
    img.image_id = require_string(v, "image_id", "image entry");
    const std::string ctx = "image '" + img.image_id + "'";
    img.width = require_int(v, "width", ctx);
    img.height = require_int(v, "height", ctx);

    const json& units = require_field(v, "units", ctx);
    if (!units.is_array()) throw ParseError("field 'units' in " + ctx + " must be an array");
    for (const json& u : units) img.units.push_back(parse_unit(u, ctx));

    if (auto it = v.find("blocks"); it != v.end()) {
        if (!it->is_array()) throw ParseError("field 'blocks' in " + ctx + " must be an array");
        for (const json& b : *it) img.blocks.push_back(parse_block(b, ctx));
    } else if (require_blocks) {
        throw ParseError("missing field 'blocks' in " + ctx);
    }
    return img;
}

std::vector<ImageAnnotation> parse_image_array(const json& root, bool require_blocks) {
    const json& images = require_field(root, "images", "document root");
    if (!images.is_array()) throw ParseError("field 'images' at document root must be an array");
    std::vector<ImageAnnotation> out;
    out.reserve(images.size());
    for (const json& img : images) out.push_back(parse_image(img, require_blocks));
    return out;
}

void throw_first(const std::vector<Violation>& violations) {
    if (violations.empty()) return;
    const Violation& v = violations.front();
    std::string msg;
    if (!v.image_id.empty()) msg += "image '" + v.image_id + "' ";
    msg += "field '" + v.field + "': " + v.message;
    throw ValidationError(msg);
}

// Proper segment intersection (shared endpoints of adjacent edges excluded
// by the caller).
bool segments_cross(const Point& a, const Point& b, const Point& c, const Point& d) {
    auto orient = [](const Point& p, const Point& q, const Point& r) {
        const double v = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
        if (v > 0) return 1;
        if (v < 0) return -1;
        return 0;
    };
    const int o1 = orient(a, b, c);
    const int o2 = orient(a, b, d);
    const int o3 = orient(c, d, a);
    const int o4 = orient(c, d, b);
    return o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

bool polygon_is_simple(const Polygon& poly) {
    const auto& v = poly.vertices;
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            // Skip adjacent edges (they share an endpoint).
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n])) return false;
        }
    }
    return true;
}

void append_unit_violations(const ImageAnnotation& img, std::vector<Violation>& out) {
    std::unordered_set<std::string> unit_ids;
    for (const IntegralUnit& u : img.units) {
        if (!unit_ids.insert(u.unit_id).second) {
            out.push_back({img.image_id, "units", "duplicate unit_id '" + u.unit_id + "'"});
        }
        const auto& verts = u.polygon.vertices;
        if (verts.size() < 3) {
            out.push_back(
                {img.image_id, "units", "unit '" + u.unit_id + "' polygon has fewer than 3 vertices"});
            continue;
        }
        bool finite = true;
        for (const Point& p : verts) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) finite = false;
        }
        if (!finite) {
            out.push_back(
                {img.image_id, "units", "unit '" + u.unit_id + "' polygon has non-finite vertex"});
            continue;
        }
        for (const Point& p : verts) {
            if (p.x < 0 || p.x > static_cast<double>(img.width) || p.y < 0 ||
                p.y > static_cast<double>(img.height)) {
                out.push_back({img.image_id, "units",
                               "unit '" + u.unit_id + "' vertex outside image bounds"});
                break;
            }
        }
        if (polygon_area(u.polygon) <= 0.0) {
            out.push_back(
                {img.image_id, "units", "unit '" + u.unit_id + "' polygon has zero area"});
        } else if (!polygon_is_simple(u.polygon)) {
            out.push_back(
                {img.image_id, "units", "unit '" + u.unit_id + "' polygon is self-intersecting"});
        }
    }
}

void append_block_violations(const ImageAnnotation& img, bool require_partition,
                             std::vector<Violation>& out) {
    std::unordered_set<std::string> unit_ids;
    for (const IntegralUnit& u : img.units) unit_ids.insert(u.unit_id);

    std::unordered_set<std::string> block_ids;
    std::unordered_map<std::string, int> membership;
    for (const ContextualBlock& b : img.blocks) {
        if (!block_ids.insert(b.block_id).second) {
            out.push_back({img.image_id, "blocks", "duplicate block_id '" + b.block_id + "'"});
        }
        if (b.units.empty()) {
            out.push_back({img.image_id, "blocks", "block '" + b.block_id + "' is empty"});
        }
        std::unordered_set<std::string> seen;
        for (const std::string& uid : b.units) {
            if (!unit_ids.count(uid)) {
                out.push_back({img.image_id, "blocks",
                               "block '" + b.block_id + "' references missing unit '" + uid + "'"});
                continue;
            }
            if (!seen.insert(uid).second) {
                out.push_back({img.image_id, "blocks",
                               "block '" + b.block_id + "' repeats unit '" + uid + "'"});
                continue;
            }
            ++membership[uid];
        }
    }
    if (require_partition) {
        for (const IntegralUnit& u : img.units) {
            const int count = membership.count(u.unit_id) ? membership.at(u.unit_id) : 0;
            if (count == 0) {
                out.push_back(
                    {img.image_id, "blocks", "unit '" + u.unit_id + "' belongs to no block"});
            } else if (count > 1) {
                out.push_back(
                    {img.image_id, "blocks", "unit '" + u.unit_id + "' is in multiple blocks"});
            }
        }
    }
}

ordered_json unit_to_json(const IntegralUnit& u) {
    ordered_json j;
    j["unit_id"] = u.unit_id;
    ordered_json poly = ordered_json::array();
    for (const Point& p : u.polygon.vertices) poly.push_back({p.x, p.y});
    j["polygon"] = std::move(poly);
    if (u.text) j["text"] = *u.text;
    if (u.score) j["score"] = *u.score;
    return j;
}

ordered_json image_to_json(const ImageAnnotation& img) {
    ordered_json j;
    j["image_id"] = img.image_id;
    j["width"] = img.width;
    j["height"] = img.height;
    ordered_json units = ordered_json::array();
    for (const IntegralUnit& u : img.units) units.push_back(unit_to_json(u));
    j["units"] = std::move(units);
    ordered_json blocks = ordered_json::array();
    for (const ContextualBlock& b : img.blocks) {
        ordered_json bj;
        bj["block_id"] = b.block_id;
        bj["units"] = b.units;
        blocks.push_back(std::move(bj));
    }
    j["blocks"] = std::move(blocks);
    return j;
}

}  // namespace

Dataset parse_ground_truth(std::string_view bytes, bool validated) {
    const json root = parse_json(bytes);
    Dataset d;
    if (root.is_object()) {
        if (auto it = root.find("granularity"); it != root.end()) {
            if (!it->is_string()) throw ParseError("field 'granularity' must be a string");
            const std::string g = it->get<std::string>();
            if (g == "character") {
                d.granularity = Granularity::character;
            } else if (g == "word") {
                d.granularity = Granularity::word;
            } else {
                throw ParseError("field 'granularity' must be 'character' or 'word'");
            }
        }
    }
    d.images = parse_image_array(root, /*require_blocks=*/true);
    if (validated) throw_first(validate_dataset(d));
    return d;
}

PredictionSet parse_predictions(std::string_view bytes) {
    const json root = parse_json(bytes);
    PredictionSet p;
    p.images = parse_image_array(root, /*require_blocks=*/true);
    throw_first(validate_images(p.images, /*require_partition=*/true));
    return p;
}

std::vector<ImageAnnotation> parse_detections(std::string_view bytes) {
    const json root = parse_json(bytes);
    auto images = parse_image_array(root, /*require_blocks=*/false);
    for (ImageAnnotation& img : images) img.blocks.clear();
    throw_first(validate_images(images, /*require_partition=*/false));
    return images;
}

std::string serialize_ground_truth(const Dataset& d) {
    ordered_json root;
    root["granularity"] = d.granularity == Granularity::character ? "character" : "word";
    ordered_json images = ordered_json::array();
    for (const ImageAnnotation& img : d.images) images.push_back(image_to_json(img));
    root["images"] = std::move(images);
    return root.dump(2) + "\n";
}

std::string serialize_predictions(const PredictionSet& p) {
    ordered_json root;
    ordered_json images = ordered_json::array();
    for (const ImageAnnotation& img : p.images) images.push_back(image_to_json(img));
    root["images"] = std::move(images);
    return root.dump(2) + "\n";
}

std::vector<Violation> validate_images(const std::vector<ImageAnnotation>& images,
                                       bool require_partition) {
    std::vector<Violation> out;
    std::unordered_set<std::string> image_ids;
    for (const ImageAnnotation& img : images) {
        if (!image_ids.insert(img.image_id).second) {
            out.push_back({img.image_id, "image_id", "duplicate image_id"});
        }
        if (img.width <= 0 || img.height <= 0) {
            out.push_back({img.image_id, "width/height", "image dimensions must be positive"});
        }
        append_unit_violations(img, out);
        append_block_violations(img, require_partition, out);
    }
    return out;
}

std::vector<Violation> validate_dataset(const Dataset& d) {
    return validate_images(d.images, /*require_partition=*/true);
}

DatasetStats stats_from_counts(std::uint64_t n_integral, std::uint64_t n_block,
                               std::uint64_t n_image) {
    if (n_image == 0) throw ValidationError("empty dataset");
    DatasetStats s;
    s.n_integral = n_integral;
    s.n_block = n_block;
    s.n_image = n_image;
    s.integral_per_block =
        n_block == 0 ? 0.0 : static_cast<double>(n_integral) / static_cast<double>(n_block);
    s.integral_per_image = static_cast<double>(n_integral) / static_cast<double>(n_image);
    s.block_per_image = static_cast<double>(n_block) / static_cast<double>(n_image);
    return s;
}

DatasetStats compute_stats(const Dataset& d) {
    if (d.images.empty()) throw ValidationError("empty dataset");
    std::uint64_t n_integral = 0, n_block = 0;
    for (const ImageAnnotation& img : d.images) {
        n_integral += img.units.size();
        n_block += img.blocks.size();
    }
    return stats_from_counts(n_integral, n_block, d.images.size());
}

std::string format_stats(const DatasetStats& s) {
    char buf[64];
    std::ostringstream out;
    out << "n_integral: " << s.n_integral << "\n";
    out << "n_block: " << s.n_block << "\n";
    out << "n_image: " << s.n_image << "\n";
    std::snprintf(buf, sizeof(buf), "%.2f", s.integral_per_block);
    out << "integral_per_block: " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.2f", s.integral_per_image);
    out << "integral_per_image: " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.2f", s.block_per_image);
    out << "block_per_image: " << buf << "\n";
    return out.str();
}

}  // namespace ctb
