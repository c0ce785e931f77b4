#include "trackbench/core/corpus.hpp"

#include "trackbench/core/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace trackbench {

using nlohmann::json;

namespace {

constexpr char const * kFormatTag = "trackbench-scene-corpus";

double finite(double v, std::string const & scene_id, char const * field) {
    if (!std::isfinite(v)) {
        throw InvariantError("scene '" + scene_id + "': non-finite value in " + field);
    }
    return v;
}

json encode_points(std::vector<Vec2> const & pts, std::string const & id, char const * field) {
    json out = json::array();
    for (Vec2 p : pts) {
        out.push_back({finite(p.x, id, field), finite(p.y, id, field)});
    }
    return out;
}

json encode_polys(std::vector<std::vector<Vec2>> const & polys, std::string const & id, char const * field) {
    json out = json::array();
    for (auto const & poly : polys) {
        out.push_back(encode_points(poly, id, field));
    }
    return out;
}

/// Decoding context that tags every failure with the scene id and field.
struct Reader {
    std::string scene_id;

    [[noreturn]] void fail(std::string const & field, std::string const & what) const {
        throw FormatError("scene '" + scene_id + "' field '" + field + "': " + what);
    }

    json const & member(json const & obj, char const * key) const {
        if (!obj.is_object() || !obj.contains(key)) {
            fail(key, "missing");
        }
        return obj.at(key);
    }

    double number(json const & v, std::string const & field) const {
        if (!v.is_number()) {
            fail(field, "expected a number");
        }
        return v.get<double>();
    }

    int integer(json const & v, std::string const & field) const {
        if (!v.is_number_integer()) {
            fail(field, "expected an integer");
        }
        return v.get<int>();
    }

    std::vector<Vec2> points(json const & v, std::string const & field) const {
        if (!v.is_array()) {
            fail(field, "expected an array of points");
        }
        std::vector<Vec2> out;
        out.reserve(v.size());
        for (auto const & p : v) {
            if (!p.is_array() || p.size() != 2) {
                fail(field, "point must be [x, y]");
            }
            out.push_back({number(p[0], field), number(p[1], field)});
        }
        return out;
    }

    std::vector<std::vector<Vec2>> polys(json const & v, std::string const & field) const {
        if (!v.is_array()) {
            fail(field, "expected an array");
        }
        std::vector<std::vector<Vec2>> out;
        for (auto const & p : v) {
            out.push_back(points(p, field));
        }
        return out;
    }
};

} // namespace

std::string encode_scene(Scene const & scene) {
    std::string const & id = scene.scene_id;
    json j;
    j["scene_id"] = id;
    j["duration"] = scene.duration;
    j["frame_rate"] = finite(scene.frame_rate, id, "frame_rate");
    json sdv = json::array();
    for (auto const & p : scene.sdv_trajectory) {
        sdv.push_back({finite(p.x, id, "sdv"), finite(p.y, id, "sdv"), finite(p.heading, id, "sdv")});
    }
    j["sdv"] = std::move(sdv);
    json agents = json::array();
    for (auto const & [agent_id, track] : scene.agents) {
        json dets = json::array();
        for (auto const & d : track.detections) {
            dets.push_back({d.timestep, finite(d.center.x, id, "detection"), finite(d.center.y, id, "detection"),
                            finite(d.center.heading, id, "detection"), finite(d.extent.length, id, "detection"),
                            finite(d.extent.width, id, "detection"), finite(d.speed, id, "detection")});
        }
        agents.push_back({{"id", agent_id}, {"detections", std::move(dets)}});
    }
    j["agents"] = std::move(agents);
    j["map"] = {
        {"drivable", encode_polys(scene.map.drivable_polygons, id, "map.drivable")},
        {"lanes", encode_polys(scene.map.lanes, id, "map.lanes")},
        {"crosswalks", encode_polys(scene.map.crosswalk_polygons, id, "map.crosswalks")},
    };
    return j.dump();
}

Scene decode_scene(std::string const & line) {
    json j;
    try {
        j = json::parse(line);
    } catch (json::parse_error const & e) {
        throw FormatError(std::string("malformed scene record: ") + e.what());
    }
    Reader r;
    if (j.is_object() && j.contains("scene_id") && j["scene_id"].is_string()) {
        r.scene_id = j["scene_id"].get<std::string>();
    } else {
        r.scene_id = "<unknown>";
        r.fail("scene_id", "missing or not a string");
    }
    Scene s;
    s.scene_id = r.scene_id;
    s.duration = r.integer(r.member(j, "duration"), "duration");
    s.frame_rate = r.number(r.member(j, "frame_rate"), "frame_rate");
    for (auto const & p : r.member(j, "sdv")) {
        if (!p.is_array() || p.size() != 3) {
            r.fail("sdv", "pose must be [x, y, heading]");
        }
        s.sdv_trajectory.push_back({r.number(p[0], "sdv"), r.number(p[1], "sdv"), r.number(p[2], "sdv")});
    }
    for (auto const & a : r.member(j, "agents")) {
        Track track;
        if (!r.member(a, "id").is_number_integer()) {
            r.fail("agents.id", "expected an integer");
        }
        track.id = a["id"].get<AgentId>();
        for (auto const & d : r.member(a, "detections")) {
            if (!d.is_array() || d.size() != 7) {
                r.fail("agents.detections", "detection must have 7 values");
            }
            Detection det;
            det.timestep = r.integer(d[0], "detection.timestep");
            det.center = {r.number(d[1], "detection.x"), r.number(d[2], "detection.y"), r.number(d[3], "detection.heading")};
            det.extent = {r.number(d[4], "detection.length"), r.number(d[5], "detection.width")};
            det.speed = r.number(d[6], "detection.speed");
            track.detections.push_back(det);
        }
        if (!s.agents.emplace(track.id, track).second) {
            r.fail("agents.id", "duplicate agent id " + std::to_string(track.id));
        }
    }
    json const & map = r.member(j, "map");
    s.map.drivable_polygons = r.polys(r.member(map, "drivable"), "map.drivable");
    s.map.lanes = r.polys(r.member(map, "lanes"), "map.lanes");
    s.map.crosswalk_polygons = r.polys(r.member(map, "crosswalks"), "map.crosswalks");
    validate(s);
    return s;
}

void write_corpus(std::vector<Scene> const & scenes, std::filesystem::path const & path) {
    std::string body;
    for (auto const & scene : scenes) {
        body += encode_scene(scene);
        body += '\n';
    }
    json header{{"format", kFormatTag},
                {"format_version", kCorpusFormatVersion},
                {"frame_rate", kDefaultFrameRate},
                {"scene_count", scenes.size()}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open corpus for writing: " + path.string());
    }
    out << header.dump() << '\n' << body;
    out.flush();
    if (!out) {
        throw Error("failed writing corpus: " + path.string());
    }
}

std::vector<Scene> read_corpus(std::filesystem::path const & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open corpus: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("corpus is empty: " + path.string());
    }
    json header;
    try {
        header = json::parse(line);
    } catch (json::parse_error const & e) {
        throw FormatError(std::string("malformed corpus header: ") + e.what());
    }
    if (!header.is_object() || header.value("format", "") != kFormatTag) {
        throw FormatError("not a scene corpus: " + path.string());
    }
    if (!header.contains("format_version") || header["format_version"] != kCorpusFormatVersion) {
        throw FormatError("unsupported corpus format_version " +
                          (header.contains("format_version") ? header["format_version"].dump() : "<missing>") +
                          " (expected " + std::to_string(kCorpusFormatVersion) + ")");
    }
    if (!header.contains("scene_count") || !header["scene_count"].is_number_unsigned()) {
        throw FormatError("corpus header lacks scene_count");
    }
    auto const expected = header["scene_count"].get<std::size_t>();
    std::vector<Scene> scenes;
    scenes.reserve(expected);
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        scenes.push_back(decode_scene(line));
    }
    if (scenes.size() != expected) {
        throw FormatError("corpus truncated: header declares " + std::to_string(expected) + " scenes, found " +
                          std::to_string(scenes.size()));
    }
    return scenes;
}

} // namespace trackbench
