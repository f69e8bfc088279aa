#pragma once

// JSON Lines dataset format.
//
//   line 1:  {"context_marks": ["c0", "c1", ...]}                     (optional)
//   line k:  {"id": "s1", "span": [0, 1000],
//             "events": [{"t": 1.5, "mark": "x"}, ...],
//             "labels": {"commission": [...], "removed": [...]}}   (labels optional)
//
// Doubles are written in shortest round-trip form.

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include <ppod/events.hpp>

namespace ppod {

using json = nlohmann::json;

namespace detail {

inline json to_json(const labeled_sequence& ls) {
    const auto& s = ls.sequence;
    json events = json::array();
    for (const auto& e: s.events) events.push_back({{"t", e.t}, {"mark", e.mark}});
    json j = {{"id", s.id}, {"span", {s.span.begin, s.span.end}}, {"events", std::move(events)}};
    if (ls.labels) {
        j["labels"] = {{"commission", ls.labels->commission}, {"removed", ls.labels->removed}};
    }
    return j;
}

inline double number_field(const json& j, std::size_t line, const char* what) {
    if (!j.is_number()) throw parse_error(line, std::string(what) + " must be a number");
    return j.get<double>();
}

inline std::vector<double> number_list(const json& j, std::size_t line, const char* what) {
    if (!j.is_array()) throw parse_error(line, std::string(what) + " must be an array");
    std::vector<double> out;
    for (const auto& v: j) out.push_back(number_field(v, line, what));
    return out;
}

inline labeled_sequence sequence_from_json(const json& j, std::size_t line) {
    if (!j.is_object()) throw parse_error(line, "sequence record must be an object");
    labeled_sequence ls;
    auto& s = ls.sequence;
    if (!j.contains("id") || !j["id"].is_string()) throw parse_error(line, "missing string field \"id\"");
    s.id = j["id"].get<std::string>();
    if (!j.contains("span") || !j["span"].is_array() || j["span"].size() != 2) {
        throw parse_error(line, "\"span\" must be [begin, end]");
    }
    s.span = {number_field(j["span"][0], line, "span"), number_field(j["span"][1], line, "span")};
    if (!j.contains("events") || !j["events"].is_array()) throw parse_error(line, "missing array field \"events\"");
    for (const auto& e: j["events"]) {
        if (!e.is_object() || !e.contains("t") || !e.contains("mark") || !e["mark"].is_string()) {
            throw parse_error(line, "event must be {\"t\": number, \"mark\": string}");
        }
        s.events.push_back({number_field(e["t"], line, "t"), e["mark"].get<std::string>()});
    }
    if (j.contains("labels") && !j["labels"].is_null()) {
        const auto& l = j["labels"];
        outlier_labels labels;
        if (l.contains("commission")) labels.commission = number_list(l["commission"], line, "commission");
        if (l.contains("removed")) labels.removed = number_list(l["removed"], line, "removed");
        ls.labels = std::move(labels);
    }
    return ls;
}

} // namespace detail

inline void write_dataset(std::ostream& out, const dataset& data) {
    out << json{{"context_marks", data.context_marks}}.dump() << '\n';
    for (const auto& ls: data.sequences) out << detail::to_json(ls).dump() << '\n';
}

inline dataset read_dataset(std::istream& in) {
    dataset data;
    std::string text;
    std::size_t line = 0;
    bool first = true;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
        }
        catch (const json::parse_error& e) {
            throw parse_error(line, std::string("invalid JSON: ") + e.what());
        }
        // The header is optional; without it no context marks are declared.
        if (std::exchange(first, false) && j.is_object() && j.contains("context_marks")) {
            if (!j["context_marks"].is_array()) throw parse_error(line, "\"context_marks\" must be an array");
            for (const auto& m: j["context_marks"]) {
                if (!m.is_string()) throw parse_error(line, "context marks must be strings");
                data.context_marks.push_back(m.get<std::string>());
            }
            try {
                validate_context_marks(data.context_marks);
            }
            catch (const validation_error& e) {
                throw parse_error(line, e.what());
            }
            continue;
        }
        auto ls = detail::sequence_from_json(j, line);
        try {
            validate_sequence(ls.sequence, data.context_marks);
            if (ls.labels) validate_labels(ls.sequence, *ls.labels);
            for (const auto& other: data.sequences) {
                if (other.sequence.id == ls.sequence.id) throw validation_error("duplicate sequence id '" + ls.sequence.id + "'");
            }
        }
        catch (const parse_error&) {
            throw;
        }
        catch (const validation_error& e) {
            throw parse_error(line, e.what());
        }
        data.sequences.push_back(std::move(ls));
    }
    return data;
}

inline dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open dataset '" + path.string() + "'");
    return read_dataset(in);
}

inline void save_dataset(const std::filesystem::path& path, const dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write dataset '" + path.string() + "'");
    write_dataset(out, data);
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::string dataset_to_string(const dataset& data) {
    std::ostringstream os;
    write_dataset(os, data);
    return os.str();
}

} // namespace ppod
