#include <fstream>
#include <regex>
#include <set>

#include "coevolve/experiment.hpp"

namespace coevolve {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const json& j, const char* field, const std::string& case_name) {
    if (!j.contains(field) || !j.at(field).is_string())
        throw ManifestError("case '" + case_name + "': missing string field '" + field + "'");
    fs::path p = j.at(field).get<std::string>();
    if (p.is_relative()) p = base / p;
    p = p.lexically_normal();
    std::ifstream probe(p);
    if (!fs::is_regular_file(p) || !probe)
        throw ManifestError("case '" + case_name + "': " + field + " " + p.string() + " is not a readable file");
    return p;
}

}  // namespace

CaseManifest parse_manifest(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ManifestError("manifest must be a JSON object");
    CaseManifest m;
    try {
        if (j.contains("defaults")) m.prompt = prompt_config_from_json(j.at("defaults"));
        m.repetitions = j.value("repetitions", m.repetitions);
        if (m.repetitions == 0) throw ManifestError("repetitions must be at least 1");
        if (j.contains("provider")) m.provider = j.at("provider");
        if (j.contains("transcripts")) {
            fs::path t = j.at("transcripts").get<std::string>();
            m.transcripts = (t.is_relative() ? base_dir / t : t).lexically_normal();
        }
        m.provider_id = j.value("provider_id", std::string{});
    } catch (const json::exception& e) {
        throw ManifestError(std::string("bad manifest field: ") + e.what());
    } catch (const ManifestError&) {
        throw;
    } catch (const Error& e) {
        throw ManifestError(e.what());
    }

    static const std::regex kName("[A-Za-z0-9._-]+");
    std::set<std::string> names;
    const json cases = j.value("cases", json::array());
    if (!cases.is_array()) throw ManifestError("'cases' must be an array");
    for (const auto& c : cases) {
        CaseEntry e;
        e.name = c.value("name", std::string{});
        if (!std::regex_match(e.name, kName) || e.name == "." || e.name == "..")
            throw ManifestError("case name '" + e.name + "' must be non-empty and use only letters, digits, . _ -");
        if (!names.insert(e.name).second) throw ManifestError("duplicate case name '" + e.name + "'");
        e.grammar_old_path = resolve(base_dir, c, "grammar_old_path", e.name);
        e.grammar_new_path = resolve(base_dir, c, "grammar_new_path", e.name);
        e.instance1_path = resolve(base_dir, c, "instance1_path", e.name);
        if (c.contains("instance2_path") && !c.at("instance2_path").is_null())
            e.instance2_path = resolve(base_dir, c, "instance2_path", e.name);
        e.notes = c.value("notes", std::string{});
        m.cases.push_back(std::move(e));
    }
    return m;
}

CaseManifest load_manifest(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ManifestError("cannot read manifest " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ManifestError(file.string() + ": " + e.what());
    }
    return parse_manifest(j, fs::absolute(file).parent_path());
}

Backend backend_from_string(const std::string& name) {
    if (name == "http") return Backend::Http;
    if (name == "replay") return Backend::Replay;
    if (name == "rules") return Backend::Rules;
    throw Error("unknown backend '" + name + "' (expected http, replay or rules)");
}

std::string_view to_string(Backend backend) {
    switch (backend) {
        case Backend::Http: return "http";
        case Backend::Replay: return "replay";
        case Backend::Rules: return "rules";
    }
    return "?";
}

}  // namespace coevolve
