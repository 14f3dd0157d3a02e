#pragma once

// Report envelope shared by every task, and its CSV and JSON encodings.

#include "fblab/config.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

namespace fblab {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kCodeVersion = "fblab 0.1.0";

using Cell = std::variant<std::int64_t, double, std::string>;

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row) {
        if (row.size() != columns.size())
            throw ComputeError("table '" + name + "': row width " + std::to_string(row.size()) + " != " +
                               std::to_string(columns.size()));
        rows.push_back(std::move(row));
    }
    friend bool operator==(const Table&, const Table&) = default;
};

enum class RunStatus { Success, StatisticalFlag };

struct Provenance {
    std::optional<std::uint64_t> seed;
    std::size_t n_samples = 0;
    double solver_rel_tol = 0.0;
    std::size_t dense_crossover = 0;
    double window_rel_tol = 0.0;
    std::string code_version = kCodeVersion;
    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ReportEnvelope {
    int schema_version = kSchemaVersion;
    std::string task;
    std::string config;  // canonical config text
    std::vector<Table> tables;
    nlohmann::json summary = nlohmann::json::object();
    std::vector<std::string> warnings;
    RunStatus status = RunStatus::Success;
    Provenance provenance;

    friend bool operator==(const ReportEnvelope&, const ReportEnvelope&) = default;
};

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json cell_to_json(const Cell& c) {
    return std::visit([](const auto& v) { return nlohmann::json(v); }, c);
}

inline Cell cell_from_json(const nlohmann::json& j) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw ConfigError("report cell must be a number or string");
}

inline nlohmann::json to_json(const ReportEnvelope& e) {
    nlohmann::json j;
    j["schema_version"] = e.schema_version;
    j["task"] = e.task;
    j["config"] = e.config;
    j["status"] = e.status == RunStatus::Success ? "success" : "statistical_flag";
    j["summary"] = e.summary;
    j["warnings"] = e.warnings;
    auto& p = j["provenance"];
    p["seed"] = e.provenance.seed ? nlohmann::json(*e.provenance.seed) : nlohmann::json(nullptr);
    p["n_samples"] = e.provenance.n_samples;
    p["solver_rel_tol"] = e.provenance.solver_rel_tol;
    p["dense_crossover"] = e.provenance.dense_crossover;
    p["window_rel_tol"] = e.provenance.window_rel_tol;
    p["code_version"] = e.provenance.code_version;
    j["tables"] = nlohmann::json::array();
    for (const auto& t : e.tables) {
        nlohmann::json tj;
        tj["name"] = t.name;
        tj["columns"] = t.columns;
        tj["rows"] = nlohmann::json::array();
        for (const auto& r : t.rows) {
            nlohmann::json rj = nlohmann::json::array();
            for (const auto& c : r) rj.push_back(cell_to_json(c));
            tj["rows"].push_back(rj);
        }
        j["tables"].push_back(tj);
    }
    return j;
}

inline ReportEnvelope envelope_from_json(const nlohmann::json& j) {
    try {
        ReportEnvelope e;
        e.schema_version = j.at("schema_version").get<int>();
        if (e.schema_version != kSchemaVersion)
            throw ConfigError("unsupported report schema version " + std::to_string(e.schema_version));
        e.task = j.at("task").get<std::string>();
        e.config = j.at("config").get<std::string>();
        const auto st = j.at("status").get<std::string>();
        if (st == "success")
            e.status = RunStatus::Success;
        else if (st == "statistical_flag")
            e.status = RunStatus::StatisticalFlag;
        else
            throw ConfigError("unknown report status '" + st + "'");
        e.summary = j.at("summary");
        e.warnings = j.at("warnings").get<std::vector<std::string>>();
        const auto& p = j.at("provenance");
        if (!p.at("seed").is_null()) e.provenance.seed = p.at("seed").get<std::uint64_t>();
        e.provenance.n_samples = p.at("n_samples").get<std::size_t>();
        e.provenance.solver_rel_tol = p.at("solver_rel_tol").get<double>();
        e.provenance.dense_crossover = p.at("dense_crossover").get<std::size_t>();
        e.provenance.window_rel_tol = p.at("window_rel_tol").get<double>();
        e.provenance.code_version = p.at("code_version").get<std::string>();
        for (const auto& tj : j.at("tables")) {
            Table t;
            t.name = tj.at("name").get<std::string>();
            t.columns = tj.at("columns").get<std::vector<std::string>>();
            for (const auto& rj : tj.at("rows")) {
                std::vector<Cell> row;
                for (const auto& c : rj) row.push_back(cell_from_json(c));
                t.add(std::move(row));
            }
            e.tables.push_back(std::move(t));
        }
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("malformed report: ") + ex.what());
    }
}

inline std::string dump_json(const ReportEnvelope& e) { return to_json(e).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_cell(const Cell& c) {
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
    const auto& s = std::get<std::string>(c);
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + "\"";
}

/// First line names the schema; the second is the column header.
inline std::string to_csv(const Table& t) {
    std::string out = "# schema " + t.name + "/" + std::to_string(kSchemaVersion) + "\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
    out += "\n";
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + csv_cell(r[i]);
        out += "\n";
    }
    return out;
}

enum class OutputFormat { Csv, Json, Both };

inline OutputFormat parse_format(const std::string& s) {
    if (s == "csv") return OutputFormat::Csv;
    if (s == "json") return OutputFormat::Json;
    if (s == "both") return OutputFormat::Both;
    throw ConfigError("unknown output format '" + s + "'");
}

/// Writes <table>.csv per table and/or <task>.json into `dir`. Returns the paths written.
inline std::vector<std::filesystem::path> emit(const ReportEnvelope& e, const std::filesystem::path& dir,
                                               OutputFormat fmt) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto write = [&](const std::filesystem::path& p, const std::string& text) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw ComputeError("cannot write '" + p.string() + "'");
        out << text;
        written.push_back(p);
    };
    if (fmt != OutputFormat::Json)
        for (const auto& t : e.tables) write(dir / (t.name + ".csv"), to_csv(t));
    if (fmt != OutputFormat::Csv) write(dir / (e.task + ".json"), dump_json(e));
    return written;
}

}  // namespace fblab
