#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "relgraph/csv.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/relational.hpp"

namespace relgraph {

inline constexpr const char* kDefaultNullToken = "__NULL__";

// Manifest layout:
//   { "name": str,
//     "tables": [ { "name": str, "file": relpath,
//                   "columns": [ {"name","dtype","nullable"} ],
//                   "primary_key": str? } ],
//     "foreign_keys": [ {"from_table","from_column","to_table","to_column"} ] }
// CSV files are UTF-8 with a header row matching the manifest column order.

inline RelationalDatabase load_database(const std::string& manifest_path,
                                        const std::string& null_token = kDefaultNullToken) {
    namespace fs = std::filesystem;
    std::string text;
    try {
        text = read_text_file(manifest_path);
    } catch (const IoError&) {
        throw;
    }

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ManifestParseError("malformed manifest '" + manifest_path + "': " + e.what());
    }

    auto require = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
        if (!obj.is_object() || !obj.contains(key))
            throw ManifestParseError("manifest '" + manifest_path + "': missing field '" +
                                     key + "'");
        return obj.at(key);
    };

    RelationalDatabase db;
    db.name = require(j, "name").get<std::string>();
    const auto& tables = require(j, "tables");
    if (!tables.is_array() || tables.empty())
        throw ManifestParseError("manifest '" + manifest_path + "': 'tables' must be a non-empty array");

    fs::path base = fs::path(manifest_path).parent_path();
    for (const auto& tj : tables) {
        TableDef t;
        t.name = require(tj, "name").get<std::string>();
        std::string file = require(tj, "file").get<std::string>();
        const auto& cols = require(tj, "columns");
        if (!cols.is_array() || cols.empty())
            throw ManifestParseError("table '" + t.name + "': 'columns' must be a non-empty array");
        for (const auto& cj : cols) {
            ColumnDef c;
            c.name = require(cj, "name").get<std::string>();
            c.dtype = dtype_from_name(require(cj, "dtype").get<std::string>());
            c.nullable = require(cj, "nullable").get<bool>();
            t.columns.push_back(std::move(c));
        }
        if (tj.contains("primary_key") && !tj.at("primary_key").is_null())
            t.primary_key = tj.at("primary_key").get<std::string>();

        std::string csv_text = read_text_file((base / file).string());
        auto records = parse_csv(csv_text);
        if (records.empty())
            throw SchemaViolation("table '" + t.name + "': CSV file has no header row");
        const auto& header = records.front();
        if (header.size() != t.columns.size())
            throw SchemaViolation("table '" + t.name + "': CSV header arity " +
                                  std::to_string(header.size()) + " != declared column count " +
                                  std::to_string(t.columns.size()));
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] != t.columns[i].name)
                throw SchemaViolation("table '" + t.name + "': CSV header column " +
                                      std::to_string(i) + " is '" + header[i] +
                                      "', manifest declares '" + t.columns[i].name + "'");

        std::vector<Row> table_rows;
        for (std::size_t ri = 1; ri < records.size(); ++ri) {
            Row row;
            row.reserve(records[ri].size());
            for (const auto& f : records[ri])
                row.push_back(f == null_token ? Cell::make_null() : Cell::of(f));
            if (row.size() != t.columns.size())
                throw SchemaViolation("table '" + t.name + "' row " + std::to_string(ri - 1) +
                                      ": arity " + std::to_string(row.size()) +
                                      " != column count " + std::to_string(t.columns.size()));
            table_rows.push_back(std::move(row));
        }
        db.tables.push_back(std::move(t));
        db.rows.push_back(std::move(table_rows));
    }

    if (j.contains("foreign_keys")) {
        for (const auto& fj : j.at("foreign_keys")) {
            ForeignKey fk;
            fk.from_table = require(fj, "from_table").get<std::string>();
            fk.from_column = require(fj, "from_column").get<std::string>();
            fk.to_table = require(fj, "to_table").get<std::string>();
            fk.to_column = require(fj, "to_column").get<std::string>();
            db.foreign_keys.push_back(std::move(fk));
        }
    }

    validate_database(db);
    return db;
}

// Writes manifest.json plus one CSV per table into `dir`. Loading the result
// back yields a structurally equal database.
inline void save_database(const RelationalDatabase& db, const std::string& dir,
                          const std::string& null_token = kDefaultNullToken) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());

    nlohmann::json j;
    j["name"] = db.name;
    j["tables"] = nlohmann::json::array();
    for (std::size_t ti = 0; ti < db.tables.size(); ++ti) {
        const TableDef& t = db.tables[ti];
        std::string file = t.name + ".csv";
        nlohmann::json tj;
        tj["name"] = t.name;
        tj["file"] = file;
        tj["columns"] = nlohmann::json::array();
        for (const auto& c : t.columns)
            tj["columns"].push_back({{"name", c.name},
                                     {"dtype", dtype_name(c.dtype)},
                                     {"nullable", c.nullable}});
        if (t.primary_key) tj["primary_key"] = *t.primary_key;
        j["tables"].push_back(std::move(tj));

        std::string csv;
        for (std::size_t ci = 0; ci < t.columns.size(); ++ci) {
            if (ci) csv += ',';
            csv += csv_escape(t.columns[ci].name);
        }
        csv += '\n';
        for (const Row& r : db.rows[ti]) {
            for (std::size_t ci = 0; ci < r.size(); ++ci) {
                if (ci) csv += ',';
                csv += r[ci].null ? null_token : csv_escape(r[ci].value);
            }
            csv += '\n';
        }
        write_text_file((fs::path(dir) / file).string(), csv);
    }
    j["foreign_keys"] = nlohmann::json::array();
    for (const auto& fk : db.foreign_keys)
        j["foreign_keys"].push_back({{"from_table", fk.from_table},
                                     {"from_column", fk.from_column},
                                     {"to_table", fk.to_table},
                                     {"to_column", fk.to_column}});

    write_text_file((fs::path(dir) / "manifest.json").string(), j.dump(2) + "\n");
}

// Loads every direct subdirectory of `dir` containing a manifest.json, in
// lexicographic directory order.
inline std::vector<RelationalDatabase> load_corpus(const std::string& dir,
                                                   const std::string& null_token = kDefaultNullToken) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("corpus directory '" + dir + "' does not exist");
    std::vector<std::string> manifests;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        fs::path m = entry.path() / "manifest.json";
        if (fs::exists(m)) manifests.push_back(m.string());
    }
    std::sort(manifests.begin(), manifests.end());
    if (manifests.empty()) throw IoError("no database manifests under '" + dir + "'");
    std::vector<RelationalDatabase> corpus;
    corpus.reserve(manifests.size());
    for (const auto& m : manifests) corpus.push_back(load_database(m, null_token));
    return corpus;
}

}  // namespace relgraph
