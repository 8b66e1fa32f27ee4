#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "occo/common.hpp"

namespace occo {

/// One registered image pair. Paths are stored as written in the manifest;
/// relative ones resolve against the manifest's directory.
struct ManifestRecord {
    std::string vi_path;
    std::string ir_path;
    std::string mask_vi_path;  // empty until masks are generated
    std::string mask_ir_path;
    std::string split = "train";
};

/// JSON-lines dataset index: one UTF-8 JSON object per line with the
/// ManifestRecord fields. Unknown keys are ignored; mask paths and split may
/// be absent.
struct DatasetManifest {
    std::vector<ManifestRecord> records;
    std::string dir;  // directory of the manifest file, "" for in-memory sets

    static DatasetManifest load(const std::string& path) {
        std::ifstream in(path);
        OCCO_CHECK(in.good(), "cannot read manifest ", path);
        DatasetManifest m;
        m.dir = std::filesystem::path(path).parent_path().string();
        std::string line;
        int64_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw DataError(detail::format_msg("manifest ", path, " line ", lineno, ": ",
                                                   e.what()));
            }
            ManifestRecord r;
            r.vi_path = j.value("vi_path", "");
            r.ir_path = j.value("ir_path", "");
            r.mask_vi_path = j.value("mask_vi_path", "");
            r.mask_ir_path = j.value("mask_ir_path", "");
            r.split = j.value("split", "train");
            OCCO_CHECK(!r.vi_path.empty() && !r.ir_path.empty(), "manifest ", path, " line ",
                       lineno, " needs vi_path and ir_path");
            m.records.push_back(std::move(r));
        }
        return m;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        OCCO_CHECK(out.good(), "cannot write manifest ", path);
        for (const ManifestRecord& r : records) {
            nlohmann::json j{{"vi_path", r.vi_path},
                             {"ir_path", r.ir_path},
                             {"mask_vi_path", r.mask_vi_path},
                             {"mask_ir_path", r.mask_ir_path},
                             {"split", r.split}};
            out << j.dump() << "\n";
        }
        OCCO_CHECK(out.good(), "write to manifest ", path, " failed");
    }

    /// Resolves a manifest-relative path; absolute and empty pass through.
    std::string resolve(const std::string& p) const {
        if (p.empty() || dir.empty() || std::filesystem::path(p).is_absolute()) return p;
        return (std::filesystem::path(dir) / p).string();
    }

    std::vector<int64_t> indices_for_split(const std::string& split) const {
        std::vector<int64_t> idx;
        for (size_t i = 0; i < records.size(); ++i)
            if (split.empty() || records[i].split == split)
                idx.push_back(static_cast<int64_t>(i));
        return idx;
    }
};

}  // namespace occo
