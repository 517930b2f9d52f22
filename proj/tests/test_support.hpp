#pragma once

#include "cargait/feature_store.hpp"
#include "cargait/rng.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = "cargait_";
        if (info) {
            name += std::string(info->test_suite_name()) + "_" + info->name();
        }
        path_ = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::vector<char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// `identities` identities with `per_identity` Gaussian maps each.
inline cargait::FeatureSet random_set(cargait::Rng& rng, std::size_t identities, std::size_t per_identity,
                                      std::size_t s, std::size_t d) {
    cargait::FeatureSet set{s, d, cargait::Partition::gallery, {}};
    for (std::size_t i = 0; i < identities; ++i) {
        for (std::size_t k = 0; k < per_identity; ++k) {
            set.entries.push_back(oracle::random_map(rng, "q" + std::to_string(i) + "_" + std::to_string(k),
                                                     "p" + std::to_string(i), s, d));
        }
    }
    return set;
}
