#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tba/attack.hpp"
#include "tba/config.hpp"

namespace tba {

enum class AttackMode { White, Black };
const char* to_string(AttackMode m);

// Everything one experiment needs; parsed from the INI document, every
// omitted key falls back to the defaults below. All randomness flows from
// [run] seed through labeled substreams.
struct RunConfig {
    SkeletonProfile profile = SkeletonProfile::Small;
    int image_dim = 64;
    double sigma_px = 1.5;
    std::uint64_t seed = 1;
    int train_count = 500;
    int test_count = 32;
    TrainConfig victim_train;
    AttackConfig attack;
    AttackVariant variant = AttackVariant::FullTba;
    AttackMode mode = AttackMode::White;
    int attack_count = 16;

    static RunConfig from_config(const ConfigFile& file);
    ConfigFile to_config() const;

    Camera camera() const;
    RenderSpec render_spec() const;
    Skeleton skeleton() const;
    std::string run_name() const;
};

// Fixed output layout under one experiment directory.
struct RunPaths {
    std::filesystem::path root;
    std::filesystem::path data_train() const { return root / "data" / "train"; }
    std::filesystem::path data_test() const { return root / "data" / "test"; }
    std::filesystem::path models() const { return root / "models"; }
    std::filesystem::path runs() const { return root / "runs"; }
    std::filesystem::path tables() const { return root / "tables"; }
};

// Subcommand bodies (the CLI is a thin wrapper over these).
void cmd_gen_data(const RunConfig& cfg, const RunPaths& paths);
void cmd_train(const RunConfig& cfg, const RunPaths& paths);
std::filesystem::path cmd_attack(const RunConfig& cfg, const RunPaths& paths);
// model: "A" or "B"; run_name: evaluate that stored adversarial set instead
// of the clean test split.
MetricsReport cmd_eval(const RunConfig& cfg, const RunPaths& paths, const std::string& model,
                       const std::string& run_name = "");
void cmd_table(const RunPaths& paths);
void cmd_plotdata(const RunPaths& paths);

// Recorded outcome of one attack run, persisted as runs/<name>.json with
// artifact hashes; verify checks every referenced file.
struct RunRecord {
    std::string name;
    std::string config_snapshot;
    std::string variant;
    std::string mode;
    int cond_id = 0;
    std::uint64_t seed = 0;
    std::string eval_model;
    double wall_clock_sec = 0.0;
    std::size_t sample_count = 0;
    MetricsReport report;
    std::vector<double> plot_clean_gap;  // per flattened pose parameter
    std::vector<double> plot_adv_gap;
    std::vector<std::pair<std::string, std::string>> artifacts;  // path, hash

    void save(const std::filesystem::path& path) const;
    static RunRecord load(const std::filesystem::path& path);
    void verify_artifacts(const std::filesystem::path& root) const;
};

}  // namespace tba
