#pragma once

#include "sadapt/dataio.hpp"
#include "sadapt/heads.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sadapt::cli {

struct RunConfig {
    std::string subcommand;

    std::filesystem::path embeddings;
    std::filesystem::path head;
    std::filesystem::path out;
    std::filesystem::path merged;
    std::filesystem::path id_set;
    std::filesystem::path bank;
    std::vector<std::filesystem::path> components;
    std::vector<std::filesystem::path> adapters;
    std::vector<std::filesystem::path> ood_sets;

    std::uint64_t base_seed = 0;
    std::size_t k = 8;
    std::size_t shots = 16;
    std::size_t epochs = 0;
    std::string mask = "auto";
    std::vector<std::string> overrides;
    std::size_t jobs = 0; // 0: one worker per component
    std::string head_kind = "imported";
    std::string grid = "0:1:0.1";
    std::string split = "train";

    std::size_t trials = 1000;
    double tolerance = 1e-4;
    KnnConfig knn;
    SynthConfig synth;
};

/// Runs one subcommand. Returns 0 on success, 1 on usage errors, 2 on data
/// format errors, 3 on numerical or equivalence failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Subcommand bodies; they throw sadapt::Error on failure.
void cmd_info(const RunConfig& cfg, std::ostream& out);
void cmd_sample(const RunConfig& cfg, std::ostream& out);
void cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_soup(const RunConfig& cfg, std::ostream& out);
void cmd_verify(const RunConfig& cfg, std::ostream& out);
void cmd_eval(const RunConfig& cfg, std::ostream& out);
void cmd_synth(const RunConfig& cfg, std::ostream& out);

} // namespace sadapt::cli
