#pragma once

#include "fab/pipelines.hpp"
#include "fab/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fab {

// Hidden Markov signal chain over states {-1, 0, +1}.
struct HmmSpec {
    int p = 1000;
    Eigen::Matrix3d transition;
    Eigen::Vector3d initial; // defaults to the stationary law of `transition`

    static HmmSpec defaults(int p = 1000);
    void validate() const; // rows sum to 1 within 1e-12, entries >= 0
};

// Stationary distribution of a 3-state transition matrix.
Eigen::Vector3d stationary_distribution(const Eigen::Matrix3d& transition);

struct HmmStudyConfig {
    HmmSpec hmm = HmmSpec::defaults();
    int datasets = 100;
    double q = 0.2; // BH target FDR
    std::uint64_t seed = 1;
    bool run_exact = true;
    bool run_shared = true;
    int threads = 1;
};

struct StudyRow {
    int dataset = 0;
    std::string method;
    int n_null = 0;
    int discoveries = 0;
    double fdp = 0.0;
    double tpp = 0.0;
};

struct MethodSummary {
    std::string method;
    double mean_n_null = 0.0;
    double mean_discoveries = 0.0;
    double mean_fdp = 0.0;
    double mean_tpp = 0.0;
};

struct HmmStudyResult {
    std::vector<StudyRow> rows; // dataset-major, method order umpu/fab_exact/fab_shared
    std::vector<MethodSummary> summary;
    // datasets where the method's TPP was at least the UMPU TPP
    std::map<std::string, int> tpp_ge_umpu;
};

// Spatial-signal simulation: theta from the Markov chain, Y = theta + N(0, I),
// UMPU and CAR-linking FAB p-values, BH at rate q, FDP/TPP against truth.
// Deterministic given the seed: everything is drawn from per-(dataset,
// coordinate) substreams, so results do not depend on the thread count.
HmmStudyResult run_hmm_study(const HmmStudyConfig& config);

struct GlmStudyConfig {
    std::vector<int> sample_sizes = {200, 400, 800, 1600};
    int p = 30;
    int n_nonnull = 15;
    double signal = 3.0; // theta_j = signal / sqrt(n) on the non-null coordinates
    int replicates = 500;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct GlmStudyRow {
    int n = 0;
    std::string method; // "wald" or "fab"
    double frac_nonnull_small = 0.0; // fraction of non-null p-values below alpha
    double frac_null_small = 0.0;
    int replicates_used = 0;
    int skipped = 0; // separated / non-converged replicates
};

// Logistic-regression simulation: standard-normal covariates, half the
// coefficients at signal/sqrt(n), Wald versus spike-and-slab FAB p-values.
std::vector<GlmStudyRow> run_glm_study(const GlmStudyConfig& config);

} // namespace fab
