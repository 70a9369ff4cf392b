// fab: adaptive FAB p-values for normal means, group means, regression
// coefficients, and asymptotically normal estimates, plus the two
// simulation studies. See README.md for the file formats.

#include "fab/csv.hpp"
#include "fab/errors.hpp"
#include "fab/logistic.hpp"
#include "fab/pipelines.hpp"
#include "fab/pvalue.hpp"
#include "fab/studies.hpp"

#include <CLI11.hpp>

#include <Eigen/Cholesky>

#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace {

using namespace fab;

constexpr int kExitInput = 2;
constexpr int kExitRank = 3;
constexpr int kExitModelFit = 4;

int default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

Mode parse_mode(const std::string& text) {
    if (text == "exact") return Mode::exact();
    if (text == "shared") return Mode::shared();
    if (text.rfind("blocked:", 0) == 0) {
        const int k = static_cast<int>(parse_integer(text.substr(8), 0));
        if (k < 2) throw CsvError("blocked mode needs at least 2 blocks", 0);
        return Mode::blocked(k);
    }
    throw CsvError("unknown mode '" + text + "' (expected exact, blocked:K, or shared)", 0);
}

void emit(const std::string& path, const std::vector<std::string>& header,
          const std::vector<std::vector<std::string>>& rows) {
    if (path.empty()) write_csv(std::cout, header, rows);
    else write_csv_file(path, header, rows);
}

void warn_fallbacks(const std::vector<FabResult>& results,
                    const std::vector<std::string>& labels) {
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].status == ResultStatus::UmpuFallback)
            std::cerr << "fab: warning: " << labels[i] << " fell back to the UMPU p-value ("
                      << results[i].note << ")\n";
    }
}

std::string flag_text(const FabResult& r) {
    switch (r.status) {
        case ResultStatus::Ok: return "";
        case ResultStatus::UmpuFallback: return "umpu_fallback";
        case ResultStatus::Error: return "error";
    }
    return "";
}

Vector null_vector(int p, double null_value, const std::string& null_file) {
    if (null_file.empty()) return Vector::Constant(p, null_value);
    const CsvTable table = read_csv_file(null_file);
    const int col = std::max(table.column("null"), 0);
    if (static_cast<int>(table.rows.size()) != p)
        throw CsvError("null file must have one row per hypothesis", 1);
    Vector out(p);
    for (int i = 0; i < p; ++i) out(i) = parse_number(table.rows[i][col], i + 2);
    return out;
}

struct CommonOpts {
    std::string input, response, output, linking, mode = "exact", null_file;
    double null_value = 0.0;
    std::uint64_t seed = 1;
    int threads = default_threads();
};

int run_means(const CommonOpts& opt) {
    const CsvTable table = read_csv_file(opt.input);
    if (table.rows.empty()) throw CsvError("no data rows", 2);
    const int id_col = table.require_column("group_id");
    const int ybar_col = table.require_column("ybar");
    const int sd_col = table.require_column("sd");
    const int n_col = table.require_column("n");

    std::vector<int> covar_cols;
    for (int c = 0; c < static_cast<int>(table.header.size()); ++c) {
        if (c != id_col && c != ybar_col && c != sd_col && c != n_col) covar_cols.push_back(c);
    }
    const bool use_covariates =
        opt.linking.empty() ? !covar_cols.empty() : opt.linking == "regression";
    if (!opt.linking.empty() && opt.linking != "regression" && opt.linking != "exchangeable")
        throw CsvError("means supports --linking exchangeable or regression", 0);
    if (use_covariates && covar_cols.empty())
        throw CsvError("regression linking needs covariate columns", 1);

    const int p = static_cast<int>(table.rows.size());
    Vector ybar(p), s2(p), n(p);
    Matrix x(p, 1 + (use_covariates ? static_cast<int>(covar_cols.size()) : 0));
    for (int i = 0; i < p; ++i) {
        const int line = i + 2;
        ybar(i) = parse_number(table.rows[i][ybar_col], line);
        const double sd = parse_number(table.rows[i][sd_col], line);
        s2(i) = sd * sd;
        n(i) = static_cast<double>(parse_integer(table.rows[i][n_col], line));
        x(i, 0) = 1.0;
        if (use_covariates) {
            for (std::size_t c = 0; c < covar_cols.size(); ++c)
                x(i, 1 + static_cast<int>(c)) = parse_number(table.rows[i][covar_cols[c]], line);
        }
    }

    const Vector nulls = null_vector(p, opt.null_value, opt.null_file);
    const auto results = fab_means_t(ybar, s2, n, x, nulls, parse_mode(opt.mode), opt.threads);
    std::vector<std::string> ids;
    for (int i = 0; i < p; ++i) ids.push_back(table.rows[i][id_col]);
    warn_fallbacks(results, ids);

    std::vector<std::vector<std::string>> rows;
    for (int i = 0; i < p; ++i) {
        const FabResult& r = results[i];
        rows.push_back({table.rows[i][id_col], format_full(r.stat),
                        format_full(r.df ? *r.df : std::numeric_limits<double>::quiet_NaN()),
                        format_full(r.shift), format_full(r.p_fab), format_full(r.p_umpu),
                        flag_text(r)});
    }
    emit(opt.output, {"group_id", "t", "df", "b_shift", "p_fab", "p_umpu", "flag"}, rows);
    return 0;
}

std::pair<Matrix, std::vector<std::string>> load_design(const std::string& path) {
    const CsvTable table = read_csv_file(path);
    if (table.rows.empty()) throw CsvError("no data rows", 2);
    std::vector<std::string> names;
    Matrix m = table_as_matrix(table, &names);
    return {std::move(m), std::move(names)};
}

Vector load_response(const std::string& path) {
    const CsvTable table = read_csv_file(path);
    if (table.rows.empty()) throw CsvError("no data rows", 2);
    if (table.header.size() != 1) throw CsvError("response file must have a single column", 1);
    Vector y(static_cast<int>(table.rows.size()));
    for (int i = 0; i < y.size(); ++i) y(i) = parse_number(table.rows[i][0], i + 2);
    return y;
}

std::vector<int> resolve_columns(const std::vector<std::string>& names,
                                 const std::vector<std::string>& wanted) {
    std::vector<int> out;
    for (const auto& w : wanted) {
        int found = -1;
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == w) {
                found = static_cast<int>(i);
                break;
            }
        }
        if (found < 0) {
            try {
                found = static_cast<int>(parse_integer(w, 0));
            } catch (const CsvError&) {
                throw CsvError("unknown design column '" + w + "'", 1);
            }
            if (found < 0 || found >= static_cast<int>(names.size()))
                throw CsvError("design column index out of range: " + w, 1);
        }
        out.push_back(found);
    }
    return out;
}

void emit_coefficients(const std::string& path, const std::vector<std::string>& names,
                       const Vector& estimates, const std::vector<FabResult>& results,
                       bool z_based) {
    warn_fallbacks(results, names);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const FabResult& r = results[i];
        rows.push_back({names[i], format_full(estimates(static_cast<int>(i))),
                        format_full(r.stat), z_based ? "inf" : format_full(*r.df),
                        format_full(r.shift), format_full(r.p_fab), format_full(r.p_umpu),
                        flag_text(r)});
    }
    emit(path, {"name", "estimate", "stat", "df_or_inf", "b_shift", "p_fab", "p_wald_or_umpu",
                "flag"},
         rows);
}

int run_lm(const CommonOpts& opt, const std::vector<std::string>& nuisance) {
    auto [design, names] = load_design(opt.input);
    const Vector y = load_response(opt.response);
    if (y.size() != design.rows()) throw CsvError("design and response row counts differ", 1);

    LinkingChoice linking{FitFamily{LinkingFamily::exchangeable()}};
    if (!opt.linking.empty() && opt.linking != "exchangeable")
        throw CsvError("lm supports --linking exchangeable", 0);
    const Mode mode = parse_mode(opt.mode);

    if (nuisance.empty()) {
        const auto results = fab_lm(design, y, linking, mode, opt.threads);
        const Matrix xtx = design.transpose() * design;
        const Vector beta = xtx.llt().solve(design.transpose() * y);
        emit_coefficients(opt.output, names, beta, results, false);
        return 0;
    }

    const std::vector<int> w_cols = resolve_columns(names, nuisance);
    std::vector<bool> is_nuisance(names.size(), false);
    for (int c : w_cols) is_nuisance[c] = true;
    std::vector<std::string> target_names;
    Matrix w(design.rows(), static_cast<int>(w_cols.size()));
    Matrix x(design.rows(), design.cols() - static_cast<int>(w_cols.size()));
    int wi = 0, xi = 0;
    for (int c = 0; c < design.cols(); ++c) {
        if (is_nuisance[c]) w.col(wi++) = design.col(c);
        else {
            x.col(xi++) = design.col(c);
            target_names.push_back(names[c]);
        }
    }
    const auto results = fab_lm_partial(w, x, y, linking, mode, opt.threads);
    Matrix full(design.rows(), design.cols());
    full << w, x;
    const Vector beta_full = (full.transpose() * full).llt().solve(full.transpose() * y);
    const Vector beta = beta_full.tail(x.cols());
    emit_coefficients(opt.output, target_names, beta, results, false);
    return 0;
}

int run_glm(const CommonOpts& opt, const std::string& family) {
    if (family != "binomial")
        throw CsvError("glm supports --family binomial", 0);
    auto [design, names] = load_design(opt.input);
    const Vector y = load_response(opt.response);
    if (y.size() != design.rows()) throw CsvError("design and response row counts differ", 1);

    LinkingChoice linking{FitFamily{LinkingFamily::spike_slab()}};
    if (opt.linking == "exchangeable") linking = FitFamily{LinkingFamily::exchangeable()};
    else if (!opt.linking.empty() && opt.linking != "spikeslab")
        throw CsvError("glm supports --linking spikeslab or exchangeable", 0);

    const GlmFit fit = fit_logistic(design, y);
    const auto results = fab_asymptotic(fit.theta_hat, fit.sigma_hat,
                                        static_cast<double>(design.rows()), linking,
                                        parse_mode(opt.mode), opt.threads);
    emit_coefficients(opt.output, names, fit.theta_hat, results, true);
    return 0;
}

int run_simulate_hmm(const CommonOpts& opt, int p, int datasets, double q,
                     const std::string& methods) {
    HmmStudyConfig cfg;
    cfg.hmm = HmmSpec::defaults(p);
    cfg.datasets = datasets;
    cfg.q = q;
    cfg.seed = opt.seed;
    cfg.threads = opt.threads;
    if (methods == "exact") cfg.run_shared = false;
    else if (methods == "shared") cfg.run_exact = false;
    else if (methods != "all")
        throw CsvError("simulate-hmm --mode must be exact, shared, or all", 0);

    const HmmStudyResult res = run_hmm_study(cfg);
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : res.rows) {
        rows.push_back({std::to_string(r.dataset), r.method, std::to_string(r.n_null),
                        std::to_string(r.discoveries), format_full(r.fdp), format_full(r.tpp)});
    }
    for (const auto& s : res.summary) {
        rows.push_back({"mean", s.method, format_full(s.mean_n_null),
                        format_full(s.mean_discoveries), format_full(s.mean_fdp),
                        format_full(s.mean_tpp)});
    }
    emit(opt.output, {"dataset", "method", "n_null", "discoveries", "fdp", "tpp"}, rows);
    return 0;
}

int run_simulate_glm(const CommonOpts& opt, const std::vector<int>& n_list, int p, int replicates,
                     double alpha) {
    GlmStudyConfig cfg;
    cfg.sample_sizes = n_list;
    cfg.p = p;
    cfg.n_nonnull = p / 2;
    cfg.replicates = replicates;
    cfg.alpha = alpha;
    cfg.seed = opt.seed;
    cfg.threads = opt.threads;
    const auto rows = run_glm_study(cfg);
    std::vector<std::vector<std::string>> out;
    for (const auto& r : rows) {
        out.push_back({std::to_string(r.n), r.method, format_full(r.frac_nonnull_small),
                       format_full(r.frac_null_small), std::to_string(r.replicates_used),
                       std::to_string(r.skipped)});
    }
    emit(opt.output, {"n", "method", "frac_nonnull_lt_alpha", "frac_null_lt_alpha",
                      "replicates_used", "skipped"},
         out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive FAB p-values: uniform under the null, smaller when "
                 "indirect information from co-analyzed parameters is accurate"};
    app.require_subcommand(1);

    CommonOpts opt;
    std::vector<std::string> nuisance;
    std::string family = "binomial";
    std::string hmm_methods = "all";
    int sim_p = 1000, sim_datasets = 100, glm_p = 30, glm_reps = 500;
    double q = 0.2, alpha = 0.05;
    std::vector<int> n_list = {200, 400, 800, 1600};
    double z = 0.0, t = 0.0, df = 0.0, b = 0.0, u = 0.5, theta = 0.0;
    bool have_z = false, have_t = false, have_df = false;

    auto add_common = [&](CLI::App* cmd, bool with_io) {
        if (with_io) {
            cmd->add_option("--input", opt.input, "input CSV")->required();
            cmd->add_option("--output", opt.output, "output CSV (stdout when omitted)");
            cmd->add_option("--mode", opt.mode, "exact | blocked:K | shared");
            cmd->add_option("--linking", opt.linking, "linking model family");
        } else {
            cmd->add_option("--output", opt.output, "output CSV (stdout when omitted)");
        }
        cmd->add_option("--seed", opt.seed, "random seed");
        cmd->add_option("--threads", opt.threads, "worker threads");
    };

    CLI::App* means = app.add_subcommand("means", "FAB p-values for group means (t statistics)");
    add_common(means, true);
    means->add_option("--null", opt.null_value, "null value for every group");
    means->add_option("--null-file", opt.null_file, "CSV with one null value per group");

    CLI::App* lm = app.add_subcommand("lm", "FAB p-values for linear regression coefficients");
    add_common(lm, true);
    lm->add_option("--response", opt.response, "response CSV (single column)")->required();
    lm->add_option("--nuisance-cols", nuisance,
                   "design columns treated as nuisance (names or indices)")
        ->delimiter(',');

    CLI::App* glm = app.add_subcommand("glm", "FAB p-values for GLM coefficients");
    add_common(glm, true);
    glm->add_option("--response", opt.response, "response CSV (single column)")->required();
    glm->add_option("--family", family, "GLM family (binomial)");

    CLI::App* shmm = app.add_subcommand("simulate-hmm", "spatial hidden-Markov study");
    add_common(shmm, false);
    shmm->add_option("--p", sim_p, "chain length");
    shmm->add_option("--datasets", sim_datasets, "number of simulated datasets");
    shmm->add_option("--q", q, "BH false discovery rate");
    shmm->add_option("--mode", hmm_methods, "FAB flavors to run: exact | shared | all");

    CLI::App* sglm = app.add_subcommand("simulate-glm", "logistic regression study");
    add_common(sglm, false);
    sglm->add_option("--n-list", n_list, "sample sizes")->delimiter(',');
    sglm->add_option("--p", glm_p, "number of coefficients");
    sglm->add_option("--replicates", glm_reps, "replicates per sample size");
    sglm->add_option("--alpha", alpha, "small p-value threshold");

    CLI::App* pv = app.add_subcommand("pvalue", "FAB p-value calculator");
    pv->add_option("--z", z, "standardized normal statistic");
    pv->add_option("--t", t, "t statistic");
    pv->add_option("--df", df, "degrees of freedom for --t");
    pv->add_option("--b", b, "FAB shift");

    CLI::App* dist = app.add_subcommand("dist", "distribution of the FAB p-value under theta");
    dist->add_option("--u", u, "p-value level in (0,1)")->required();
    dist->add_option("--theta", theta, "alternative mean");
    dist->add_option("--b", b, "FAB shift");

    try {
        app.parse(argc, argv);
        have_z = pv->count("--z") > 0;
        have_t = pv->count("--t") > 0;
        have_df = pv->count("--df") > 0;

        if (means->parsed()) return run_means(opt);
        if (lm->parsed()) return run_lm(opt, nuisance);
        if (glm->parsed()) return run_glm(opt, family);
        if (shmm->parsed()) return run_simulate_hmm(opt, sim_p, sim_datasets, q, hmm_methods);
        if (sglm->parsed()) return run_simulate_glm(opt, n_list, glm_p, glm_reps, alpha);
        if (pv->parsed()) {
            if (have_z == have_t)
                throw CsvError("pvalue needs exactly one of --z or --t", 0);
            if (have_t && !have_df) throw CsvError("--t needs --df", 0);
            const double p = have_z ? fab_p_normal(z, b) : fab_p_student_t(t, b, df);
            std::cout << format_scalar(p) << "\n";
            return 0;
        }
        if (dist->parsed()) {
            std::cout << format_scalar(alt_cdf(u, theta, b)) << "\n"
                      << format_scalar(alt_pdf(u, theta, b)) << "\n";
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    } catch (const CsvError& e) {
        std::cerr << "fab: " << e.what() << "\n";
        return kExitInput;
    } catch (const RankError& e) {
        std::cerr << "fab: " << e.what() << "\n";
        return kExitRank;
    } catch (const SeparationError& e) {
        std::cerr << "fab: " << e.what() << "\n";
        return kExitModelFit;
    } catch (const FitError& e) {
        std::cerr << "fab: " << e.what() << "\n";
        return kExitModelFit;
    } catch (const std::exception& e) {
        std::cerr << "fab: " << e.what() << "\n";
        return kExitInput;
    }
    return 0;
}
