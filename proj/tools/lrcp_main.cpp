#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "lrcp/compress.hpp"
#include "lrcp/io.hpp"
#include "lrcp/rng.hpp"
#include "lrcp/spectrum.hpp"
#include "lrcp/synth.hpp"

namespace fs = std::filesystem;
using lrcp::Index;
using lrcp::Matrix;

namespace {

int thread_count() {
    if (const char* env = std::getenv("LRCP_THREADS")) {
        const int value = std::atoi(env);
        if (value > 0) return value;
    }
    return 1;
}

// Runs fn(0..count-1), possibly on LRCP_THREADS workers. Results must land in
// pre-sized slots; the caller serializes all file writes afterwards so report
// order is fixed by input order.
template <typename Fn>
void parallel_indices(std::size_t count, Fn&& fn) {
    const int workers = std::min<int>(thread_count(), static_cast<int>(count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> guard(failure_lock);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

double parse_ratio(const std::string& text) {
    const auto slash = text.find('/');
    try {
        if (slash != std::string::npos) {
            const double numerator = std::stod(text.substr(0, slash));
            const double denominator = std::stod(text.substr(slash + 1));
            if (denominator == 0.0) throw std::invalid_argument("zero denominator");
            return numerator / denominator;
        }
        return std::stod(text);
    } catch (const std::exception&) {
        throw lrcp::Error(lrcp::ErrorCode::InvalidRatio, "cannot parse ratio '" + text + "'");
    }
}

std::vector<double> parse_ratio_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ',')) {
        if (!item.empty()) out.push_back(parse_ratio(item));
    }
    return out;
}

struct LayerInput {
    std::string source;
    Matrix matrix;
};

// A file yields its layers; a directory yields the layers of every .npy file
// in lexicographic filename order.
std::vector<LayerInput> load_inputs(const fs::path& input) {
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        for (const auto& entry : fs::directory_iterator(input)) {
            if (entry.is_regular_file() && entry.path().extension() == ".npy") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end(),
                  [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
        if (files.empty()) {
            throw lrcp::Error(lrcp::ErrorCode::EmptyInput, "no .npy files in " + input.string());
        }
    } else {
        files.push_back(input);
    }
    std::vector<LayerInput> layers;
    for (const fs::path& file : files) {
        std::vector<Matrix> loaded = lrcp::io::load_layers(file);
        for (std::size_t l = 0; l < loaded.size(); ++l) {
            std::string name = file.filename().string();
            if (loaded.size() > 1) name += "[" + std::to_string(l) + "]";
            layers.push_back(LayerInput{std::move(name), std::move(loaded[l])});
        }
    }
    return layers;
}

void ensure_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw lrcp::Error(lrcp::ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
    }
}

std::string zero_pad(std::size_t value, int width) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

const std::map<std::string, lrcp::Scoring> kScoringNames = {
    {"residual-desc", lrcp::Scoring::ResidualDescending},
    {"projnorm-desc", lrcp::Scoring::ProjectionNormDescending},
    {"residual-asc", lrcp::Scoring::ResidualAscending},
};
const std::map<std::string, lrcp::Centering> kCenterNames = {
    {"none", lrcp::Centering::None},
    {"mean", lrcp::Centering::MeanCenter},
};
const std::map<std::string, lrcp::SubspaceMethod> kSubspaceNames = {
    {"pca", lrcp::SubspaceMethod::PCA},
    {"random", lrcp::SubspaceMethod::RandomDirections},
    {"coordvar", lrcp::SubspaceMethod::CoordinateVariance},
    {"kmeans", lrcp::SubspaceMethod::ClusterCenters},
};

template <typename T>
std::string name_of(const std::map<std::string, T>& names, T value) {
    for (const auto& [key, candidate] : names) {
        if (candidate == value) return key;
    }
    return "?";
}

lrcp::io::json config_json(const lrcp::CompressionConfig& cfg) {
    lrcp::io::json j;
    j["rank"] = cfg.rank;
    j["budget"] = cfg.budget;
    j["scoring"] = name_of(kScoringNames, cfg.scoring);
    j["merge"] = cfg.merge;
    j["centering"] = name_of(kCenterNames, cfg.centering);
    j["subspace"] = name_of(kSubspaceNames, cfg.subspace_method);
    j["seed"] = cfg.seed;
    return j;
}

void write_compression_outputs(const fs::path& out_dir, const std::string& stem, const Matrix& input,
                               const lrcp::CompressionConfig& cfg, const lrcp::CompressionResult& result,
                               const std::string& source) {
    lrcp::io::save_matrix(result.output, out_dir / (stem + "_compressed.npy"));

    lrcp::io::json report = lrcp::io::to_json(result);
    report["config"] = config_json(cfg);
    report["input"] = {{"source", source}, {"rows", input.rows()}, {"cols", input.cols()}};
    report["output"] = stem + "_compressed.npy";
    lrcp::io::write_report(report, out_dir / (stem + "_report.json"));

    std::vector<char> retained(static_cast<std::size_t>(input.rows()), 0);
    for (const Index i : result.retained_indices) retained[static_cast<std::size_t>(i)] = 1;
    std::vector<std::vector<std::string>> rows;
    rows.reserve(static_cast<std::size_t>(input.rows()));
    for (Index i = 0; i < input.rows(); ++i) {
        rows.push_back({std::to_string(i), retained[static_cast<std::size_t>(i)] ? "1" : "0",
                        lrcp::io::format_double(result.scores(i))});
    }
    lrcp::io::write_csv(out_dir / (stem + "_mask.csv"), {"token_index", "retained", "score"}, rows);
}

struct CompressFlags {
    std::string input;
    std::string out;
    lrcp::CompressionConfig cfg;
    bool no_merge = false;

    void add_common(CLI::App* cmd) {
        cmd->add_option("--rank", cfg.rank, "subspace dimension r")->capture_default_str();
        cmd->add_option("--scoring", cfg.scoring, "token scoring rule")
            ->transform(CLI::CheckedTransformer(kScoringNames))
            ->default_str("residual-desc");
        cmd->add_flag("--no-merge", no_merge, "drop discarded tokens instead of merging them");
        cmd->add_option("--center", cfg.centering, "centering mode")
            ->transform(CLI::CheckedTransformer(kCenterNames))
            ->default_str("none");
        cmd->add_option("--subspace", cfg.subspace_method, "dominant-subspace extraction strategy")
            ->transform(CLI::CheckedTransformer(kSubspaceNames))
            ->default_str("pca");
        cmd->add_option("--seed", cfg.seed, "rng seed")->capture_default_str();
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "lrcp: low-rank-compressibility-guided token pruning and its diagnostic "
        "instruments (set LRCP_THREADS to process multiple layers concurrently)"};
    app.require_subcommand(1);
    int exit_code = 0;

    // ---- compress ----------------------------------------------------
    auto compress_flags = std::make_shared<CompressFlags>();
    CLI::App* compress_cmd = app.add_subcommand("compress", "prune and merge one token matrix");
    compress_cmd->add_option("input", compress_flags->input, "token matrix (.npy)")->required();
    compress_cmd->add_option("--budget", compress_flags->cfg.budget, "retention budget K")->required();
    compress_flags->add_common(compress_cmd);
    compress_cmd->add_option("--out", compress_flags->out, "output directory")->required();
    compress_cmd->callback([compress_flags] {
        const Matrix x = lrcp::io::load_matrix(compress_flags->input);
        lrcp::CompressionConfig cfg = compress_flags->cfg;
        cfg.merge = !compress_flags->no_merge;
        const lrcp::CompressionResult result = lrcp::compress(x, cfg);
        ensure_out_dir(compress_flags->out);
        write_compression_outputs(compress_flags->out, "tokens", x, cfg, result,
                                  fs::path(compress_flags->input).filename().string());
        std::cout << "retained " << result.retained_indices.size() << " of " << x.rows()
                  << " tokens, surrogate loss " << lrcp::io::format_double(result.surrogate_loss) << "\n";
    });

    // ---- spectrum ----------------------------------------------------
    struct SpectrumFlags {
        std::string input;
        std::string out;
        std::vector<double> variance = {90.0, 95.0};
        Index components = 0;
        std::uint64_t seed = 0;
    };
    auto spectrum_flags = std::make_shared<SpectrumFlags>();
    CLI::App* spectrum_cmd =
        app.add_subcommand("spectrum", "explained-variance spectra and Rank@v per layer");
    spectrum_cmd->add_option("input", spectrum_flags->input, "matrix file, layer stack, or directory")->required();
    spectrum_cmd->add_option("--variance", spectrum_flags->variance, "Rank@v percentages")
        ->delimiter(',')
        ->capture_default_str();
    spectrum_cmd->add_option("--components", spectrum_flags->components,
                             "spectrum length (0 = full spectrum when exact, 64 otherwise)");
    spectrum_cmd->add_option("--seed", spectrum_flags->seed, "rng seed for the randomized path");
    spectrum_cmd->add_option("--out", spectrum_flags->out, "output directory")->required();
    spectrum_cmd->callback([spectrum_flags] {
        const std::vector<LayerInput> layers = load_inputs(spectrum_flags->input);
        std::vector<lrcp::SpectrumReport> reports(layers.size());
        parallel_indices(layers.size(), [&](std::size_t i) {
            const Matrix& x = layers[i].matrix;
            Index components = spectrum_flags->components;
            const Index limit = std::min(x.rows(), x.cols());
            if (components <= 0) components = limit <= 512 ? limit : std::min<Index>(64, limit - 1);
            lrcp::SpectrumReport report =
                lrcp::explained_variance_spectrum(x, components, spectrum_flags->seed);
            for (const double v : spectrum_flags->variance) {
                report.rank_at[static_cast<int>(v)] = lrcp::rank_at_variance(report, v);
            }
            reports[i] = std::move(report);
        });

        ensure_out_dir(spectrum_flags->out);
        std::vector<std::string> header = {"layer", "source", "total_energy"};
        std::vector<int> v_list;
        for (const double v : spectrum_flags->variance) v_list.push_back(static_cast<int>(v));
        std::sort(v_list.begin(), v_list.end());
        for (const int v : v_list) header.push_back("rank_at_" + std::to_string(v));

        std::vector<std::vector<std::string>> csv_rows;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            lrcp::io::json j = lrcp::io::to_json(reports[i]);
            j["layer"] = i;
            j["source"] = layers[i].source;
            j["config"] = {{"components", reports[i].explained.size()},
                           {"variance", v_list},
                           {"seed", spectrum_flags->seed}};
            lrcp::io::write_report(j, fs::path(spectrum_flags->out) / ("spectrum_" + zero_pad(i, 3) + ".json"));

            std::vector<std::string> row = {std::to_string(i), layers[i].source,
                                            lrcp::io::format_double(reports[i].total_energy)};
            for (const int v : v_list) row.push_back(std::to_string(reports[i].rank_at.at(v)));
            csv_rows.push_back(std::move(row));
        }
        lrcp::io::write_csv(fs::path(spectrum_flags->out) / "ranks.csv", header, csv_rows);
        std::cout << "wrote " << layers.size() << " spectrum report(s) to " << spectrum_flags->out << "\n";
    });

    // ---- stability ---------------------------------------------------
    struct StabilityFlags {
        std::string input;
        std::string out;
        std::string mode = "random";
        std::vector<double> drop = {0.5, 0.8};
        std::vector<Index> keeps;
        Index trials = 20;
        Index rank = 4;
        std::uint64_t seed = 0;
    };
    auto stability_flags = std::make_shared<StabilityFlags>();
    CLI::App* stability_cmd =
        app.add_subcommand("stability", "dominant-subspace stability under dropout or pruning");
    stability_cmd->add_option("input", stability_flags->input, "matrix file, layer stack, or directory")->required();
    stability_cmd->add_option("--mode", stability_flags->mode, "random | pruned")
        ->check(CLI::IsMember({"random", "pruned"}))
        ->capture_default_str();
    stability_cmd->add_option("--drop", stability_flags->drop, "dropout ratios (random mode)")
        ->delimiter(',')
        ->capture_default_str();
    stability_cmd->add_option("--keeps", stability_flags->keeps, "stage keep counts (pruned mode)")->delimiter(',');
    stability_cmd->add_option("--trials", stability_flags->trials, "dropout trials")->capture_default_str();
    stability_cmd->add_option("--rank", stability_flags->rank, "subspace dimension r")->capture_default_str();
    stability_cmd->add_option("--seed", stability_flags->seed, "rng seed");
    stability_cmd->add_option("--out", stability_flags->out, "output directory")->required();
    stability_cmd->callback([stability_flags] {
        const std::vector<LayerInput> layers = load_inputs(stability_flags->input);
        const bool pruned = stability_flags->mode == "pruned";
        if (pruned && stability_flags->keeps.empty()) {
            throw lrcp::Error(lrcp::ErrorCode::InvalidArgument, "--keeps is required with --mode pruned");
        }

        struct Entry {
            std::string file;
            lrcp::StabilityReport report;
        };
        std::vector<std::vector<Entry>> per_layer(layers.size());
        parallel_indices(layers.size(), [&](std::size_t i) {
            const Matrix& x = layers[i].matrix;
            if (pruned) {
                lrcp::CompressionConfig cfg;
                cfg.rank = stability_flags->rank;
                cfg.seed = stability_flags->seed;
                Entry entry;
                entry.file = "stability_" + zero_pad(i, 3) + "_pruned.json";
                entry.report = lrcp::stability_under_pruning(x, cfg, stability_flags->keeps);
                per_layer[i].push_back(std::move(entry));
            } else {
                for (const double drop : stability_flags->drop) {
                    Entry entry;
                    entry.file = "stability_" + zero_pad(i, 3) + "_drop" +
                                 std::to_string(static_cast<int>(std::lround(drop * 100))) + ".json";
                    entry.report = lrcp::stability_random_dropout(x, stability_flags->rank, drop,
                                                                  stability_flags->trials, stability_flags->seed);
                    per_layer[i].push_back(std::move(entry));
                }
            }
        });

        ensure_out_dir(stability_flags->out);
        std::vector<std::vector<std::string>> csv_rows;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            for (const Entry& entry : per_layer[i]) {
                lrcp::io::json j = lrcp::io::to_json(entry.report);
                j["layer"] = i;
                j["source"] = layers[i].source;
                j["config"] = {{"rank", stability_flags->rank},
                               {"trials", stability_flags->trials},
                               {"seed", stability_flags->seed},
                               {"mode", stability_flags->mode},
                               {"keeps", stability_flags->keeps}};
                lrcp::io::write_report(j, fs::path(stability_flags->out) / entry.file);
                csv_rows.push_back({std::to_string(i), layers[i].source, stability_flags->mode,
                                    lrcp::io::format_double(entry.report.drop_ratio),
                                    std::to_string(entry.report.trials),
                                    lrcp::io::format_double(entry.report.mean_similarity),
                                    lrcp::io::format_double(entry.report.min_similarity)});
            }
        }
        lrcp::io::write_csv(fs::path(stability_flags->out) / "stability.csv",
                            {"layer", "source", "mode", "drop_ratio", "trials", "mean_similarity",
                             "min_similarity"},
                            csv_rows);
        std::cout << "wrote " << csv_rows.size() << " stability report(s) to " << stability_flags->out << "\n";
    });

    // ---- synth ---------------------------------------------------------
    struct SynthFlags {
        std::string kind = "lowrank";
        std::string tail = "gaussian";
        Index rows = 576;
        Index cols = 128;
        Index rank = 4;
        std::vector<double> spectrum;
        double sigma = 0.0;
        Index background = 60;
        Index outliers = 4;
        std::uint64_t seed = 0;
        std::string out;
    };
    auto synth_flags = std::make_shared<SynthFlags>();
    CLI::App* synth_cmd = app.add_subcommand("synth", "materialize a planted instance to disk");
    synth_cmd->add_option("--kind", synth_flags->kind, "lowrank | outliers")
        ->check(CLI::IsMember({"lowrank", "outliers"}))
        ->capture_default_str();
    synth_cmd->add_option("--rows", synth_flags->rows, "token count N (lowrank)")->capture_default_str();
    synth_cmd->add_option("--cols", synth_flags->cols, "feature dimension D")->capture_default_str();
    synth_cmd->add_option("--rank", synth_flags->rank, "planted rank")->capture_default_str();
    synth_cmd->add_option("--spectrum", synth_flags->spectrum, "planted singular values (default 10/2^j)")
        ->delimiter(',');
    synth_cmd->add_option("--sigma", synth_flags->sigma, "noise level")->capture_default_str();
    synth_cmd->add_option("--tail", synth_flags->tail, "noise tail for robustness probing (lowrank kind)")
        ->check(CLI::IsMember({"gaussian", "laplace"}))
        ->capture_default_str();
    synth_cmd->add_option("--background", synth_flags->background, "background rows (outliers kind)")
        ->capture_default_str();
    synth_cmd->add_option("--outliers", synth_flags->outliers, "outlier rows (outliers kind)")
        ->capture_default_str();
    synth_cmd->add_option("--seed", synth_flags->seed, "rng seed");
    synth_cmd->add_option("--out", synth_flags->out, "output directory")->required();
    synth_cmd->callback([synth_flags] {
        lrcp::PlantedInstance instance;
        lrcp::io::json config;
        if (synth_flags->kind == "lowrank") {
            std::vector<double> spectrum = synth_flags->spectrum;
            if (spectrum.empty()) {
                double value = 10.0;
                for (Index j = 0; j < synth_flags->rank; ++j, value /= 2.0) spectrum.push_back(value);
            }
            const bool laplace = synth_flags->tail == "laplace" && synth_flags->sigma > 0.0;
            instance = lrcp::gen_low_rank_noise(synth_flags->rows, synth_flags->cols, synth_flags->rank, spectrum,
                                                laplace ? 0.0 : synth_flags->sigma, synth_flags->seed);
            if (laplace) {
                // unit-variance Laplace via inverse CDF, scaled to sigma
                lrcp::Rng rng(lrcp::derive_seed(synth_flags->seed, 3));
                const double scale = synth_flags->sigma / std::sqrt(2.0);
                for (Index i = 0; i < instance.matrix.rows(); ++i) {
                    for (Index j = 0; j < instance.matrix.cols(); ++j) {
                        const double u = lrcp::uniform_unit(rng) - 0.5;
                        const double magnitude = std::max(1.0 - 2.0 * std::abs(u), 1e-300);
                        instance.matrix(i, j) += (u < 0.0 ? scale : -scale) * std::log(magnitude);
                    }
                }
                instance.noise_sigma = synth_flags->sigma;
            }
            config = {{"kind", "lowrank"},       {"rows", synth_flags->rows},   {"cols", synth_flags->cols},
                      {"rank", synth_flags->rank}, {"spectrum", spectrum},       {"sigma", synth_flags->sigma},
                      {"tail", synth_flags->tail}, {"seed", synth_flags->seed}};
        } else {
            instance = lrcp::gen_background_outliers(synth_flags->background, synth_flags->outliers,
                                                     synth_flags->cols, synth_flags->rank, synth_flags->seed);
            config = {{"kind", "outliers"},
                      {"background", synth_flags->background},
                      {"outliers", synth_flags->outliers},
                      {"cols", synth_flags->cols},
                      {"rank", synth_flags->rank},
                      {"seed", synth_flags->seed}};
        }
        ensure_out_dir(synth_flags->out);
        lrcp::io::save_matrix(instance.matrix, fs::path(synth_flags->out) / "matrix.npy");
        lrcp::io::save_matrix(instance.true_subspace.basis, fs::path(synth_flags->out) / "basis.npy");
        lrcp::io::json j;
        j["config"] = config;
        j["outlier_indices"] = instance.outlier_indices;
        j["noise_sigma"] = instance.noise_sigma;
        j["shape"] = {instance.matrix.rows(), instance.matrix.cols()};
        lrcp::io::write_report(j, fs::path(synth_flags->out) / "instance.json");
        std::cout << "wrote " << instance.matrix.rows() << "x" << instance.matrix.cols() << " instance to "
                  << synth_flags->out << "\n";
    });

    // ---- oracle --------------------------------------------------------
    struct OracleFlags {
        std::string input;
        Index rank = 4;
        Index budget = 0;
        lrcp::Centering centering = lrcp::Centering::None;
        std::uint64_t seed = 0;
    };
    auto oracle_flags = std::make_shared<OracleFlags>();
    CLI::App* oracle_cmd =
        app.add_subcommand("oracle", "verify top-K selection against exhaustive subset enumeration");
    oracle_cmd->add_option("input", oracle_flags->input, "token matrix (.npy)")->required();
    oracle_cmd->add_option("--rank", oracle_flags->rank, "subspace dimension r")->capture_default_str();
    oracle_cmd->add_option("--budget", oracle_flags->budget, "retention budget K")->required();
    oracle_cmd->add_option("--center", oracle_flags->centering, "centering mode")
        ->transform(CLI::CheckedTransformer(kCenterNames));
    oracle_cmd->add_option("--seed", oracle_flags->seed, "rng seed");
    oracle_cmd->callback([oracle_flags, &exit_code] {
        const Matrix x = lrcp::io::load_matrix(oracle_flags->input);
        lrcp::CompressionConfig cfg;
        cfg.rank = oracle_flags->rank;
        cfg.budget = oracle_flags->budget;
        cfg.centering = oracle_flags->centering;
        cfg.seed = oracle_flags->seed;

        const lrcp::Subspace subspace = lrcp::build_subspace(x, cfg);
        const lrcp::Vector residuals = lrcp::projection_residuals(x, subspace);
        const std::vector<Index> selected = lrcp::select_top_k(residuals, cfg.budget);
        const double selection_loss = lrcp::surrogate_loss(x, subspace, selected);
        const lrcp::SubsetSearchResult best = lrcp::brute_force_best_subset(x, subspace, cfg.budget);

        std::cout << "selection loss   " << lrcp::io::format_double(selection_loss) << "\n";
        std::cout << "enumeration loss " << lrcp::io::format_double(best.loss) << "\n";
        if (selection_loss != best.loss) {
            std::cerr << "MISMATCH: top-K selection is not optimal on this instance\n";
            exit_code = 2;
            return;
        }
        std::cout << "selection matches the exhaustive optimum over all size-" << cfg.budget << " subsets\n";
    });

    // ---- bench ---------------------------------------------------------
    struct BenchFlags {
        std::vector<Index> sizes = {512, 1024, 2048, 4096};
        Index dim = 4096;
        Index rank = 4;
        Index budget = 64;
        int repeat = 5;
        std::uint64_t seed = 0;
        std::string out;
    };
    auto bench_flags = std::make_shared<BenchFlags>();
    CLI::App* bench_cmd = app.add_subcommand("bench", "wall-time scaling of compress over token counts");
    bench_cmd->add_option("--sizes", bench_flags->sizes, "token counts N")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--dim", bench_flags->dim, "feature dimension D")->capture_default_str();
    bench_cmd->add_option("--rank", bench_flags->rank, "subspace dimension r")->capture_default_str();
    bench_cmd->add_option("--budget", bench_flags->budget, "retention budget K")->capture_default_str();
    bench_cmd->add_option("--repeat", bench_flags->repeat, "runs per size (median reported)")
        ->capture_default_str();
    bench_cmd->add_option("--seed", bench_flags->seed, "rng seed");
    bench_cmd->add_option("--out", bench_flags->out, "CSV output path (default: stdout only)");
    bench_cmd->callback([bench_flags] {
        if (bench_flags->repeat < 1) {
            throw lrcp::Error(lrcp::ErrorCode::InvalidArgument, "--repeat must be positive");
        }
        std::vector<std::vector<std::string>> rows;
        for (const Index n : bench_flags->sizes) {
            const Index planted_rank = std::min<Index>(8, std::min(n, bench_flags->dim) - 1);
            std::vector<double> spectrum;
            for (Index j = 0; j < planted_rank; ++j) spectrum.push_back(100.0 - 10.0 * static_cast<double>(j));
            const lrcp::PlantedInstance instance =
                lrcp::gen_low_rank_noise(n, bench_flags->dim, planted_rank, spectrum, 0.05, bench_flags->seed);

            lrcp::CompressionConfig cfg;
            cfg.rank = bench_flags->rank;
            cfg.budget = std::min(bench_flags->budget, n);
            cfg.seed = bench_flags->seed;

            std::vector<double> times;
            for (int r = 0; r < bench_flags->repeat; ++r) {
                const auto start = std::chrono::steady_clock::now();
                const lrcp::CompressionResult result = lrcp::compress(instance.matrix, cfg);
                const auto stop = std::chrono::steady_clock::now();
                (void)result;
                times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
            }
            std::sort(times.begin(), times.end());
            const double median = times[times.size() / 2];
            std::cout << "N=" << n << " D=" << bench_flags->dim << " r=" << bench_flags->rank
                      << " K=" << cfg.budget << " median " << lrcp::io::format_double(median) << " ms\n";
            rows.push_back({std::to_string(n), std::to_string(bench_flags->dim),
                            std::to_string(bench_flags->rank), std::to_string(cfg.budget),
                            std::to_string(bench_flags->repeat), lrcp::io::format_double(median)});
        }
        if (!bench_flags->out.empty()) {
            lrcp::io::write_csv(bench_flags->out, {"n", "d", "rank", "budget", "repeat", "median_ms"}, rows);
        }
    });

    // ---- plan ----------------------------------------------------------
    struct PlanFlags {
        Index tokens = 576;
        std::string ratios = "1/6,1/3";
        Index layers = 32;
        Index compress_layer = 16;
        std::string out;
    };
    auto plan_flags = std::make_shared<PlanFlags>();
    CLI::App* plan_cmd = app.add_subcommand("plan", "staged retention-plan arithmetic");
    plan_cmd->add_option("--tokens", plan_flags->tokens, "initial token count N0")->capture_default_str();
    plan_cmd->add_option("--ratios", plan_flags->ratios, "per-stage retain ratios, decimals or fractions")
        ->capture_default_str();
    plan_cmd->add_option("--layers", plan_flags->layers, "LLM layer count L")->capture_default_str();
    plan_cmd->add_option("--compress-layer", plan_flags->compress_layer, "intermediate compression layer")
        ->capture_default_str();
    plan_cmd->add_option("--out", plan_flags->out, "report path (default: stdout)");
    plan_cmd->callback([plan_flags] {
        const lrcp::StagedPlan plan = lrcp::make_staged_plan(
            plan_flags->tokens, parse_ratio_list(plan_flags->ratios), plan_flags->layers, plan_flags->compress_layer);
        const lrcp::io::json j = lrcp::io::to_json(plan);
        if (plan_flags->out.empty()) {
            std::cout << j.dump(2) << "\n";
        } else {
            lrcp::io::write_report(j, plan_flags->out);
            std::cout << "final keep " << plan.final_keep << " of " << plan.total_tokens << " tokens\n";
        }
    });

    // ---- staged --------------------------------------------------------
    struct StagedFlags : CompressFlags {
        std::vector<std::string> inputs;
        std::string ratios = "1/6,1/3";
        Index layers = 32;
        Index compress_layer = 16;
    };
    auto staged_flags = std::make_shared<StagedFlags>();
    CLI::App* staged_cmd = app.add_subcommand(
        "staged", "run a multi-stage plan (one input = simulation, one per stage = replay)");
    staged_cmd->add_option("inputs", staged_flags->inputs, "token matrices (.npy)")->required();
    staged_cmd->add_option("--ratios", staged_flags->ratios, "per-stage retain ratios")->capture_default_str();
    staged_cmd->add_option("--layers", staged_flags->layers, "LLM layer count L")->capture_default_str();
    staged_cmd->add_option("--compress-layer", staged_flags->compress_layer, "intermediate compression layer")
        ->capture_default_str();
    staged_flags->add_common(staged_cmd);
    staged_cmd->add_option("--out", staged_flags->out, "output directory")->required();
    staged_cmd->callback([staged_flags] {
        std::vector<Matrix> inputs;
        for (const std::string& path : staged_flags->inputs) {
            inputs.push_back(lrcp::io::load_matrix(path));
        }
        const lrcp::StagedPlan plan = lrcp::make_staged_plan(inputs[0].rows(),
                                                             parse_ratio_list(staged_flags->ratios),
                                                             staged_flags->layers, staged_flags->compress_layer);
        lrcp::CompressionConfig cfg = staged_flags->cfg;
        cfg.merge = !staged_flags->no_merge;
        const std::vector<lrcp::CompressionResult> results = lrcp::compress_staged(inputs, plan, cfg);

        ensure_out_dir(staged_flags->out);
        lrcp::io::write_report(lrcp::io::to_json(plan), fs::path(staged_flags->out) / "plan.json");
        const Matrix* stage_input = &inputs[0];
        for (std::size_t t = 0; t < results.size(); ++t) {
            lrcp::CompressionConfig stage_cfg = cfg;
            stage_cfg.budget = plan.stages[t].absolute_keep;
            const std::string source =
                t < inputs.size() && inputs.size() > 1
                    ? fs::path(staged_flags->inputs[t]).filename().string()
                    : (t == 0 ? fs::path(staged_flags->inputs[0]).filename().string()
                              : "stage" + std::to_string(t) + " output");
            write_compression_outputs(staged_flags->out, "stage" + std::to_string(t + 1), *stage_input, stage_cfg,
                                      results[t], source);
            stage_input = &results[t].output;
            if (inputs.size() > 1 && t + 1 < inputs.size()) stage_input = &inputs[t + 1];
        }
        std::cout << "ran " << results.size() << " stage(s), final " << results.back().output.rows()
                  << " tokens\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const lrcp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
