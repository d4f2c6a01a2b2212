#include "retrofit/artifact.hpp"
#include "retrofit/codec.hpp"
#include "retrofit/datagen.hpp"
#include "retrofit/explain.hpp"
#include "retrofit/features.hpp"
#include "retrofit/hpo.hpp"
#include "retrofit/measures.hpp"
#include "retrofit/metrics.hpp"
#include "retrofit/pipeline.hpp"
#include "retrofit/quality.hpp"
#include "retrofit/service.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace retrofit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw UsageError("cannot read '" + p.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw UsageError("cannot write '" + p.string() + "'");
    out << text;
}

json read_json(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw UsageError("'" + p.string() + "' is not valid JSON: " + e.what());
    }
}

std::vector<BuildingRecord> load_records(const fs::path& path, const DatasetSchema& schema, bool strict = true) {
    auto loaded = load_dataset(path, schema);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
    if (strict && !loaded.rejected.empty()) {
        const auto& r = loaded.rejected.front();
        throw DataError(path.string() + ": " + std::to_string(loaded.rejected.size()) + " rejected rows (first: row " +
                        std::to_string(r.row) + ", column '" + r.column + "': " + r.reason + "); run 'ingest' first");
    }
    return loaded.records;
}

std::optional<DeltaFeatureSpec> load_delta(const std::string& path) {
    if (path.empty()) return std::nullopt;
    const auto j = read_json(path);
    DeltaFeatureSpec d;
    try {
        d.initial_column = j.at("initial_column").get<std::string>();
        d.final_column = j.at("final_column").get<std::string>();
        d.area_column = j.at("area_column").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed delta configuration: ") + e.what());
    }
    d.table = j.contains("table") ? j["table"].get<EnergyClassTable>() : EnergyClassTable::latvia();
    return d;
}

MLPConfig load_mlp_config(const std::string& config_path, const std::string& hpo_path, std::optional<HpoSummary>* hpo) {
    if (!config_path.empty() && !hpo_path.empty()) throw UsageError("--config and --hpo are mutually exclusive");
    MLPConfig c;
    if (!config_path.empty()) c = read_json(config_path).get<MLPConfig>();
    if (!hpo_path.empty()) {
        auto summary = read_json(hpo_path).get<HpoSummary>();
        c = summary.winner;
        if (hpo) *hpo = summary;
    }
    c.validate();
    return c;
}

std::string metrics_line(const MetricsReport& r) {
    std::ostringstream s;
    s.precision(4);
    s << std::fixed << "accuracy " << r.macro.accuracy << "  precision " << r.macro.precision << "  recall "
      << r.macro.recall << "  F1 " << r.macro.f1;
    return s.str();
}

SplitRecord obtain_split(const fs::path& path, const DatasetSchema& schema, const std::vector<BuildingRecord>& records,
                         std::uint64_t seed, bool must_exist) {
    if (fs::exists(path)) {
        auto s = load_split(path);
        verify_split(s, schema, records);
        return s;
    }
    if (must_exist) throw IsolationError("test-index file '" + path.string() + "' does not exist");
    auto s = make_split_record(schema, records, {seed, 0.25, 0.25});
    save_split(s, path);
    std::cerr << "wrote test-index file " << path << '\n';
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Building retrofit recommendation toolkit"};
    app.require_subcommand(1);

    // ingest
    std::string schema_path, input_path, out_path, report_path;
    std::vector<std::string> zscore_cols, required_cols;
    double zscore_threshold = kDefaultZScoreThreshold;
    auto* ingest = app.add_subcommand("ingest", "Validate a CSV against a schema, drop nulls and flag outliers");
    ingest->add_option("--schema", schema_path, "Schema JSON")->required()->check(CLI::ExistingFile);
    ingest->add_option("--input", input_path, "Raw CSV")->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", out_path, "Cleaned CSV")->required();
    ingest->add_option("--report", report_path, "Ingest report JSON");
    ingest->add_option("--required", required_cols, "Columns that must be non-null (default: features and labels)");
    ingest->add_option("--zscore", zscore_cols, "Numerical columns to screen for outliers");
    ingest->add_option("--zscore-threshold", zscore_threshold, "Outlier threshold in standard deviations");

    // train
    std::string data_path, split_path, augment_path, manifest_path, config_path, hpo_path, delta_path, model_out,
        metrics_out;
    std::uint64_t seed = 0;
    double threshold = 0.5;
    auto* train_cmd = app.add_subcommand("train", "Train the multi-label classifier and write a model artifact");
    train_cmd->add_option("--schema", schema_path)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--data", data_path, "Real dataset CSV")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--split", split_path, "Test-index file (created when missing, except with --augment)")
        ->required();
    train_cmd->add_option("--augment", augment_path, "Synthetic rows merged into train and validation")
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--manifest", manifest_path, "Generation manifest of the synthetic rows")
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--config", config_path, "MLP configuration JSON")->check(CLI::ExistingFile);
    train_cmd->add_option("--hpo", hpo_path, "Tuning result JSON; its winner is trained")->check(CLI::ExistingFile);
    train_cmd->add_option("--delta", delta_path, "Energy performance delta configuration JSON")
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--seed", seed, "Split seed when the split file is created");
    train_cmd->add_option("--threshold", threshold, "Decision threshold");
    train_cmd->add_option("--out", model_out, "Model artifact path")->required();
    train_cmd->add_option("--metrics", metrics_out, "Test metrics JSON");

    // tune
    int trials = 50;
    std::string log_path;
    int max_epochs = 200;
    auto* tune = app.add_subcommand("tune", "TPE search with median pruning over the MLP search space");
    tune->add_option("--schema", schema_path)->required()->check(CLI::ExistingFile);
    tune->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
    tune->add_option("--split", split_path)->required();
    tune->add_option("--delta", delta_path)->check(CLI::ExistingFile);
    tune->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);
    tune->add_option("--seed", seed);
    tune->add_option("--max-epochs", max_epochs, "Epoch cap per trial")->check(CLI::PositiveNumber);
    tune->add_option("--log", log_path, "Per-trial JSON lines log");
    tune->add_option("--out", out_path, "Tuning result JSON")->required();

    // generate
    std::size_t budget = 800;
    int epochs = 800;
    auto* generate = app.add_subcommand("generate", "Train the conditional GAN on training rows and sample a balanced set");
    generate->add_option("--schema", schema_path)->required()->check(CLI::ExistingFile);
    generate->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
    generate->add_option("--split", split_path, "Test-index file; test rows are withheld from the GAN")->required();
    generate->add_option("--budget", budget, "Number of synthetic rows");
    generate->add_option("--epochs", epochs, "GAN epochs")->check(CLI::PositiveNumber);
    generate->add_option("--seed", seed);
    generate->add_option("--out", out_path, "Synthetic CSV")->required();
    generate->add_option("--manifest", manifest_path, "Generation manifest JSON")->required();

    // report-quality
    std::string real_path, synth_path, csv_out;
    bool exclude_labels = false;
    auto* quality = app.add_subcommand("report-quality", "Column shape and pair trend scores of synthetic vs real data");
    quality->add_option("--schema", schema_path)->required()->check(CLI::ExistingFile);
    quality->add_option("--real", real_path)->required()->check(CLI::ExistingFile);
    quality->add_option("--synthetic", synth_path)->required()->check(CLI::ExistingFile);
    quality->add_option("--out", out_path, "Quality report JSON")->required();
    quality->add_option("--csv", csv_out, "Per-column scores CSV");
    quality->add_flag("--exclude-labels", exclude_labels, "Score feature columns only");

    // evaluate
    std::vector<std::string> model_paths, model_names;
    auto* eval = app.add_subcommand("evaluate", "Metrics table of one or more models on the persisted test rows");
    eval->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
    eval->add_option("--split", split_path)->required()->check(CLI::ExistingFile);
    eval->add_option("--model", model_paths, "Model artifact (repeatable)")->required()->check(CLI::ExistingFile);
    eval->add_option("--name", model_names, "Train-data label per model");
    eval->add_option("--out", out_path, "Write the table here as well");
    eval->add_option("--json", metrics_out, "Metrics JSON");

    // explain
    std::string model_path, summary_csv_out, svg_dir;
    std::vector<std::size_t> rows;
    int permutations = 0;
    std::size_t limit = 0;
    auto* explain_cmd = app.add_subcommand("explain", "Shapley attributions, summary data and waterfall charts");
    explain_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    explain_cmd->add_option("--data", data_path, "Records to explain")->required()->check(CLI::ExistingFile);
    explain_cmd->add_option("--rows", rows, "Row indices for waterfall charts (default: first row)");
    explain_cmd->add_option("--sampled", permutations, "Force permutation sampling with this many permutations");
    explain_cmd->add_option("--seed", seed);
    explain_cmd->add_option("--limit", limit, "Explain only the first N records (default: all)");
    explain_cmd->add_option("--out", out_path, "Attributions JSON")->required();
    explain_cmd->add_option("--summary-csv", summary_csv_out, "Global ranking CSV");
    explain_cmd->add_option("--waterfall-dir", svg_dir, "Directory for waterfall SVG files");

    // serve
    std::string listen;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP service: POST /recommend, POST /explain, GET /model/info");
    serve_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--listen", listen, std::string("host:port (default: $") + kListenEnv + " or " + kDefaultListen + ")");

    // measure mapping
    std::string map_path;
    auto* validate_map = app.add_subcommand("validate-map", "Check a measure map for conflicting entries");
    validate_map->add_option("--map", map_path)->required()->check(CLI::ExistingFile);
    auto* map_cmd = app.add_subcommand("map-measures", "Map raw improvement descriptions to the four labels");
    map_cmd->add_option("--map", map_path, "Measure map JSON (default: built-in UK map)")->check(CLI::ExistingFile);
    map_cmd->add_option("--input", input_path, "One record per line, measures separated by '|'")->check(CLI::ExistingFile);
    map_cmd->add_option("--out", out_path, "Label CSV");
    bool dump_default = false, ignore_unmapped = false;
    map_cmd->add_flag("--dump-default", dump_default, "Print the built-in map as JSON");
    map_cmd->add_flag("--ignore-unmapped", ignore_unmapped, "Warn about unknown measures instead of failing");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Help and version requests exit 0; malformed command lines share the usage status.
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*ingest) {
            const auto schema = load_schema(schema_path);
            auto loaded = load_dataset(input_path, schema);
            auto dropped = drop_nulls(loaded.records, schema, required_cols);
            json flags = json::object();
            for (const auto& col : zscore_cols) {
                std::vector<std::size_t> src;
                for (auto i : zscore_flags(dropped.kept, schema, col, zscore_threshold))
                    src.push_back(loaded.source_rows[dropped.kept_indices[i]]);
                flags[col] = src;
            }
            write_dataset(out_path, schema, dropped.kept);
            json report = {{"source_rows", loaded.source_rows.size() + loaded.rejected.size()},
                           {"rejected", loaded.rejected},
                           {"nulls", dropped.report},
                           {"zscore_flags", flags},
                           {"zscore_threshold", zscore_threshold},
                           {"warnings", loaded.warnings},
                           {"kept", dropped.kept.size()}};
            if (!report_path.empty()) write_file(report_path, report.dump(2) + "\n");
            std::cout << "kept " << dropped.kept.size() << " records; " << loaded.rejected.size() << " rejected, "
                      << dropped.report.dropped_records << " dropped for nulls\n";
        } else if (*train_cmd) {
            const auto schema = load_schema(schema_path);
            const auto records = load_records(data_path, schema);
            const bool augment = !augment_path.empty();
            if (!manifest_path.empty() && !augment) throw UsageError("--manifest requires --augment");
            // Augmented runs must reuse the split of the baseline run.
            const auto split_rec = obtain_split(split_path, schema, records, seed, augment);
            TrainOptions opts;
            opts.mlp = load_mlp_config(config_path, hpo_path, &opts.hpo);
            opts.delta = load_delta(delta_path);
            opts.threshold = threshold;
            std::vector<BuildingRecord> synthetic;
            if (augment) {
                synthetic = load_records(augment_path, schema);
                if (!manifest_path.empty()) opts.manifest_digest = sha256_hex(read_file(manifest_path));
            }
            const auto outcome = train_model(schema, records, split_rec, synthetic, opts);
            const auto id = save_model(outcome.artifact, model_out);
            std::cout << "model " << id << " (" << outcome.artifact.provenance.training_data << ", best epoch "
                      << outcome.report.best_epoch << ")\ntest: " << metrics_line(outcome.test_metrics) << '\n';
            if (!metrics_out.empty()) {
                json m = {{"model_id", id}, {"split_digest", split_rec.digest}, {"metrics", outcome.test_metrics}};
                write_file(metrics_out, m.dump(2) + "\n");
            }
        } else if (*tune) {
            const auto schema = load_schema(schema_path);
            const auto records = load_records(data_path, schema);
            const auto split_rec = obtain_split(split_path, schema, records, seed, false);
            const auto parts = partition(schema, records, split_rec);
            const auto pipeline = fit_transforms(parts.train, schema, load_delta(delta_path));
            OptimizeOptions o;
            o.n_trials = trials;
            o.seed = seed;
            o.base.max_epochs = max_epochs;
            const auto result = optimize(apply_transforms(parts.train, schema, pipeline).x, label_matrix(parts.train, schema),
                                         apply_transforms(parts.val, schema, pipeline).x, label_matrix(parts.val, schema),
                                         SearchSpace{}, o);
            HpoSummary s;
            s.trials = static_cast<int>(result.trials.size());
            for (const auto& t : result.trials) {
                if (t.status == TrialStatus::Complete) ++s.completed;
                if (t.status == TrialStatus::Pruned) ++s.pruned;
            }
            s.winner = result.best;
            s.best_value = *result.trials[static_cast<std::size_t>(result.best_trial)].value;
            json out = s;
            out["best_trial"] = result.best_trial;
            out["seed"] = seed;
            write_file(out_path, out.dump(2) + "\n");
            if (!log_path.empty()) write_trial_log(log_path, result.trials);
            std::cout << "best trial " << result.best_trial << " validation loss " << s.best_value << " ("
                      << s.completed << " complete, " << s.pruned << " pruned)\n"
                      << json(result.best).dump() << '\n';
        } else if (*generate) {
            const auto schema = load_schema(schema_path);
            const auto records = load_records(data_path, schema);
            const auto split_rec = obtain_split(split_path, schema, records, seed, true);
            const auto parts = partition(schema, records, split_rec);
            auto real = parts.train;
            real.insert(real.end(), parts.val.begin(), parts.val.end());
            GanConfig gan;
            gan.epochs = epochs;
            gan.seed = seed;
            const auto generator = train_gan(schema, real, gan, [&](const GanEpochStats& s) {
                if (s.epoch % 100 == 0 || s.epoch == gan.epochs)
                    std::cerr << "epoch " << s.epoch << ": G " << s.generator_loss << "  D " << s.discriminator_loss << '\n';
            });
            const auto plan = make_balance_plan(label_matrix(real, schema), budget);
            const auto result = generator.generate(plan, seed);
            for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
            write_dataset(out_path, schema, result.records);
            json manifest = {{"seed", seed},
                             {"config", gan},
                             {"plan", plan},
                             {"stats", result.stats},
                             {"warnings", result.warnings},
                             {"training_rows", real.size()},
                             {"split_digest", split_rec.digest},
                             {"synthetic_digest", dataset_digest(schema, result.records)},
                             {"expected_positive_rates", expected_positive_rates(label_matrix(real, schema), plan)}};
            json norms = json::array();
            for (const auto& n : generator.encoder().normalizers()) norms.push_back(n);
            manifest["mode_normalizers"] = norms;
            write_file(manifest_path, manifest.dump(2) + "\n");
            std::cout << "wrote " << result.records.size() << " synthetic rows\n";
        } else if (*quality) {
            const auto schema = load_schema(schema_path);
            const auto real = load_records(real_path, schema);
            const auto synth = load_records(synth_path, schema);
            QualityOptions qo;
            qo.exclude_labels = exclude_labels;
            const auto rep = quality_report(schema, real, synth, qo);
            const auto diag = diagnostic_report(schema, real, schema, synth);
            json out = rep;
            out["diagnostic"] = diag;
            write_file(out_path, out.dump(2) + "\n");
            if (!csv_out.empty()) write_file(csv_out, column_scores_csv(rep));
            std::cout << "column shapes " << rep.column_shapes << "  pair trends " << rep.pair_trends << "  overall "
                      << rep.overall << "  diagnostic " << diag.score << '\n';
        } else if (*eval) {
            if (!model_names.empty() && model_names.size() != model_paths.size())
                throw UsageError("--name must be given once per --model");
            std::vector<MetricsRow> table;
            json all = json::array();
            std::optional<std::string> first_split;
            for (std::size_t i = 0; i < model_paths.size(); ++i) {
                const auto artifact = load_model(model_paths[i]);
                const auto records = load_records(data_path, artifact.schema);
                const auto split_rec = load_split(split_path);
                if (!artifact.provenance.split_digest.empty() && artifact.provenance.split_digest != split_rec.digest)
                    throw IsolationError("model '" + model_paths[i] + "' was trained against a different split");
                const auto report = evaluate_model(artifact, records, split_rec);
                const std::string name = !model_names.empty() ? model_names[i]
                                         : artifact.provenance.training_data == "augmented" ? "Initial + synthetic"
                                                                                           : "Initial";
                table.push_back({name, "Initial", report});
                all.push_back({{"model", model_paths[i]}, {"model_id", artifact.id}, {"train_data", name}, {"metrics", report}});
            }
            const auto text = format_metrics_table(table);
            std::cout << text;
            if (!out_path.empty()) write_file(out_path, text);
            if (!metrics_out.empty()) write_file(metrics_out, all.dump(2) + "\n");
        } else if (*explain_cmd) {
            const auto artifact = load_model(model_path);
            auto records = load_records(data_path, artifact.schema);
            if (records.empty()) throw UsageError("no records to explain");
            if (limit > 0 && limit < records.size()) records.resize(limit);
            const Matrix x = apply_transforms(records, artifact.schema, artifact.pipeline).x;
            const auto names = artifact.pipeline.feature_names();
            const bool exact = permutations == 0 && names.size() <= kMaxExactFeatures;
            if (!exact && permutations == 0) permutations = 2000;
            std::vector<Attribution> attrs;
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                const std::vector<double> row(x.row(r).data(), x.row(r).data() + x.cols());
                std::vector<Attribution> per;
                if (exact) per = shapley_exact_all(artifact.model, row, artifact.background);
                else
                    for (int k = 0; k < kNumLabels; ++k)
                        per.push_back(shapley_sampled(artifact.model, row, artifact.background, k, permutations,
                                                      derive_seed(seed, static_cast<std::uint64_t>(r * kNumLabels + k))));
                for (auto& a : per) {
                    a.feature_names = names;
                    a.feature_values = row;
                    attrs.push_back(std::move(a));
                }
            }
            const auto summary = summarize(attrs);
            json out = {{"model_id", artifact.id}, {"exact", exact}, {"attributions", attrs}, {"summary", summary}};
            write_file(out_path, out.dump(1) + "\n");
            if (!summary_csv_out.empty()) write_file(summary_csv_out, summary_csv(summary));
            if (!svg_dir.empty()) {
                if (rows.empty()) rows.push_back(0);
                for (auto r : rows) {
                    if (r >= records.size()) throw UsageError("row " + std::to_string(r) + " out of range");
                    for (int k = 0; k < kNumLabels; ++k) {
                        const auto& a = attrs[r * kNumLabels + static_cast<std::size_t>(k)];
                        const auto file = fs::path(svg_dir) / ("waterfall_row" + std::to_string(r) + "_" +
                                                               std::string(kCategoryKeys[static_cast<std::size_t>(k)]) + ".svg");
                        write_file(file, waterfall_svg(waterfall(a), std::string(kCategoryTitles[static_cast<std::size_t>(k)])));
                    }
                }
            }
            std::cout << "explained " << records.size() << " records (" << (exact ? "exact" : "sampled") << ")\n";
        } else if (*serve_cmd) {
            RecommendationService service;
            auto artifact = std::make_shared<ModelArtifact>(load_model(model_path));
            std::cerr << "loaded model " << artifact->id << '\n';
            service.load(std::move(artifact));
            const auto address = listen.empty() ? listen_address_from_env() : parse_listen_address(listen);
            std::cerr << "listening on " << address.host << ':' << address.port << '\n';
            serve(service, address);
        } else if (*validate_map) {
            const auto map = load_measure_map(map_path);
            std::size_t n = 0;
            for (const auto& m : map.measures) n += m.size();
            std::cout << "ok: " << n << " measures in 4 categories\n";
        } else if (*map_cmd) {
            auto map = map_path.empty() ? MeasureMap::defaults() : load_measure_map(map_path);
            if (ignore_unmapped) map.unmatched = UnmatchedPolicy::WarnAndIgnore;
            if (dump_default) {
                std::cout << json(map).dump(2) << '\n';
                return 0;
            }
            if (input_path.empty()) throw UsageError("--input is required unless --dump-default is given");
            std::istringstream lines(read_file(input_path));
            std::ostringstream csv;
            for (int k = 0; k < kNumLabels; ++k) csv << (k ? "," : "") << kCategoryKeys[static_cast<std::size_t>(k)];
            csv << '\n';
            std::string line;
            std::size_t unmatched = 0;
            while (std::getline(lines, line)) {
                std::vector<std::string> raw;
                std::stringstream parts(line);
                std::string item;
                while (std::getline(parts, item, '|')) raw.push_back(item);
                const auto r = map_measures(raw, map);
                for (const auto& u : r.unmatched) std::cerr << "warning: unmapped measure '" << u << "'\n";
                unmatched += r.unmatched.size();
                for (int k = 0; k < kNumLabels; ++k) csv << (k ? "," : "") << (r.labels.values[static_cast<std::size_t>(k)] ? 1 : 0);
                csv << '\n';
            }
            if (out_path.empty()) std::cout << csv.str();
            else write_file(out_path, csv.str());
            if (unmatched) std::cerr << unmatched << " unmapped measures ignored\n";
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
