#include "sadapt/cli.hpp"

#include "sadapt/adapter.hpp"
#include "sadapt/binio.hpp"
#include "sadapt/checkpoint.hpp"
#include "sadapt/error.hpp"
#include "sadapt/evalkit.hpp"
#include "sadapt/rng.hpp"
#include "sadapt/soup.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

namespace sadapt::cli {

namespace fs = std::filesystem;

namespace {

struct LoadedSet {
    EmbeddingSet set;
    std::optional<Manifest> manifest;
};

LoadedSet load_set(const fs::path& path) {
    LoadedSet loaded{read_container(path), std::nullopt};
    const auto mpath = manifest_path_for(path);
    if (fs::exists(mpath)) {
        loaded.manifest = read_manifest(mpath);
        validate_manifest(*loaded.manifest, loaded.set);
    }
    return loaded;
}

std::vector<std::uint32_t> split_indices(const LoadedSet& loaded, const std::string& split) {
    if (!loaded.manifest) {
        return all_indices(loaded.set);
    }
    const auto it = loaded.manifest->splits.find(split);
    if (it == loaded.manifest->splits.end()) {
        fail(ErrorKind::InvalidArgument, "manifest has no split \"" + split + "\"");
    }
    return it->second;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        fail(ErrorKind::IoFailure, "cannot create directory " + dir.string() + ": " + ec.message());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text)) {
        fail(ErrorKind::IoFailure, "cannot write " + path.string());
    }
}

nlohmann::json selection_json(const FewShotSelection& sel) {
    return {{"shots", sel.shots}, {"seed", sel.seed}, {"per_class", sel.per_class}};
}

} // namespace

void cmd_info(const RunConfig& cfg, std::ostream& out) {
    const auto loaded = load_set(cfg.embeddings);
    const auto& set = loaded.set;
    out << "file=" << cfg.embeddings.string() << '\n'
        << "dim=" << set.dim() << '\n'
        << "count=" << set.count() << '\n'
        << "views=" << set.views() << '\n'
        << "classes=" << set.classes() << '\n';
    if (loaded.manifest) {
        out << "dataset=" << loaded.manifest->dataset << '\n' << "model=" << loaded.manifest->model << '\n';
        out << "splits=";
        bool first = true;
        for (const auto& [name, idx] : loaded.manifest->splits) {
            out << (first ? "" : ",") << name << '(' << idx.size() << ')';
            first = false;
        }
        out << '\n';
    } else {
        out << "splits=(no manifest)\n";
    }
    out << "norm_check=ok\n";
}

void cmd_sample(const RunConfig& cfg, std::ostream& out) {
    const auto loaded = load_set(cfg.embeddings);
    const auto sel = sample_few_shot(loaded.set, split_indices(loaded, cfg.split), cfg.shots, cfg.base_seed);
    const auto text = selection_json(sel).dump(2) + "\n";
    if (cfg.out.empty()) {
        out << text;
    } else {
        write_text(cfg.out, text);
        out << "wrote " << cfg.out.string() << '\n';
    }
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
    if (cfg.k == 0) {
        fail(ErrorKind::InvalidArgument, "--k must be at least 1");
    }
    if (cfg.epochs == 0 && cfg.overrides.empty()) {
        out << "note: --epochs 0 writes untrained initializations\n";
    }
    const auto loaded = load_set(cfg.embeddings);
    const auto& set = loaded.set;
    const auto selection = sample_few_shot(set, split_indices(loaded, cfg.split), cfg.shots, cfg.base_seed);

    HyperOverrides overrides;
    overrides.epochs = cfg.epochs;
    overrides.mask = resolve_mask(mask_mode_from_string(cfg.mask), cfg.shots);
    for (const auto& o : cfg.overrides) {
        overrides.apply(o);
    }

    TrainHead head = TrainHead::prototypes();
    std::string head_mode = "prototype";
    if (!cfg.head.empty()) {
        head = TrainHead::from_import(import_head(cfg.head));
        head_mode = "imported";
    }

    std::vector<HyperConfig> configs;
    for (std::size_t j = 0; j < cfg.k; ++j) {
        configs.push_back(sample_hyperconfig(cfg.base_seed, j, overrides));
        // Fail fast on red values that leave no hidden units.
        init_adapter(set.dim(), configs.back().red, 0);
    }

    std::vector<std::optional<TrainResult>> results(cfg.k);
    std::vector<std::exception_ptr> errors(cfg.k);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t j = next++; j < cfg.k; j = next++) {
            try {
                results[j] = train_component(set, selection, head, configs[j]);
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs == 0 ? cfg.k : cfg.jobs, cfg.k));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    std::exception_ptr first_error;
    std::string listing;
    for (std::size_t j = 0; j < cfg.k; ++j) {
        if (errors[j]) {
            try {
                std::rethrow_exception(errors[j]);
            } catch (const std::exception& e) {
                listing += "\n  component " + std::to_string(j) + ": " + e.what();
            }
            if (!first_error) {
                first_error = errors[j];
            }
        }
    }
    if (first_error) {
        try {
            std::rethrow_exception(first_error);
        } catch (const Error& e) {
            fail(e.kind(), "training failed:" + listing);
        }
    }

    ensure_dir(cfg.out);
    for (std::size_t j = 0; j < cfg.k; ++j) {
        const auto& res = *results[j];
        nlohmann::json meta = {
            {"kind", "component"},
            {"index", j},
            {"K", cfg.k},
            {"base_seed", cfg.base_seed},
            {"shots", cfg.shots},
            {"head_mode", head_mode},
            {"hyper", to_json(res.record.config)},
            {"train", to_json(res.record, false)},
        };
        Checkpoint ckpt{res.params, res.scale, meta};
        const auto stem = "component_" + std::to_string(j);
        write_checkpoint(ckpt, cfg.out / (stem + ".sada"));
        meta["train"] = to_json(res.record, true);
        write_text(cfg.out / (stem + ".json"), meta.dump(2) + "\n");
        out << stem << ": red=" << res.record.config.red << " H=" << res.params.hidden
            << " lr=" << res.record.config.lr << " wd=" << res.record.config.weight_decay
            << " s=" << res.record.config.aug_strength << " mask=" << to_string(res.record.config.mask);
        if (res.record.final_loss) {
            out << " loss=" << *res.record.final_loss;
        }
        out << '\n';
    }

    write_text(cfg.out / "selection.json", selection_json(selection).dump(2) + "\n");
    write_container(set.subset(selection.flattened()), cfg.out / "bank.sadp");
    if (head.kind == TrainHead::Kind::Prototype) {
        export_head(build_prototypes(selection_prompts(set, selection), head.prototype_scale),
                    cfg.out / "prototypes.shed");
    }
    out << "wrote " << cfg.k << " components to " << cfg.out.string() << '\n';
}

void cmd_soup(const RunConfig& cfg, std::ostream& out) {
    const auto source = soup_from_checkpoints(cfg.components);
    const auto merged = reparameterize(source.soup);
    const double exact = verify_equivalence(source.soup, merged, cfg.trials, 1e-10);
    const auto shipped = round_to_f32(merged);
    const double stored = verify_equivalence(source.soup, shipped, cfg.trials, cfg.tolerance);
    if (!cfg.out.parent_path().empty()) {
        ensure_dir(cfg.out.parent_path());
    }
    write_checkpoint(merged_checkpoint(source, merged), cfg.out);
    out << "K=" << source.soup.size() << " D=" << merged.dim << " H=" << merged.hidden << '\n'
        << std::scientific << std::setprecision(3) << "equivalence: 64-bit max deviation " << exact
        << ", 32-bit max deviation " << stored << " (tolerance " << cfg.tolerance << ")\n"
        << "wrote " << cfg.out.string() << '\n';
}

void cmd_verify(const RunConfig& cfg, std::ostream& out) {
    const auto source = soup_from_checkpoints(cfg.components);
    double worst = 0.0;
    if (cfg.merged.empty()) {
        worst = verify_equivalence(source.soup, cfg.trials, cfg.tolerance);
    } else {
        const auto merged = read_checkpoint(cfg.merged);
        worst = verify_equivalence(source.soup, merged.params, cfg.trials, cfg.tolerance);
    }
    out << std::scientific << std::setprecision(3) << "ok: max deviation " << worst << " over " << cfg.trials
        << " inputs (tolerance " << cfg.tolerance << ")\n";
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
    auto head = import_head(cfg.head);
    head.origin = cfg.head_kind == "prototype" ? HeadOrigin::Prototype : HeadOrigin::Imported;
    const auto grid = parse_grid(cfg.grid);

    const auto id_loaded = load_set(cfg.id_set);
    std::vector<LoadedSet> ood_loaded;
    for (const auto& p : cfg.ood_sets) {
        ood_loaded.push_back(load_set(p));
    }
    const auto id_split = EvalSplit::whole("id", id_loaded.set);
    std::vector<EvalSplit> ood_splits;
    for (std::size_t i = 0; i < ood_loaded.size(); ++i) {
        ood_splits.push_back(EvalSplit::whole(cfg.ood_sets[i].stem().string(), ood_loaded[i].set));
    }

    std::vector<EvalModel> models;
    for (const auto& p : cfg.adapters) {
        auto ckpt = read_checkpoint(p);
        models.push_back(EvalModel::adapter(p.stem().string(), std::move(ckpt.params)));
    }
    std::optional<SoupSource> components;
    if (!cfg.components.empty()) {
        components = soup_from_checkpoints(cfg.components);
        if (cfg.adapters.empty()) {
            models.push_back(EvalModel::soup("soup", components->soup));
        }
    }
    if (models.empty()) {
        fail(ErrorKind::InvalidArgument, "eval needs --adapter or --components");
    }

    auto report = robustness_report(models, head, id_split, ood_splits, grid);
    if (components) {
        std::vector<EvalSplit> splits{id_split};
        splits.insert(splits.end(), ood_splits.begin(), ood_splits.end());
        merge_into(report, component_average_report(components->soup.components(), head, splits, grid));
    }
    if (!cfg.bank.empty()) {
        const auto bank_set = read_container(cfg.bank);
        if (bank_set.classes() != head.classes() || bank_set.dim() != head.dim()) {
            fail(ErrorKind::ClassSetMismatch, "KNN bank does not match the head");
        }
        const auto bank = make_knn_bank(bank_set, all_indices(bank_set));
        EvalReport knn;
        knn.grid = report.grid;
        knn.baselines.push_back({id_split.name, {}, knn_accuracy(bank, id_split, cfg.knn), {}});
        for (const auto& s : ood_splits) {
            knn.baselines.push_back({s.name, {}, knn_accuracy(bank, s, cfg.knn), {}});
        }
        merge_into(report, knn);
    }

    const auto parent = cfg.out.parent_path();
    if (!parent.empty()) {
        ensure_dir(parent);
    }
    auto csv = cfg.out;
    csv += ".csv";
    auto json = cfg.out;
    json += ".json";
    write_report(report, csv, ReportFormat::Csv);
    write_report(report, json, ReportFormat::Json);

    out << std::fixed << std::setprecision(4);
    for (const auto& b : report.baselines) {
        out << "baseline " << b.split << ':';
        if (b.prototype) out << " prototype=" << *b.prototype;
        if (b.imported) out << " imported=" << *b.imported;
        if (b.knn) out << " knn=" << *b.knn;
        out << '\n';
    }
    for (const auto& m : models) {
        if (const auto best = best_ratio(report, m.name, id_split.name)) {
            out << m.name << ": best id accuracy " << best->second << " at r=" << best->first << '\n';
        }
    }
    out << "wrote " << csv.string() << " and " << json.string() << '\n';
}

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
    const auto bench = generate_synthetic(cfg.synth);
    ensure_dir(cfg.out);

    std::vector<std::string> class_names;
    for (std::size_t c = 0; c < cfg.synth.classes; ++c) {
        class_names.push_back("class_" + std::to_string(c));
    }
    const auto emit = [&](const EmbeddingSet& set, const std::string& stem, const std::string& split) {
        const auto path = cfg.out / (stem + ".sadp");
        write_container(set, path);
        Manifest m{"synthetic", class_names, {{split, all_indices(set)}}, "synthetic"};
        write_manifest(m, manifest_path_for(path));
    };
    emit(bench.train, "train", "train");
    emit(bench.id_test, "id_test", "test");
    emit(bench.ood_test, "ood_test", "shift:rotation");

    // Stand-in for an upstream text head: class means plus a small perturbation.
    ClassifierHead zero_shot;
    zero_shot.origin = HeadOrigin::Imported;
    zero_shot.weights = Matrix(cfg.synth.classes, cfg.synth.dim);
    Rng rng(cfg.synth.seed, "synth-zeroshot");
    const double jitter = 0.3 / std::sqrt(static_cast<double>(cfg.synth.dim));
    for (std::size_t c = 0; c < cfg.synth.classes; ++c) {
        std::vector<double> row(bench.means.row(c).begin(), bench.means.row(c).end());
        for (auto& v : row) {
            v += jitter * rng.normal();
        }
        const auto unit = normalized(row);
        std::copy(unit.begin(), unit.end(), zero_shot.weights.row(c).begin());
    }
    export_head(zero_shot, cfg.out / "zeroshot.shed");
    out << "wrote train/id_test/ood_test containers and zeroshot.shed to " << cfg.out.string() << '\n';
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    CLI::App app{"Soup-Adapter toolkit: adapter ensembles over frozen embeddings", "sadapt"};
    app.require_subcommand(1);

    auto* info = app.add_subcommand("info", "Summarize an embedding container");
    info->add_option("--embeddings", cfg.embeddings, "Container path")->required();

    auto* sample = app.add_subcommand("sample", "Draw a few-shot selection");
    sample->add_option("--embeddings", cfg.embeddings)->required();
    sample->add_option("--shots", cfg.shots)->required();
    sample->add_option("--seed", cfg.base_seed);
    sample->add_option("--split", cfg.split);
    sample->add_option("--out", cfg.out, "Selection JSON (stdout when omitted)");

    auto* train = app.add_subcommand("train", "Train K soup components");
    train->add_option("--embeddings", cfg.embeddings)->required();
    train->add_option("--head", cfg.head, "Imported head; prototypes from the shots when omitted");
    train->add_option("--shots", cfg.shots)->required();
    train->add_option("--k", cfg.k, "Number of components")->capture_default_str();
    train->add_option("--seed", cfg.base_seed);
    train->add_option("--epochs", cfg.epochs)->required();
    train->add_option("--mask", cfg.mask)->check(CLI::IsMember({"auto", "mask", "no-mask"}))->capture_default_str();
    train->add_option("--override", cfg.overrides, "Pin a hyperparameter, key=value");
    train->add_option("--jobs", cfg.jobs, "Worker threads (default: K)");
    train->add_option("--split", cfg.split)->capture_default_str();
    train->add_option("--out", cfg.out, "Output directory")->required();

    auto* soup = app.add_subcommand("soup", "Reparameterize components into one adapter");
    soup->add_option("--components", cfg.components)->required();
    soup->add_option("--out", cfg.out, "Merged checkpoint path")->required();
    soup->add_option("--trials", cfg.trials)->capture_default_str();
    soup->add_option("--tol", cfg.tolerance)->capture_default_str();

    auto* verify = app.add_subcommand("verify", "Check soup/merged-adapter equivalence");
    verify->add_option("--components", cfg.components)->required();
    verify->add_option("--merged", cfg.merged);
    verify->add_option("--trials", cfg.trials)->capture_default_str();
    verify->add_option("--tol", cfg.tolerance)->capture_default_str();

    auto* eval = app.add_subcommand("eval", "Residual-ratio sweeps and robustness report");
    eval->add_option("--head", cfg.head)->required();
    eval->add_option("--head-kind", cfg.head_kind, "Baseline label for the head")
        ->check(CLI::IsMember({"prototype", "imported"}))
        ->capture_default_str();
    eval->add_option("--id", cfg.id_set, "In-distribution container")->required();
    eval->add_option("--ood", cfg.ood_sets, "Shifted containers");
    eval->add_option("--adapter", cfg.adapters, "Adapter or merged checkpoints");
    eval->add_option("--components", cfg.components, "Component checkpoints");
    eval->add_option("--bank", cfg.bank, "KNN bank container");
    eval->add_option("--knn-k", cfg.knn.k)->capture_default_str();
    eval->add_option("--knn-t", cfg.knn.temperature)->capture_default_str();
    eval->add_option("--grid", cfg.grid)->capture_default_str();
    eval->add_option("--out", cfg.out, "Report path prefix (.csv and .json appended)")->required();

    auto* synth = app.add_subcommand("synth", "Write a seeded synthetic benchmark");
    synth->add_option("--out", cfg.out, "Output directory")->required();
    synth->add_option("--classes", cfg.synth.classes)->capture_default_str();
    synth->add_option("--dim", cfg.synth.dim)->capture_default_str();
    synth->add_option("--per-class", cfg.synth.per_class)->capture_default_str();
    synth->add_option("--shift-angle", cfg.synth.shift_angle)->capture_default_str();
    synth->add_option("--noise", cfg.synth.noise)->capture_default_str();
    synth->add_option("--views", cfg.synth.views)->capture_default_str();
    synth->add_option("--seed", cfg.synth.seed);

    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (info->parsed()) cmd_info(cfg, out);
        else if (sample->parsed()) cmd_sample(cfg, out);
        else if (train->parsed()) cmd_train(cfg, out);
        else if (soup->parsed()) cmd_soup(cfg, out);
        else if (verify->parsed()) cmd_verify(cfg, out);
        else if (eval->parsed()) cmd_eval(cfg, out);
        else if (synth->parsed()) cmd_synth(cfg, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}

} // namespace sadapt::cli
