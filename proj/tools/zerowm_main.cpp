#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "zerowm/distort.hpp"
#include "zerowm/errors.hpp"
#include "zerowm/eval.hpp"
#include "zerowm/metrics.hpp"
#include "zerowm/plot.hpp"
#include "zerowm/store.hpp"
#include "zerowm/synth.hpp"
#include "zerowm/train.hpp"
#include "zerowm/wm.hpp"

namespace fs = std::filesystem;
using namespace zw;

namespace {

WatermarkMessage parse_bits(const std::string& arg, int64_t k, uint64_t seed) {
    if (arg == "random") return WatermarkMessage::random(k, seed);
    if (!arg.empty() && arg[0] == '@') {
        std::ifstream in(arg.substr(1));
        if (!in) throw NotFoundError("cannot open bits file: " + arg.substr(1));
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (text.find_first_of("01") == std::string::npos)
            throw ParameterError("bits file must contain a 0/1 string");
        return WatermarkMessage::from_string(text);
    }
    return WatermarkMessage::from_hex(arg, k);
}

std::vector<DistortionSpec> named_grid(const std::string& name) {
    if (name == "testing") return photometric_suite(DistortionPhase::testing);
    if (name == "training") return photometric_suite(DistortionPhase::training);
    return load_distortion_grid(name);
}

int cmd_synth_data(const std::string& out, int64_t count, uint64_t seed, bool labeled) {
    synth_dataset(out, count, seed, labeled);
    std::cout << "wrote " << count << " images to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume, bool no_rec, bool no_adv,
              int64_t epochs_override, int64_t limit, int64_t seed_override) {
    TrainingConfig cfg =
        config_path.empty() ? TrainingConfig{} : TrainingConfig::load(config_path);
    if (no_rec) cfg.use_reconstructor = false;
    if (no_adv) cfg.use_adversarial = false;
    if (epochs_override >= 0) cfg.epochs = epochs_override;
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);

    ImageSet set = load_image_dir(data_dir, limit);
    if (set.images.empty()) throw PreconditionError("no images found in " + data_dir);
    std::cout << "dataset: " << set.images.size() << " images from " << data_dir << "\n";

    Trainer trainer(cfg);
    std::cout << "parameters: fe=" << trainer.fe().param_count()
              << " disc=" << trainer.disc().param_count()
              << " rec=" << trainer.rec().param_count() << "\n";
    if (!resume.empty()) {
        trainer.resume_from(resume);
        std::cout << "resumed from " << resume << " at epoch " << trainer.completed_epochs()
                  << "\n";
    }
    trainer.on_epoch_end = [&](int64_t epoch, const LossRecord& mean) {
        std::cout << "epoch " << epoch << "/" << cfg.epochs << "  l_d=" << mean.l_d
                  << " l_adv=" << mean.l_adv << " l_r=" << mean.l_r << " l_fe=" << mean.l_fe
                  << std::endl;
    };
    trainer.fit(set.images, out_dir);
    std::cout << "final checkpoint: " << (fs::path(out_dir) / "ckpt_final").string() << "\n";
    return 0;
}

int cmd_register(const std::string& image_path, const std::string& bits_arg, int64_t k,
                 const std::string& ckpt_dir, const std::string& store_dir, uint64_t seed,
                 const RegisterOptions& base_opts) {
    const Image image = load_image(image_path);
    nn::CheckpointReader reader(ckpt_dir);
    nn::FeatureExtractor<float> fe;
    reader.load_fe(fe);

    const WatermarkMessage wm = parse_bits(bits_arg, k, seed);
    RegisterOptions opts = base_opts;
    opts.seed = seed;
    const RegistrationResult result = register_signature(image, wm, fe, reader.id(), opts);

    SignatureStore store(store_dir);
    store.put(result.record);
    std::cout << "record_id: " << result.record.record_id << "\n";
    std::cout << "bits: " << wm.to_hex() << "\n";
    std::cout << "epochs: " << result.epochs_run << "  final_margin: " << result.final_margin
              << "\n";
    return 0;
}

int cmd_extract(const std::string& image_path, const std::string& record_id,
                const std::string& ckpt_dir, const std::string& store_dir) {
    const Image image = load_image(image_path);
    nn::CheckpointReader reader(ckpt_dir);
    nn::FeatureExtractor<float> fe;
    reader.load_fe(fe);
    SignatureStore store(store_dir);
    const SignatureRecord record = store.get(record_id);
    std::vector<double> probs;
    const WatermarkMessage bits = extract_bits(image, record, fe, reader.id(), &probs);
    std::cout << "bits: " << bits.to_hex() << "\n";
    std::cout << "bitstring: " << bits.to_string() << "\n";
    std::cout << "probs:";
    for (double p : probs) std::cout << " " << p;
    std::cout << "\n";
    return 0;
}

int cmd_distort(const std::string& in_path, const std::string& out_path,
                const DistortionSpec& spec) {
    const Image image = load_image(in_path);
    const Image out = apply_distortion(image, spec);
    save_image(out, out_path);
    std::cout << "applied " << spec.describe() << " -> " << out_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& ckpt_dir, const std::string& data_dir,
                 const std::string& grid_name, int64_t runs, int64_t limit,
                 const std::string& report_dir, bool plots, uint64_t seed,
                 const std::string& wm_manifest, const std::string& store_dir,
                 const std::string& probe_train, const std::string& probe_test,
                 int64_t collapse_n) {
    nn::CheckpointReader reader(ckpt_dir);
    nn::FeatureExtractor<float> fe;
    reader.load_fe(fe);
    nn::Reconstructor<float> rec;
    nn::Reconstructor<float>* rec_ptr = nullptr;
    if (reader.has_reconstructor()) {
        reader.load_rec(rec);
        rec_ptr = &rec;
    }
    fs::create_directories(report_dir);
    nlohmann::json summary;
    summary["checkpoint_id"] = reader.id();
    summary["seed"] = seed;

    if (!data_dir.empty()) {
        ImageSet set = load_image_dir(data_dir, limit);
        if (set.images.empty()) throw PreconditionError("no images found in " + data_dir);
        const auto grid = named_grid(grid_name);
        const MetricsReport report =
            invariance_sweep(fe, rec_ptr, reader.id(), set.images, grid, runs, seed);
        report.save(report_dir, "invariance");
        summary["invariance_rows"] = report.rows.size();
        if (plots) {
            PlotSeries cos_series;
            cos_series.label = "cosine";
            for (size_t i = 0; i < report.rows.size(); ++i) {
                cos_series.x.push_back(static_cast<double>(i));
                cos_series.y.push_back(report.rows[i].cosine_mean.value_or(0.0));
            }
            plot_lines({cos_series}, "feature cosine by grid cell",
                       (fs::path(report_dir) / "invariance_cosine.png").string());
        }
        if (collapse_n > 1 && static_cast<int64_t>(set.images.size()) >= collapse_n) {
            std::vector<Image> subset(set.images.begin(), set.images.begin() + collapse_n);
            const Tensor<double> heat = collapse_heatmap(fe, subset);
            summary["collapse_offdiagonal_mean"] = offdiagonal_mean(heat);
            if (plots)
                plot_heatmap(heat, "pairwise feature cosine",
                             (fs::path(report_dir) / "collapse_heatmap.png").string());
            std::ofstream hm(fs::path(report_dir) / "collapse_heatmap.json");
            nlohmann::json hj;
            hj["n"] = collapse_n;
            hj["offdiagonal_mean"] = offdiagonal_mean(heat);
            std::vector<double> vals(heat.data(), heat.data() + heat.numel());
            hj["matrix"] = vals;
            hm << hj.dump(2) << "\n";
        }
    }

    if (!wm_manifest.empty()) {
        if (store_dir.empty()) throw ParameterError("--wm-manifest requires --store");
        SignatureStore store(store_dir);
        std::vector<WatermarkCase> cases;
        std::ifstream in(wm_manifest);
        if (!in) throw NotFoundError("cannot open manifest: " + wm_manifest);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line.rfind("record_id", 0) == 0) continue;
            std::stringstream ss(line);
            std::string id, path, hex;
            std::getline(ss, id, ',');
            std::getline(ss, path, ',');
            std::getline(ss, hex, ',');
            WatermarkCase c;
            c.record = store.get(id);
            c.image = load_image(path);
            c.expected = WatermarkMessage::from_hex(hex, c.record.signature.k);
            cases.push_back(std::move(c));
        }
        const auto grid = named_grid(grid_name);
        const MetricsReport report =
            watermark_robustness_sweep(fe, reader.id(), cases, grid, seed);
        report.save(report_dir, "watermark_robustness");
        summary["watermark_rows"] = report.rows.size();
        if (plots) {
            PlotSeries ber_series;
            ber_series.label = "ber";
            for (size_t i = 0; i < report.rows.size(); ++i) {
                ber_series.x.push_back(static_cast<double>(i));
                ber_series.y.push_back(report.rows[i].ber.value_or(0.0));
            }
            plot_lines({ber_series}, "BER by grid cell",
                       (fs::path(report_dir) / "ber.png").string());
        }
    }

    if (!probe_train.empty()) {
        if (probe_test.empty()) throw ParameterError("--probe-train requires --probe-test");
        ImageSet train = load_image_dir(probe_train);
        ImageSet test = load_image_dir(probe_test);
        ProbeOptions popts;
        popts.seed = seed;
        const ProbeResult pr = linear_probe(fe, train, test, popts);
        summary["probe_top1"] = pr.top1;
        summary["probe_top5"] = pr.top5;
        std::cout << "probe top1=" << pr.top1 << " top5=" << pr.top5 << "\n";
    }

    std::ofstream out(fs::path(report_dir) / "summary.json");
    out << summary.dump(2) << "\n";
    std::cout << "report written to " << report_dir << "\n";
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir, bool no_rec, bool no_adv, int64_t limit,
               int64_t seed_override) {
    if (!no_rec && !no_adv)
        throw ParameterError("ablate requires --no-reconstructor or --no-adversarial");
    const int rc =
        cmd_train(config_path, data_dir, out_dir, "", no_rec, no_adv, -1, limit, seed_override);
    if (rc != 0) return rc;
    // Collapse summary over a slice of the training images.
    nn::CheckpointReader reader((fs::path(out_dir) / "ckpt_final").string());
    nn::FeatureExtractor<float> fe;
    reader.load_fe(fe);
    ImageSet set = load_image_dir(data_dir, 30);
    const Tensor<double> heat = collapse_heatmap(fe, set.images);
    nlohmann::json j;
    j["offdiagonal_mean"] = offdiagonal_mean(heat);
    j["use_reconstructor"] = !no_rec;
    j["use_adversarial"] = !no_adv;
    std::ofstream out(fs::path(out_dir) / "ablation_summary.json");
    out << j.dump(2) << "\n";
    std::cout << "collapse offdiagonal mean: " << offdiagonal_mean(heat) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zerowm: distortion-invariant feature training and multibit zero-watermarking"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth-data", "generate a procedural image dataset");
    std::string synth_out;
    int64_t synth_count = 100;
    uint64_t synth_seed = 0;
    bool synth_labeled = false;
    synth->add_option("--out", synth_out)->required();
    synth->add_option("--count", synth_count);
    synth->add_option("--seed", synth_seed);
    synth->add_flag("--labeled", synth_labeled);

    auto* train = app.add_subcommand("train-features", "run noise-adversarial feature training");
    std::string train_cfg, train_data, train_out, train_resume;
    bool train_norec = false, train_noadv = false;
    int64_t train_epochs = -1, train_limit = -1, train_seed = -1;
    train->add_option("--config", train_cfg);
    train->add_option("--data", train_data)->required();
    train->add_option("--out", train_out)->required();
    train->add_option("--resume", train_resume);
    train->add_flag("--no-reconstructor", train_norec);
    train->add_flag("--no-adversarial", train_noadv);
    train->add_option("--epochs", train_epochs);
    train->add_option("--limit", train_limit);
    train->add_option("--seed", train_seed);

    auto* reg = app.add_subcommand("register", "learn a reference signature for an image");
    std::string reg_image, reg_bits = "random", reg_ckpt, reg_store;
    int64_t reg_k = 30;
    uint64_t reg_seed = 0;
    RegisterOptions reg_opts;
    bool reg_no_early_stop = false;
    reg->add_option("--image", reg_image)->required();
    reg->add_option("--bits", reg_bits, "hex string, @file with 0/1 text, or 'random'");
    reg->add_option("--k", reg_k);
    reg->add_option("--ckpt", reg_ckpt)->required();
    reg->add_option("--store", reg_store)->required();
    reg->add_option("--seed", reg_seed);
    reg->add_option("--max-epochs", reg_opts.max_epochs);
    reg->add_option("--lr", reg_opts.lr);
    reg->add_option("--lambda-c", reg_opts.lambda_c);
    reg->add_option("--margin", reg_opts.margin);
    reg->add_option("--d", reg_opts.d);
    reg->add_flag("--no-early-stop", reg_no_early_stop);

    auto* ext = app.add_subcommand("extract", "extract the watermark bits from an image");
    std::string ext_image, ext_record, ext_ckpt, ext_store;
    ext->add_option("--image", ext_image)->required();
    ext->add_option("--record", ext_record)->required();
    ext->add_option("--ckpt", ext_ckpt)->required();
    ext->add_option("--store", ext_store)->required();

    auto* dis = app.add_subcommand("distort", "apply one deterministic distortion");
    std::string dis_kind, dis_in, dis_out, dis_grid;
    int64_t dis_index = -1;
    uint64_t dis_seed = 0;
    constexpr double kUnset = 1e300;
    double p_degrees = kUnset, p_fraction = kUnset, p_sigma = kUnset, p_quality = kUnset,
           p_factor = kUnset, p_shift = kUnset, p_variance = kUnset, p_density = kUnset,
           p_colors = kUnset, p_threshold = kUnset, p_apply = kUnset;
    std::vector<std::string> p_generic;
    dis->add_option("--kind", dis_kind);
    dis->add_option("--in", dis_in)->required();
    dis->add_option("--out", dis_out)->required();
    dis->add_option("--seed", dis_seed);
    dis->add_option("--grid", dis_grid, "take the spec from a JSON grid file");
    dis->add_option("--index", dis_index, "cell index within --grid");
    dis->add_option("--degrees", p_degrees);
    dis->add_option("--fraction", p_fraction);
    dis->add_option("--sigma", p_sigma);
    dis->add_option("--quality", p_quality);
    dis->add_option("--factor", p_factor);
    dis->add_option("--shift", p_shift);
    dis->add_option("--variance", p_variance);
    dis->add_option("--density", p_density);
    dis->add_option("--colors", p_colors);
    dis->add_option("--threshold", p_threshold);
    dis->add_option("--apply", p_apply);
    dis->add_option("--param", p_generic, "extra name=value parameters");

    auto* ev = app.add_subcommand("evaluate", "run robustness and quality sweeps");
    std::string ev_ckpt, ev_data, ev_grid = "testing", ev_report = "report", ev_manifest,
                ev_store, ev_probe_train, ev_probe_test;
    int64_t ev_runs = 5, ev_limit = -1, ev_collapse = 0;
    uint64_t ev_seed = 0;
    bool ev_plots = false;
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--data", ev_data);
    ev->add_option("--distortion-grid", ev_grid, "testing|training|<path to JSON grid>");
    ev->add_option("--runs", ev_runs);
    ev->add_option("--limit", ev_limit);
    ev->add_option("--report", ev_report);
    ev->add_flag("--plots", ev_plots);
    ev->add_option("--seed", ev_seed);
    ev->add_option("--wm-manifest", ev_manifest, "CSV: record_id,image_path,bits_hex");
    ev->add_option("--store", ev_store);
    ev->add_option("--probe-train", ev_probe_train);
    ev->add_option("--probe-test", ev_probe_test);
    ev->add_option("--collapse", ev_collapse, "heatmap over the first N images");

    auto* ab = app.add_subcommand("ablate", "train with a component disabled");
    std::string ab_cfg, ab_data, ab_out;
    bool ab_norec = false, ab_noadv = false;
    int64_t ab_limit = -1, ab_seed = -1;
    ab->add_option("--config", ab_cfg);
    ab->add_option("--data", ab_data)->required();
    ab->add_option("--out", ab_out)->required();
    ab->add_flag("--no-reconstructor", ab_norec);
    ab->add_flag("--no-adversarial", ab_noadv);
    ab->add_option("--limit", ab_limit);
    ab->add_option("--seed", ab_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return cmd_synth_data(synth_out, synth_count, synth_seed, synth_labeled);
        if (*train)
            return cmd_train(train_cfg, train_data, train_out, train_resume, train_norec,
                             train_noadv, train_epochs, train_limit, train_seed);
        if (*reg) {
            reg_opts.early_stop = !reg_no_early_stop;
            return cmd_register(reg_image, reg_bits, reg_k, reg_ckpt, reg_store, reg_seed,
                                reg_opts);
        }
        if (*ext) return cmd_extract(ext_image, ext_record, ext_ckpt, ext_store);
        if (*dis) {
            DistortionSpec spec;
            if (!dis_grid.empty()) {
                const auto grid = load_distortion_grid(dis_grid);
                if (dis_index < 0 || dis_index >= static_cast<int64_t>(grid.size()))
                    throw ParameterError("--index out of range for grid");
                spec = grid[dis_index];
            } else {
                if (dis_kind.empty()) throw ParameterError("--kind or --grid required");
                spec.kind = kind_from_name(dis_kind);
                spec.seed = dis_seed;
                auto set = [&spec](const char* name, double v) {
                    if (v != 1e300) spec.params[name] = v;
                };
                set("degrees", p_degrees);
                set("fraction", p_fraction);
                set("sigma", p_sigma);
                set("quality", p_quality);
                set("factor", p_factor);
                set("shift", p_shift);
                set("variance", p_variance);
                set("density", p_density);
                set("colors", p_colors);
                set("threshold", p_threshold);
                set("apply", p_apply);
                for (const auto& kv : p_generic) {
                    const auto eq = kv.find('=');
                    if (eq == std::string::npos) throw ParameterError("--param expects name=value");
                    spec.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
                }
            }
            return cmd_distort(dis_in, dis_out, spec);
        }
        if (*ev)
            return cmd_evaluate(ev_ckpt, ev_data, ev_grid, ev_runs, ev_limit, ev_report, ev_plots,
                                ev_seed, ev_manifest, ev_store, ev_probe_train, ev_probe_test,
                                ev_collapse);
        if (*ab) return cmd_ablate(ab_cfg, ab_data, ab_out, ab_norec, ab_noadv, ab_limit, ab_seed);
    } catch (const ParameterError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
