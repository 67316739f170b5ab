#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctb/baselines.hpp"
#include "ctb/dataset.hpp"
#include "ctb/embeddings.hpp"
#include "ctb/errors.hpp"
#include "ctb/generator.hpp"
#include "ctb/metrics.hpp"
#include "ctb/tensor.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 1;   // I/O and parse failures
constexpr int kExitInvalid = 2; // validation, shape, and capacity failures

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError("cannot read " + path);
    return buf.str();
}

// Temp file plus rename so interrupted runs never leave partial output.
void write_file_atomic(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out.good()) throw IoError("cannot write " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw IoError("cannot move output into place at " + path + ": " + ec.message());
}

void emit(const std::string& out_path, const std::string& content) {
    if (out_path.empty()) {
        std::cout << content;
    } else {
        write_file_atomic(out_path, content);
    }
}

struct Options {
    std::string gt, pred, weights, features, out;
    std::uint64_t seed = 0;
    std::size_t d = 64;
    std::size_t roi = 7;
    std::size_t n_index = 1000;
    std::string iou = "all";
};

int cmd_validate(const Options& opt) {
    const ctb::Dataset dataset = ctb::parse_ground_truth(read_file(opt.gt), /*validated=*/false);
    const std::vector<ctb::Violation> violations = ctb::validate_dataset(dataset);
    std::ostringstream report;
    for (const ctb::Violation& v : violations) {
        report << "image '" << v.image_id << "' field '" << v.field << "': " << v.message << "\n";
    }
    if (violations.empty()) report << "ok\n";
    emit(opt.out, report.str());
    return violations.empty() ? kExitOk : kExitInvalid;
}

int cmd_stats(const Options& opt) {
    const ctb::Dataset dataset = ctb::parse_ground_truth(read_file(opt.gt));
    emit(opt.out, ctb::format_stats(ctb::compute_stats(dataset)));
    return kExitOk;
}

int cmd_evaluate(const Options& opt) {
    const ctb::Dataset gt = ctb::parse_ground_truth(read_file(opt.gt));
    const ctb::PredictionSet pred = ctb::parse_predictions(read_file(opt.pred));

    std::vector<std::pair<std::string, ctb::IouSchedule>> presets;
    if (opt.iou == "0.5" || opt.iou == "all") {
        presets.emplace_back("iou=0.5", ctb::IouSchedule::single(0.5));
    }
    if (opt.iou == "0.75" || opt.iou == "all") {
        presets.emplace_back("iou=0.75", ctb::IouSchedule::single(0.75));
    }
    if (opt.iou == "coco" || opt.iou == "all") {
        presets.emplace_back("iou=0.5:0.05:0.95", ctb::IouSchedule::coco());
    }

    std::vector<std::pair<std::string, ctb::MetricReport>> reports;
    for (const auto& [name, schedule] : presets) {
        reports.emplace_back(name, ctb::evaluate(gt, pred, schedule));
    }
    emit(opt.out, ctb::format_report(reports));
    return kExitOk;
}

int cmd_group_baseline(const Options& opt) {
    const ctb::Dataset gt = ctb::parse_ground_truth(read_file(opt.gt));
    const ctb::BaselineConfig cfg;

    ctb::PredictionSet pred;
    for (const ctb::ImageAnnotation& img : gt.images) {
        ctb::ImageAnnotation out_img;
        out_img.image_id = img.image_id;
        out_img.width = img.width;
        out_img.height = img.height;
        out_img.units = img.units;
        std::size_t block_seq = 0;
        for (auto& ids : ctb::baseline_predict(img.units, cfg)) {
            ctb::ContextualBlock block;
            block.block_id = "b" + std::to_string(block_seq++);
            block.units = std::move(ids);
            out_img.blocks.push_back(std::move(block));
        }
        pred.images.push_back(std::move(out_img));
    }
    emit(opt.out, ctb::serialize_predictions(pred));
    return kExitOk;
}

int cmd_infer(const Options& opt) {
    const auto detections = ctb::parse_detections(read_file(opt.pred));
    const ctb::TensorArchive weights = ctb::load_archive(read_file(opt.weights));
    const ctb::TensorArchive features = ctb::load_archive(read_file(opt.features));
    const ctb::FeatureMap fm = ctb::feature_map_from_archive(features);

    ctb::EmbeddingConfig ecfg;
    ecfg.d = opt.d;
    ecfg.roi = opt.roi;
    ecfg.n_index = opt.n_index;
    ecfg.check();
    const ctb::GeneratorConfig gcfg;
    const ctb::GeneratorWeights gw = ctb::GeneratorWeights::from_archive(weights, ecfg, gcfg);

    ctb::PredictionSet pred;
    for (const ctb::ImageAnnotation& img : detections) {
        std::vector<ctb::Polygon> polys;
        polys.reserve(img.units.size());
        for (const ctb::IntegralUnit& u : img.units) polys.push_back(u.polygon);

        ctb::ImageAnnotation out_img;
        out_img.image_id = img.image_id;
        out_img.width = img.width;
        out_img.height = img.height;

        if (!polys.empty()) {
            const ctb::TokenMatrix tokens =
                ctb::build_tokens(polys, fm, weights, ecfg, opt.seed);
            const ctb::Matrix hidden = ctb::attention_forward(tokens, gw, gcfg);
            const auto [logits, assignment] = ctb::predict_indices(hidden, gw);
            const ctb::IndexGraph graph = ctb::build_graph(assignment, tokens, ecfg.n_index);
            const ctb::BlockPrediction blocks = ctb::extract_blocks(graph);

            // Tokens classified "not a text" are dropped entirely so the
            // emitted file satisfies the prediction-schema partition rule.
            for (std::size_t vertex : graph.vertices) out_img.units.push_back(img.units[vertex]);
            std::size_t block_seq = 0;
            for (const auto& token_block : blocks.blocks) {
                ctb::ContextualBlock block;
                block.block_id = "b" + std::to_string(block_seq++);
                for (std::size_t token : token_block) {
                    block.units.push_back(img.units[token].unit_id);
                }
                out_img.blocks.push_back(std::move(block));
            }
        }
        pred.images.push_back(std::move(out_img));
    }
    emit(opt.out, ctb::serialize_predictions(pred));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contextual text block detection toolkit"};
    app.require_subcommand(1);

    Options opt;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", opt.out, "Output path (stdout when omitted)");
    };

    CLI::App* validate = app.add_subcommand("validate", "Check a ground-truth file");
    validate->add_option("--gt", opt.gt, "Ground-truth file")->required();
    add_common(validate);

    CLI::App* stats = app.add_subcommand("stats", "Dataset statistics");
    stats->add_option("--gt", opt.gt, "Ground-truth file")->required();
    add_common(stats);

    CLI::App* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
    evaluate->add_option("--gt", opt.gt, "Ground-truth file")->required();
    evaluate->add_option("--pred", opt.pred, "Prediction file")->required();
    evaluate->add_option("--iou", opt.iou, "IoU preset: 0.5, 0.75, coco, or all")
        ->check(CLI::IsMember({"0.5", "0.75", "coco", "all"}));
    add_common(evaluate);

    CLI::App* baseline = app.add_subcommand(
        "group-baseline", "Mean-shift + reading-order predictions from ground-truth units");
    baseline->add_option("--gt", opt.gt, "Ground-truth file (its units are used)")->required();
    add_common(baseline);

    CLI::App* infer = app.add_subcommand("infer", "Run the block generator over detections");
    infer->add_option("--pred", opt.pred, "Detections file (blocks ignored)")->required();
    infer->add_option("--weights", opt.weights, "CTBW weight archive")->required();
    infer->add_option("--features", opt.features, "CTBW archive with featmap and stride")
        ->required();
    infer->add_option("--seed", opt.seed, "Index assignment seed");
    infer->add_option("--d", opt.d, "Embedding dimension");
    infer->add_option("--roi", opt.roi, "ROI grid side");
    infer->add_option("--n-index", opt.n_index, "Index class count N");
    add_common(infer);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (validate->parsed()) return cmd_validate(opt);
        if (stats->parsed()) return cmd_stats(opt);
        if (evaluate->parsed()) return cmd_evaluate(opt);
        if (baseline->parsed()) return cmd_group_baseline(opt);
        if (infer->parsed()) return cmd_infer(opt);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const ctb::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const ctb::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const ctb::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    }
    return kExitOk;
}
