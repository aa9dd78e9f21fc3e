// Writes the 12-image synthetic evaluation corpus: five identities with two
// images each plus two non-face images, the manifest, the planted face
// rectangles and the precomputed encodings produced by the fixture cascade
// and the reference embedder. Output is byte-for-byte reproducible.

#include "fixture_synth.hpp"

#include "facegate/cascade.hpp"
#include "facegate/encoding.hpp"
#include "facegate/eval.hpp"
#include "facegate/image.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace facegate;

namespace {

constexpr int kSide = 128;
constexpr int kFace = 72;

struct Planted {
    std::string path;
    std::string label;
    RgbImage image;
    std::optional<Rect> face;
};

std::vector<Planted> build_corpus() {
    static const char* kNames[] = {"alice", "bob", "carol", "dave", "erin"};
    std::vector<Planted> out;
    for (int k = 0; k < 5; ++k) {
        for (int v = 0; v < 2; ++v) {
            RgbImage img = synth::background(kSide, kSide, 50 + 12 * k + 20 * v, v ? -30 : 30, 4,
                                             100 + static_cast<std::uint64_t>(k * 10 + v));
            const Rect r{(kSide - kFace) / 2 + (v ? -9 : 7), (kSide - kFace) / 2 + (v ? 6 : -8), kFace, kFace};
            synth::draw_face(img, r, synth::identity(k));
            synth::add_noise(img, 3, 900 + static_cast<std::uint64_t>(k * 10 + v));
            out.push_back({std::string(kNames[k]) + std::to_string(v + 1) + ".ppm", kNames[k], std::move(img), r});
        }
    }
    // A smooth frame with nothing on it and a cluttered one.
    out.push_back({"nonface1.ppm", "", synth::background(kSide, kSide, 120, 40, 5, 31337), std::nullopt});
    out.push_back({"nonface2.ppm", "", synth::clutter(kSide, kSide, 4242), std::nullopt});
    return out;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate the synthetic evaluation corpus"};
    std::string out_dir;
    std::string cascade_path;
    app.add_option("--out", out_dir, "Output directory")->required();
    app.add_option("--cascade", cascade_path, "Fixture cascade XML")->required()->check(CLI::ExistingFile);
    CLI11_PARSE(app, argc, argv);

    try {
        const CascadeModel model = load_cascade_file(cascade_path);
        const ReferenceEmbedder embedder;
        fs::create_directories(out_dir);

        std::string manifest = "path,label,has_face\n";
        std::string planted = "path,x,y,w,h\n";
        std::string encodings;
        for (const auto& item : build_corpus()) {
            write_netpbm_file((fs::path(out_dir) / item.path).string(), item.image);
            manifest += item.path + "," + item.label + "," + (item.face ? "true" : "false") + "\n";
            if (item.face) {
                const auto& r = *item.face;
                planted += item.path + "," + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                           std::to_string(r.w) + "," + std::to_string(r.h) + "\n";
            }
            const auto res = encode_pipeline(model, item.image, embedder);
            EncodingLine line;
            line.id = item.path;
            line.provider = embedder.id();
            line.vector = res.encoding;
            line.faces = res.detection.stopping_detections.size();
            encodings += encoding_line_json(line) + "\n";
        }
        write_text(fs::path(out_dir) / "manifest.csv", manifest);
        write_text(fs::path(out_dir) / "planted.csv", planted);
        write_text(fs::path(out_dir) / "encodings.jsonl", encodings);
    } catch (const std::exception& e) {
        std::cerr << "make_fixture_corpus: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
