#include "relseg/phantom.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "relseg/pgm_io.hpp"
#include "relseg/tensor_io.hpp"
#include "relseg/util.hpp"

namespace relseg {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct Rng {
    std::mt19937_64 engine;
    explicit Rng(std::uint64_t seed) : engine(seed) {}
    double uniform() { // [0,1)
        return static_cast<double>(engine() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { // Box-Muller, fully deterministic
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }
};

double clamp01(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

} // namespace

void PhantomSpec::validate() const {
    if (height < 16 || width < 16) config_error("phantom: H and W must be >= 16");
    if (n_images < 1) config_error("phantom: need at least one image");
    if (noise < 0.0f || blur < 0.0f) config_error("phantom: noise and blur must be >= 0");
    if (!(radius_lo > 0.0f && radius_hi >= radius_lo && radius_hi < 0.5f)) {
        config_error("phantom: lesion radius range must satisfy 0 < lo <= hi < 0.5");
    }
    if (phi_channels < 1 || phi_channels > 8) {
        config_error("phantom: phi_channels must be in 1..8");
    }
}

PhantomImage gen_phantom_image(const PhantomSpec& spec, int index) {
    spec.validate();
    Rng rng(splitmix64(spec.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(index)));
    const int h = spec.height, w = spec.width;
    const double rmin = spec.radius_lo * std::min(h, w);
    const double rmax = spec.radius_hi * std::min(h, w);

    const double cy = h * rng.uniform(0.35, 0.65);
    const double cx = w * rng.uniform(0.35, 0.65);
    const double ry = rng.uniform(rmin, rmax);
    const double rx = rng.uniform(rmin, rmax);
    const double theta = rng.uniform(0.0, kTwoPi);
    const double ct = std::cos(theta), st = std::sin(theta);

    PhantomImage out;
    out.gt = Tensor({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dy = y - cy, dx = x - cx;
            const double ey = (ct * dx + st * dy) / rx;
            const double ex = (-st * dx + ct * dy) / ry;
            out.gt.at(y, x) = (ey * ey + ex * ex) <= 1.0 ? 1.0f : 0.0f;
        }
    }

    // grayscale image: bright skin, darker lesion, mild texture noise
    const double skin = rng.uniform(0.65, 0.8);
    const double lesion = rng.uniform(0.2, 0.35);
    Tensor raw({h, w});
    for (std::int64_t i = 0; i < raw.numel(); ++i) {
        const double base = out.gt[i] > 0.5f ? lesion : skin;
        raw[i] = static_cast<float>(clamp01(base + 0.03 * rng.normal(), 0.0, 1.0));
    }
    out.image = gaussian_blur(raw, 0.8f);

    // model output: blurred gt in logit space plus seeded noise
    const Tensor soft = spec.blur > 0.0f ? gaussian_blur(out.gt, spec.blur) : out.gt;
    out.consensus = soft;
    out.logits = Tensor({h, w});
    for (std::int64_t i = 0; i < out.logits.numel(); ++i) {
        const double p = clamp01(soft[i], 0.02, 0.98);
        const double z = std::log(p / (1.0 - p)) + spec.noise * rng.normal();
        out.logits[i] = static_cast<float>(z);
    }
    if (spec.noise == 0.0f && spec.blur == 0.0f) {
        out.prob = out.gt; // exact noiseless passthrough
    } else {
        out.prob = sigmoid(out.logits);
    }

    // cues: boundary confidence from the Sobel band of prob, uncertainty
    // from the binary entropy of prob, both squashed into (0,1)
    const Tensor band = maxpool_same(sobel_mag(out.prob), 5);
    out.cue_b = Tensor({h, w});
    out.cue_u = Tensor({h, w});
    for (std::int64_t i = 0; i < band.numel(); ++i) {
        out.cue_b[i] = static_cast<float>(0.02 + 0.96 * band[i]);
        const double p = clamp01(out.prob[i], 1e-7, 1.0 - 1e-7);
        const double entropy = -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p)) / std::log(2.0);
        out.cue_u[i] = static_cast<float>(0.02 + 0.96 * entropy);
    }

    // decoder-feature stand-in: stacked filtered views of image and prob
    out.phi = Tensor({spec.phi_channels, h, w});
    std::vector<Tensor> channels;
    channels.push_back(out.image);
    channels.push_back(gaussian_blur(out.image, 1.0f));
    channels.push_back(gaussian_blur(out.image, 2.0f));
    channels.push_back(sobel_mag(out.image));
    channels.push_back(out.prob);
    channels.push_back(gaussian_blur(out.prob, 1.0f));
    channels.push_back(sobel_mag(out.prob));
    channels.push_back(out.cue_u);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int c = 0; c < spec.phi_channels; ++c) {
        std::copy_n(channels[static_cast<size_t>(c)].data(), hw, out.phi.data() + c * hw);
    }
    return out;
}

std::vector<PhantomImage> gen_phantom_memory(const PhantomSpec& spec) {
    spec.validate();
    std::vector<PhantomImage> out;
    out.reserve(static_cast<size_t>(spec.n_images));
    for (int i = 0; i < spec.n_images; ++i) out.push_back(gen_phantom_image(spec, i));
    return out;
}

namespace {

std::string stem_of(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%04d", index);
    return buf;
}

} // namespace

void gen_phantom(const PhantomSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!std::filesystem::is_directory(out_dir)) {
        data_error("gen_phantom: cannot create output dir " + out_dir.string());
    }

    json manifest;
    manifest["spec"] = {{"n_images", spec.n_images}, {"height", spec.height},
                        {"width", spec.width},       {"radius_lo", spec.radius_lo},
                        {"radius_hi", spec.radius_hi}, {"noise", spec.noise},
                        {"blur", spec.blur},         {"phi_channels", spec.phi_channels},
                        {"seed", spec.seed}};
    json files = json::array();

    for (int i = 0; i < spec.n_images; ++i) {
        const PhantomImage img = gen_phantom_image(spec, i);
        const std::string stem = stem_of(i);
        const std::vector<std::pair<std::string, const Tensor*>> tensors = {
            {stem + ".image.tnsr", &img.image},   {stem + ".prob.tnsr", &img.prob},
            {stem + ".logits.tnsr", &img.logits}, {stem + ".consensus.tnsr", &img.consensus},
            {stem + ".b.tnsr", &img.cue_b},       {stem + ".u.tnsr", &img.cue_u},
            {stem + ".phi.tnsr", &img.phi}};
        for (const auto& [name, t] : tensors) {
            write_tnsr(out_dir / name, *t);
            files.push_back({{"file", name}, {"fnv1a64", hex64(hash_file(out_dir / name))}});
        }
        write_pgm_mask(out_dir / (stem + ".gt.pgm"), img.gt);
        files.push_back({{"file", stem + ".gt.pgm"},
                         {"fnv1a64", hex64(hash_file(out_dir / (stem + ".gt.pgm")))}});
    }
    manifest["files"] = files;
    std::ofstream f(out_dir / "manifest.json");
    if (!f) data_error("gen_phantom: cannot write manifest in " + out_dir.string());
    f << manifest.dump(2) << "\n";
}

std::vector<PhantomImage> load_phantom_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) data_error("not a phantom directory: " + dir.string());
    std::vector<PhantomImage> out;
    for (int i = 0;; ++i) {
        const std::string stem = stem_of(i);
        if (!std::filesystem::exists(dir / (stem + ".prob.tnsr"))) break;
        PhantomImage img;
        img.image = read_tnsr(dir / (stem + ".image.tnsr"));
        img.prob = read_tnsr(dir / (stem + ".prob.tnsr"));
        img.logits = read_tnsr(dir / (stem + ".logits.tnsr"));
        img.consensus = read_tnsr(dir / (stem + ".consensus.tnsr"));
        img.cue_b = read_tnsr(dir / (stem + ".b.tnsr"));
        img.cue_u = read_tnsr(dir / (stem + ".u.tnsr"));
        img.phi = read_tnsr(dir / (stem + ".phi.tnsr"));
        img.gt = read_pgm_mask(dir / (stem + ".gt.pgm"));
        out.push_back(std::move(img));
    }
    if (out.empty()) data_error("no phantom images found in " + dir.string());
    return out;
}

} // namespace relseg
