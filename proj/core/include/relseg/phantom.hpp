#pragma once

#include <filesystem>
#include <vector>

#include "relseg/tensor.hpp"

namespace relseg {

/// Synthetic dermoscopy-style dataset: soft-edged elliptical lesions with
/// intensity contrast, model probability maps (blurred ground truth plus
/// seeded logit noise) and derived calibration cues. The seed fixes the
/// whole dataset bit-exactly.
struct PhantomSpec {
    int n_images = 50;
    int height = 224;
    int width = 224;
    float radius_lo = 0.12f; // lesion semi-axis range, fraction of min(H,W)
    float radius_hi = 0.32f;
    float noise = 0.5f; // logit-noise stddev
    float blur = 1.5f;  // boundary softness (gaussian sigma on gt)
    int phi_channels = 8;
    std::uint64_t seed = 7;

    void validate() const;
};

struct PhantomImage {
    Tensor image;     // grayscale [H,W]
    Tensor gt;        // binary mask [H,W]
    Tensor prob;      // model probability map
    Tensor logits;    // model logits (prob == sigmoid(logits) unless noiseless)
    Tensor consensus; // clean soft target in [0,1]
    Tensor cue_b;     // boundary confidence cue, in (0,1)
    Tensor cue_u;     // uncertainty cue, in (0,1)
    Tensor phi;       // stacked filtered images [C,H,W]
};

PhantomImage gen_phantom_image(const PhantomSpec& spec, int index);
std::vector<PhantomImage> gen_phantom_memory(const PhantomSpec& spec);

/// Writes the dataset directory: per-image TNSR/PGM files plus a
/// manifest.json with the spec and content hashes.
void gen_phantom(const PhantomSpec& spec, const std::filesystem::path& out_dir);

/// Loads a phantom-layout dataset directory (all per-image tensors).
std::vector<PhantomImage> load_phantom_dir(const std::filesystem::path& dir);

} // namespace relseg
