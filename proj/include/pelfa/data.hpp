#pragma once

#include <opencv2/core.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "pelfa/rng.hpp"
#include "pelfa/tensor.hpp"

namespace pelfa {

enum class Subset { VIS, INVIS, PRETRAIN };

std::string subset_name(Subset s);
Subset subset_from_name(const std::string& s);

struct ImageRecord {
    std::string id;
    std::string image_path;
    std::string mask_path;  // empty = no mask
    int label = 0;
    Subset subset = Subset::VIS;
    int fold = -1;  // -1 = unassigned

    // augmented variants carry ids like "img007@v2"; the base id identifies
    // the source sample for leakage audits
    std::string base_id() const;
    bool is_variant() const;
};

struct Manifest {
    std::vector<ImageRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    std::vector<ImageRecord> subset_records(Subset s) const;
};

// CSV schema: header "id,image_path,mask_path,label,subset,fold". A path
// ending in .json selects the JSON array form. Relative paths are resolved
// against the manifest's directory. num_classes < 0 skips the label range
// check; check_paths=false skips file-existence validation.
Manifest load_manifest(const std::string& path, int num_classes = -1, bool check_paths = true);
void save_manifest(const std::string& path, const Manifest& m);

// Stratified-by-label partition into k folds, deterministic in seed. Fold
// sizes differ by at most one per class. Returns warnings for classes with
// fewer than k members.
std::vector<std::string> make_folds(Manifest& m, int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Augmentation

struct ClassificationAugPolicy {
    double rotation_deg = 25.0;   // |angle| bound
    double shear_frac = 0.10;     // |shear| bound
    double translate_frac = 0.10; // |shift| bound per axis, fraction of size
    double hflip_prob = 0.5;
};

struct SegmentationAugPolicy {
    // geometric
    double p_shift_scale_rotate = 0.5;
    double max_shift_frac = 0.0625;
    double max_scale_frac = 0.10;
    double max_rotate_deg = 15.0;
    double p_perspective = 0.5;
    double perspective_frac = 0.05;
    double p_crop = 0.5;
    double crop_scale_min = 0.85;
    double p_padding = 0.5;
    double max_pad_frac = 0.08;
    // intensity
    double p_clahe = 0.5;
    double clahe_clip = 2.0;
    double p_brightness_contrast = 0.5;
    double max_brightness = 0.20;
    double max_contrast = 0.20;
    double p_gamma = 0.5;
    double gamma_min = 0.80;
    double gamma_max = 1.25;
    // texture
    double p_sharpen = 0.5;
    double p_blur = 0.5;
    double p_motion_blur = 0.5;
    double p_value_jitter = 0.5;  // HSV value shift collapses to this on grayscale
    double max_value_shift = 0.10;
};

struct AugmentationSpec {
    ClassificationAugPolicy classification;
    SegmentationAugPolicy segmentation;
};

// Sampled transforms are concrete records so tests can audit the magnitude
// bounds without applying anything.
struct ClsTransformSample {
    double angle_deg = 0, shear = 0, tx_frac = 0, ty_frac = 0;
    bool hflip = false;
};

ClsTransformSample sample_classification_transform(const ClassificationAugPolicy& p, Rng& rng);
cv::Mat apply_classification_transform(const cv::Mat& img, const ClsTransformSample& t,
                                       bool nearest = false);
cv::Mat augment_classification(const cv::Mat& img, const ClassificationAugPolicy& p, Rng& rng);

struct SegTransformSample {
    bool do_ssr = false;
    double shift_x = 0, shift_y = 0, scale = 1.0, rotate_deg = 0;
    bool do_perspective = false;
    std::array<cv::Point2f, 4> quad{};
    bool do_crop = false;
    double crop_scale = 1.0, crop_cx = 0.5, crop_cy = 0.5;
    bool do_padding = false;
    int pad_l = 0, pad_r = 0, pad_t = 0, pad_b = 0;
    bool do_clahe = false;
    bool do_brightness_contrast = false;
    double brightness = 0, contrast = 0;
    bool do_gamma = false;
    double gamma = 1.0;
    bool do_sharpen = false, do_blur = false, do_motion_blur = false;
    int motion_dir = 0;
    bool do_value_jitter = false;
    double value_shift = 0;
};

SegTransformSample sample_segmentation_transform(const SegmentationAugPolicy& p, int w, int h,
                                                 Rng& rng);
// Geometric parts are applied identically to image and mask (mask with
// nearest-neighbor); intensity and texture parts touch the image only.
std::pair<cv::Mat, cv::Mat> apply_segmentation_transform(const cv::Mat& img, const cv::Mat& mask,
                                                         const SegTransformSample& t,
                                                         const SegmentationAugPolicy& p);
std::pair<cv::Mat, cv::Mat> augment_segmentation(const cv::Mat& img, const cv::Mat& mask,
                                                 const SegmentationAugPolicy& p, Rng& rng);

// ---------------------------------------------------------------------------
// Class-balance expansion (record level; files are materialized separately)

// Each fracture record yields itself plus fracture_mult variants, each normal
// record itself plus normal_mult variants. Variant ids are the original id
// suffixed "@v<k>".
std::vector<ImageRecord> balance_expand(const std::vector<ImageRecord>& records,
                                        int fracture_mult = 2, int normal_mult = 6);

// Uniform expansion regardless of label (pretraining's fixed multiplier).
std::vector<ImageRecord> augment_expand(const std::vector<ImageRecord>& records, int variants);

// Writes augmented images (and masks when present) for every variant record
// into out_dir and rewrites the records' paths. Original records pass
// through untouched. Augmentation per variant is seeded by (seed, id).
std::vector<ImageRecord> materialize_variants(const std::vector<ImageRecord>& records,
                                              const ClassificationAugPolicy& policy,
                                              const std::string& out_dir, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic paired corpus

struct SynthOptions {
    int n = 40;
    int classes = 2;
    std::uint64_t seed = 0;
    int size = 224;
    double invis_frac = 0.2;  // 2-class corpora only: tail fraction tagged INVIS
};

// Writes images/, masks/, manifest.csv and corpus_meta.json under out_dir;
// returns the manifest. Deterministic in seed.
Manifest synth_generate(const SynthOptions& opt, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Image I/O bridges

cv::Mat load_gray8(const std::string& path);
void save_gray8(const std::string& path, const cv::Mat& img);
// (1,1,H,W) tensor in [0,1] from an 8-bit grayscale image
Tensor mat_to_tensor01(const cv::Mat& img);
cv::Mat tensor01_to_mat8(const Tensor& t, int batch_index = 0, int channel = 0);

}  // namespace pelfa
