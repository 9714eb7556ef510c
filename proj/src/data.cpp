#include "pelfa/data.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pelfa/errors.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace pelfa {

std::string subset_name(Subset s) {
    switch (s) {
        case Subset::VIS: return "VIS";
        case Subset::INVIS: return "INVIS";
        case Subset::PRETRAIN: return "PRETRAIN";
    }
    return "VIS";
}

Subset subset_from_name(const std::string& s) {
    if (s == "VIS") return Subset::VIS;
    if (s == "INVIS") return Subset::INVIS;
    if (s == "PRETRAIN") return Subset::PRETRAIN;
    throw ParseError("unknown subset tag '" + s + "' (expected VIS, INVIS or PRETRAIN)");
}

std::string ImageRecord::base_id() const {
    const auto pos = id.rfind("@v");
    return pos == std::string::npos ? id : id.substr(0, pos);
}

bool ImageRecord::is_variant() const { return id.rfind("@v") != std::string::npos; }

std::vector<ImageRecord> Manifest::subset_records(Subset s) const {
    std::vector<ImageRecord> out;
    for (const auto& r : records)
        if (r.subset == s) out.push_back(r);
    return out;
}

// ---------------------------------------------------------------------------
// Manifest I/O

namespace {

const char* kCsvHeader = "id,image_path,mask_path,label,subset,fold";

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string resolve_path(const std::string& p, const fs::path& base_dir) {
    if (p.empty()) return p;
    fs::path fp(p);
    if (fp.is_absolute()) return p;
    return (base_dir / fp).string();
}

void validate_record(ImageRecord& r, int row, int num_classes, bool check_paths,
                     const fs::path& base_dir) {
    if (r.id.empty()) throw ParseError("manifest row " + std::to_string(row) + ": empty id");
    if (r.image_path.empty())
        throw ParseError("manifest row " + std::to_string(row) + ": empty image_path");
    if (r.label < 0 || (num_classes > 0 && r.label >= num_classes))
        throw ParseError("manifest row " + std::to_string(row) + ": label " +
                         std::to_string(r.label) + " outside [0," +
                         std::to_string(num_classes) + ")");
    r.image_path = resolve_path(r.image_path, base_dir);
    r.mask_path = resolve_path(r.mask_path, base_dir);
    if (check_paths) {
        if (!fs::exists(r.image_path))
            throw IoError("manifest row " + std::to_string(row) + ": image_path does not exist: " +
                          r.image_path);
        if (!r.mask_path.empty() && !fs::exists(r.mask_path))
            throw IoError("manifest row " + std::to_string(row) + ": mask_path does not exist: " +
                          r.mask_path);
    }
}

}  // namespace

Manifest load_manifest(const std::string& path, int num_classes, bool check_paths) {
    if (!fs::exists(path)) throw IoError("manifest not found: " + path);
    const fs::path base_dir = fs::path(path).parent_path();
    Manifest m;

    if (fs::path(path).extension() == ".json") {
        std::ifstream is(path);
        json j;
        try {
            is >> j;
        } catch (const json::exception& e) {
            throw ParseError("manifest JSON parse failure in " + path + ": " + e.what());
        }
        if (!j.is_array()) throw ParseError("manifest JSON root must be an array: " + path);
        int row = 0;
        for (const auto& item : j) {
            ++row;
            ImageRecord r;
            try {
                r.id = item.at("id").get<std::string>();
                r.image_path = item.at("image_path").get<std::string>();
                r.mask_path = item.value("mask_path", std::string());
                r.label = item.at("label").get<int>();
                r.subset = subset_from_name(item.value("subset", std::string("VIS")));
                r.fold = item.value("fold", -1);
            } catch (const json::exception& e) {
                throw ParseError("manifest row " + std::to_string(row) + ": " + e.what());
            }
            validate_record(r, row, num_classes, check_paths, base_dir);
            m.records.push_back(std::move(r));
        }
    } else {
        std::ifstream is(path);
        std::string line;
        if (!std::getline(is, line)) throw ParseError("manifest is empty (no header): " + path);
        {
            auto hdr = split_csv_row(line);
            auto want = split_csv_row(kCsvHeader);
            if (hdr != want)
                throw ParseError("manifest header mismatch in " + path + ": expected '" +
                                 kCsvHeader + "'");
        }
        int row = 1;
        while (std::getline(is, line)) {
            ++row;
            if (line.empty()) continue;
            auto f = split_csv_row(line);
            if (f.size() != 6)
                throw ParseError("manifest row " + std::to_string(row) + ": expected 6 fields, got " +
                                 std::to_string(f.size()));
            ImageRecord r;
            r.id = f[0];
            r.image_path = f[1];
            r.mask_path = f[2];
            try {
                r.label = std::stoi(f[3]);
            } catch (...) {
                throw ParseError("manifest row " + std::to_string(row) + ": bad label '" + f[3] +
                                 "'");
            }
            r.subset = subset_from_name(f[4]);
            if (f[5].empty()) {
                r.fold = -1;
            } else {
                try {
                    r.fold = std::stoi(f[5]);
                } catch (...) {
                    throw ParseError("manifest row " + std::to_string(row) + ": bad fold '" +
                                     f[5] + "'");
                }
            }
            validate_record(r, row, num_classes, check_paths, base_dir);
            m.records.push_back(std::move(r));
        }
    }

    for (std::size_t i = 0; i < m.records.size(); ++i)
        for (std::size_t j = i + 1; j < m.records.size(); ++j)
            if (m.records[i].id == m.records[j].id)
                throw ParseError("duplicate id '" + m.records[i].id + "' at manifest rows " +
                                 std::to_string(i + 2) + " and " + std::to_string(j + 2));
    return m;
}

void save_manifest(const std::string& path, const Manifest& m) {
    if (fs::path(path).extension() == ".json") {
        json j = json::array();
        for (const auto& r : m.records) {
            json item;
            item["id"] = r.id;
            item["image_path"] = r.image_path;
            item["mask_path"] = r.mask_path;
            item["label"] = r.label;
            item["subset"] = subset_name(r.subset);
            item["fold"] = r.fold;
            j.push_back(item);
        }
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw IoError("cannot write manifest: " + path);
        os << j.dump(2) << "\n";
        return;
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write manifest: " + path);
    os << kCsvHeader << "\n";
    for (const auto& r : m.records) {
        os << r.id << "," << r.image_path << "," << r.mask_path << "," << r.label << ","
           << subset_name(r.subset) << ",";
        if (r.fold >= 0) os << r.fold;
        os << "\n";
    }
    if (!os) throw IoError("manifest write failed: " + path);
}

std::vector<std::string> make_folds(Manifest& m, int k, std::uint64_t seed) {
    if (k < 2) throw ContractViolation("make_folds: k must be >= 2");
    std::vector<std::string> warnings;
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        if (m.records[i].label < 0)
            throw ContractViolation("make_folds: record '" + m.records[i].id + "' is unlabeled");
        by_label[m.records[i].label].push_back(i);
    }
    Rng rng = make_rng(seed, "make_folds");
    for (auto& [label, idx] : by_label) {
        if (static_cast<int>(idx.size()) < k)
            warnings.push_back("class " + std::to_string(label) + " has only " +
                               std::to_string(idx.size()) + " members for k=" + std::to_string(k) +
                               " folds; best-effort assignment");
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < idx.size(); ++i)
            m.records[idx[i]].fold = static_cast<int>(i % static_cast<std::size_t>(k));
    }
    return warnings;
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

cv::Mat mat33_mul(const cv::Mat& a, const cv::Mat& b) { return a * b; }

cv::Mat affine23(const cv::Mat& m33) { return m33.rowRange(0, 2).clone(); }

cv::Mat identity33() { return cv::Mat::eye(3, 3, CV_64F); }

cv::Mat translate33(double tx, double ty) {
    cv::Mat m = identity33();
    m.at<double>(0, 2) = tx;
    m.at<double>(1, 2) = ty;
    return m;
}

cv::Mat rotate33_about(double cx, double cy, double deg, double scale = 1.0) {
    cv::Mat r23 = cv::getRotationMatrix2D(cv::Point2f(static_cast<float>(cx), static_cast<float>(cy)), deg, scale);
    cv::Mat m = identity33();
    r23.copyTo(m.rowRange(0, 2));
    return m;
}

cv::Mat shear33_about(double cx, double cy, double sh) {
    cv::Mat m = identity33();
    m.at<double>(0, 1) = sh;
    m.at<double>(0, 2) = -sh * cy;
    (void)cx;
    return m;
}

cv::Mat hflip33(int w) {
    cv::Mat m = identity33();
    m.at<double>(0, 0) = -1.0;
    m.at<double>(0, 2) = w - 1.0;
    return m;
}

bool is_identity_transform(const ClsTransformSample& t) {
    return t.angle_deg == 0.0 && t.shear == 0.0 && t.tx_frac == 0.0 && t.ty_frac == 0.0 &&
           !t.hflip;
}

}  // namespace

ClsTransformSample sample_classification_transform(const ClassificationAugPolicy& p, Rng& rng) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::uniform_real_distribution<double> prob(0.0, 1.0);
    ClsTransformSample t;
    t.angle_deg = uni(rng) * p.rotation_deg;
    t.shear = uni(rng) * p.shear_frac;
    t.tx_frac = uni(rng) * p.translate_frac;
    t.ty_frac = uni(rng) * p.translate_frac;
    t.hflip = prob(rng) < p.hflip_prob;
    return t;
}

cv::Mat apply_classification_transform(const cv::Mat& img, const ClsTransformSample& t,
                                       bool nearest) {
    if (is_identity_transform(t)) return img.clone();
    const int w = img.cols, h = img.rows;
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    cv::Mat m = identity33();
    if (t.hflip) m = mat33_mul(hflip33(w), m);
    m = mat33_mul(shear33_about(cx, cy, t.shear), m);
    m = mat33_mul(rotate33_about(cx, cy, t.angle_deg), m);
    m = mat33_mul(translate33(t.tx_frac * w, t.ty_frac * h), m);
    cv::Mat out;
    cv::warpAffine(img, out, affine23(m), img.size(),
                   nearest ? cv::INTER_NEAREST : cv::INTER_LINEAR, cv::BORDER_CONSTANT,
                   cv::Scalar(0));
    return out;
}

cv::Mat augment_classification(const cv::Mat& img, const ClassificationAugPolicy& p, Rng& rng) {
    return apply_classification_transform(img, sample_classification_transform(p, rng));
}

SegTransformSample sample_segmentation_transform(const SegmentationAugPolicy& p, int w, int h,
                                                 Rng& rng) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::uniform_real_distribution<double> prob(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SegTransformSample t;
    t.do_ssr = prob(rng) < p.p_shift_scale_rotate;
    if (t.do_ssr) {
        t.shift_x = uni(rng) * p.max_shift_frac;
        t.shift_y = uni(rng) * p.max_shift_frac;
        t.scale = 1.0 + uni(rng) * p.max_scale_frac;
        t.rotate_deg = uni(rng) * p.max_rotate_deg;
    }
    t.do_perspective = prob(rng) < p.p_perspective;
    if (t.do_perspective) {
        const auto jitter = [&](float x, float y) {
            return cv::Point2f(x + static_cast<float>(uni(rng) * p.perspective_frac * w),
                               y + static_cast<float>(uni(rng) * p.perspective_frac * h));
        };
        t.quad = {jitter(0, 0), jitter(static_cast<float>(w - 1), 0),
                  jitter(static_cast<float>(w - 1), static_cast<float>(h - 1)),
                  jitter(0, static_cast<float>(h - 1))};
    }
    t.do_crop = prob(rng) < p.p_crop;
    if (t.do_crop) {
        t.crop_scale = p.crop_scale_min + unit(rng) * (1.0 - p.crop_scale_min);
        t.crop_cx = 0.5 + uni(rng) * (1.0 - t.crop_scale) / 2.0;
        t.crop_cy = 0.5 + uni(rng) * (1.0 - t.crop_scale) / 2.0;
    }
    t.do_padding = prob(rng) < p.p_padding;
    if (t.do_padding) {
        std::uniform_int_distribution<int> pad(0, std::max(1, static_cast<int>(p.max_pad_frac * w)));
        t.pad_l = pad(rng);
        t.pad_r = pad(rng);
        t.pad_t = pad(rng);
        t.pad_b = pad(rng);
    }
    t.do_clahe = prob(rng) < p.p_clahe;
    t.do_brightness_contrast = prob(rng) < p.p_brightness_contrast;
    if (t.do_brightness_contrast) {
        t.brightness = uni(rng) * p.max_brightness;
        t.contrast = uni(rng) * p.max_contrast;
    }
    t.do_gamma = prob(rng) < p.p_gamma;
    if (t.do_gamma) t.gamma = p.gamma_min + unit(rng) * (p.gamma_max - p.gamma_min);
    t.do_sharpen = prob(rng) < p.p_sharpen;
    t.do_blur = prob(rng) < p.p_blur;
    t.do_motion_blur = prob(rng) < p.p_motion_blur;
    if (t.do_motion_blur) {
        std::uniform_int_distribution<int> dir(0, 3);
        t.motion_dir = dir(rng);
    }
    t.do_value_jitter = prob(rng) < p.p_value_jitter;
    if (t.do_value_jitter) t.value_shift = uni(rng) * p.max_value_shift;
    return t;
}

namespace {

void warp_pair(cv::Mat& img, cv::Mat& mask, const cv::Mat& m23, cv::Size size) {
    cv::Mat wi, wm;
    cv::warpAffine(img, wi, m23, size, cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(0));
    img = wi;
    if (!mask.empty()) {
        cv::warpAffine(mask, wm, m23, size, cv::INTER_NEAREST, cv::BORDER_CONSTANT, cv::Scalar(0));
        mask = wm;
    }
}

}  // namespace

std::pair<cv::Mat, cv::Mat> apply_segmentation_transform(const cv::Mat& img, const cv::Mat& mask,
                                                         const SegTransformSample& t,
                                                         const SegmentationAugPolicy& p) {
    cv::Mat im = img.clone();
    cv::Mat mk = mask.empty() ? cv::Mat() : mask.clone();
    const int w = img.cols, h = img.rows;

    if (t.do_ssr) {
        cv::Mat m = rotate33_about((w - 1) / 2.0, (h - 1) / 2.0, t.rotate_deg, t.scale);
        m = mat33_mul(translate33(t.shift_x * w, t.shift_y * h), m);
        warp_pair(im, mk, affine23(m), im.size());
    }
    if (t.do_perspective) {
        const std::array<cv::Point2f, 4> src = {cv::Point2f(0, 0), cv::Point2f(static_cast<float>(w - 1), 0),
                                                cv::Point2f(static_cast<float>(w - 1), static_cast<float>(h - 1)),
                                                cv::Point2f(0, static_cast<float>(h - 1))};
        cv::Mat pm = cv::getPerspectiveTransform(src.data(), t.quad.data());
        cv::Mat wi, wm;
        cv::warpPerspective(im, wi, pm, im.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT,
                            cv::Scalar(0));
        im = wi;
        if (!mk.empty()) {
            cv::warpPerspective(mk, wm, pm, mk.size(), cv::INTER_NEAREST, cv::BORDER_CONSTANT,
                                cv::Scalar(0));
            mk = wm;
        }
    }
    if (t.do_crop) {
        const int cw = std::max(2, static_cast<int>(std::lround(t.crop_scale * w)));
        const int ch = std::max(2, static_cast<int>(std::lround(t.crop_scale * h)));
        const int x0 = std::clamp(static_cast<int>(std::lround(t.crop_cx * w - cw / 2.0)), 0, w - cw);
        const int y0 = std::clamp(static_cast<int>(std::lround(t.crop_cy * h - ch / 2.0)), 0, h - ch);
        const cv::Rect roi(x0, y0, cw, ch);
        cv::Mat ci, cm_;
        cv::resize(im(roi), ci, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);
        im = ci;
        if (!mk.empty()) {
            cv::resize(mk(roi), cm_, cv::Size(w, h), 0, 0, cv::INTER_NEAREST);
            mk = cm_;
        }
    }
    if (t.do_padding && (t.pad_l | t.pad_r | t.pad_t | t.pad_b)) {
        cv::Mat pi, pm2;
        cv::copyMakeBorder(im, pi, t.pad_t, t.pad_b, t.pad_l, t.pad_r, cv::BORDER_CONSTANT,
                           cv::Scalar(0));
        cv::resize(pi, im, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);
        if (!mk.empty()) {
            cv::copyMakeBorder(mk, pm2, t.pad_t, t.pad_b, t.pad_l, t.pad_r, cv::BORDER_CONSTANT,
                               cv::Scalar(0));
            cv::resize(pm2, mk, cv::Size(w, h), 0, 0, cv::INTER_NEAREST);
        }
    }

    // image-only transforms
    if (t.do_clahe) {
        auto clahe = cv::createCLAHE(p.clahe_clip, cv::Size(8, 8));
        cv::Mat ci;
        clahe->apply(im, ci);
        im = ci;
    }
    if (t.do_brightness_contrast)
        im.convertTo(im, -1, 1.0 + t.contrast, t.brightness * 255.0);
    if (t.do_gamma) {
        cv::Mat lut(1, 256, CV_8U);
        for (int i = 0; i < 256; ++i)
            lut.at<uchar>(i) =
                cv::saturate_cast<uchar>(std::pow(i / 255.0, t.gamma) * 255.0);
        cv::LUT(im, lut, im);
    }
    if (t.do_sharpen) {
        const cv::Mat k = (cv::Mat_<float>(3, 3) << 0, -1, 0, -1, 5, -1, 0, -1, 0);
        cv::filter2D(im, im, -1, k);
    }
    if (t.do_blur) cv::GaussianBlur(im, im, cv::Size(3, 3), 0);
    if (t.do_motion_blur) {
        cv::Mat k = cv::Mat::zeros(5, 5, CV_32F);
        for (int i = 0; i < 5; ++i) {
            switch (t.motion_dir) {
                case 0: k.at<float>(2, i) = 0.2f; break;
                case 1: k.at<float>(i, 2) = 0.2f; break;
                case 2: k.at<float>(i, i) = 0.2f; break;
                default: k.at<float>(i, 4 - i) = 0.2f; break;
            }
        }
        cv::filter2D(im, im, -1, k);
    }
    if (t.do_value_jitter) im.convertTo(im, -1, 1.0, t.value_shift * 255.0);

    return {im, mk};
}

std::pair<cv::Mat, cv::Mat> augment_segmentation(const cv::Mat& img, const cv::Mat& mask,
                                                 const SegmentationAugPolicy& p, Rng& rng) {
    if (!mask.empty() && (img.cols != mask.cols || img.rows != mask.rows))
        throw ContractViolation("augment_segmentation: image and mask sizes differ");
    const auto t = sample_segmentation_transform(p, img.cols, img.rows, rng);
    return apply_segmentation_transform(img, mask, t, p);
}

// ---------------------------------------------------------------------------
// Expansion

std::vector<ImageRecord> balance_expand(const std::vector<ImageRecord>& records,
                                        int fracture_mult, int normal_mult) {
    std::vector<ImageRecord> out;
    for (const auto& r : records) {
        if (r.label != 0 && r.label != 1)
            throw ContractViolation("balance_expand: record '" + r.id +
                                    "' is not binary-labeled");
        out.push_back(r);
        const int mult = r.label == 1 ? fracture_mult : normal_mult;
        for (int k = 1; k <= mult; ++k) {
            ImageRecord v = r;
            v.id = r.id + "@v" + std::to_string(k);
            out.push_back(std::move(v));
        }
    }
    return out;
}

std::vector<ImageRecord> augment_expand(const std::vector<ImageRecord>& records, int variants) {
    std::vector<ImageRecord> out;
    for (const auto& r : records) {
        out.push_back(r);
        for (int k = 1; k <= variants; ++k) {
            ImageRecord v = r;
            v.id = r.id + "@v" + std::to_string(k);
            out.push_back(std::move(v));
        }
    }
    return out;
}

namespace {
std::string sanitize_id(const std::string& id) {
    std::string s = id;
    for (char& c : s)
        if (c == '@') c = '_';
    return s;
}
}  // namespace

std::vector<ImageRecord> materialize_variants(const std::vector<ImageRecord>& records,
                                              const ClassificationAugPolicy& policy,
                                              const std::string& out_dir, std::uint64_t seed) {
    fs::create_directories(out_dir);
    std::vector<ImageRecord> out;
    for (const auto& r : records) {
        if (!r.is_variant()) {
            out.push_back(r);
            continue;
        }
        ImageRecord v = r;
        Rng rng = make_rng(seed, "variant:" + r.id);
        const auto t = sample_classification_transform(policy, rng);
        const cv::Mat img = load_gray8(r.image_path);
        const cv::Mat aug = apply_classification_transform(img, t);
        v.image_path = (fs::path(out_dir) / (sanitize_id(r.id) + ".png")).string();
        save_gray8(v.image_path, aug);
        if (!r.mask_path.empty()) {
            const cv::Mat mask = load_gray8(r.mask_path);
            const cv::Mat aug_mask = apply_classification_transform(mask, t, /*nearest=*/true);
            v.mask_path = (fs::path(out_dir) / (sanitize_id(r.id) + "_mask.png")).string();
            save_gray8(v.mask_path, aug_mask);
        }
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

struct PelvisShape {
    cv::Point center;
    int ax, bx;      // outer ellipse semi-axes
    int thickness;   // ring thickness
};

PelvisShape sample_shape(int size, Rng& rng) {
    std::uniform_int_distribution<int> jitter(-8, 8);
    std::uniform_int_distribution<int> a_dist(size / 4 + 2, size / 3 + 2);
    std::uniform_int_distribution<int> b_dist(size / 5 + 2, size / 4 + 2);
    std::uniform_int_distribution<int> t_dist(size / 18, size / 14);
    PelvisShape s;
    s.center = cv::Point(size / 2 + jitter(rng), size / 2 + jitter(rng));
    s.ax = a_dist(rng);
    s.bx = b_dist(rng);
    s.thickness = std::max(4, t_dist(rng));
    return s;
}

cv::Mat draw_mask(const PelvisShape& s, int size) {
    cv::Mat mask = cv::Mat::zeros(size, size, CV_8UC1);
    cv::ellipse(mask, s.center, cv::Size(s.ax, s.bx), 0, 0, 360, cv::Scalar(255), cv::FILLED);
    cv::ellipse(mask, s.center, cv::Size(s.ax - s.thickness, s.bx - s.thickness), 0, 0, 360,
                cv::Scalar(0), cv::FILLED);
    // sacrum-like bridge across the top of the ring
    cv::ellipse(mask, cv::Point(s.center.x, s.center.y - s.bx + s.thickness / 2),
                cv::Size(s.ax / 3, s.thickness), 0, 0, 360, cv::Scalar(255), cv::FILLED);
    return mask;
}

void draw_crack(cv::Mat& img01, const PelvisShape& s, double strength, Rng& rng) {
    std::uniform_real_distribution<double> angle_dist(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> jit(-2.0, 2.0);
    const double phi = angle_dist(rng);
    const double dir_x = std::cos(phi), dir_y = std::sin(phi);
    // walk radially through the ring wall, jittering sideways
    const double r0x = s.ax - s.thickness - 3, r0y = s.bx - s.thickness - 3;
    const double r1x = s.ax + 3, r1y = s.bx + 3;
    const int steps = 8;
    std::vector<cv::Point> pts;
    for (int i = 0; i <= steps; ++i) {
        const double f = static_cast<double>(i) / steps;
        const double rx = r0x + f * (r1x - r0x), ry = r0y + f * (r1y - r0y);
        const double px = s.center.x + rx * dir_x - dir_y * jit(rng);
        const double py = s.center.y + ry * dir_y + dir_x * jit(rng);
        pts.emplace_back(static_cast<int>(std::lround(px)), static_cast<int>(std::lround(py)));
    }
    cv::Mat crack = cv::Mat::zeros(img01.size(), CV_8UC1);
    for (int i = 0; i + 1 < static_cast<int>(pts.size()); ++i)
        cv::line(crack, pts[i], pts[i + 1], cv::Scalar(255), 2);
    for (int y = 0; y < img01.rows; ++y)
        for (int x = 0; x < img01.cols; ++x)
            if (crack.at<uchar>(y, x)) img01.at<float>(y, x) *= static_cast<float>(strength);
}

void draw_texture_patch(cv::Mat& img01, int size, Rng& rng) {
    std::uniform_int_distribution<int> pos(size / 6, size - size / 3);
    const int x0 = pos(rng), y0 = pos(rng), side = size / 6;
    for (int y = y0; y < std::min(size, y0 + side); ++y)
        for (int x = x0; x < std::min(size, x0 + side); ++x)
            img01.at<float>(y, x) = (x / 3) % 2 ? 0.85f : 0.25f;
}

}  // namespace

Manifest synth_generate(const SynthOptions& opt, const std::string& out_dir) {
    if (opt.n < opt.classes)
        throw ContractViolation("synth_generate: n must be >= number of classes");
    if (opt.classes != 2 && opt.classes != 3)
        throw ConfigError("synth_generate: classes must be 2 or 3");
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "images", ec);
    fs::create_directories(fs::path(out_dir) / "masks", ec);
    if (!fs::exists(fs::path(out_dir) / "images"))
        throw IoError("synth_generate: cannot create output directory " + out_dir);

    const fs::path root = fs::absolute(out_dir);
    Manifest m;
    const int invis_start =
        opt.classes == 2 ? opt.n - static_cast<int>(std::lround(opt.invis_frac * opt.n)) : opt.n;

    for (int i = 0; i < opt.n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth%04d", i);
        const std::string id = buf;
        Rng rng = make_rng(opt.seed, "synth:" + std::to_string(opt.seed) + ":" + id);

        int label;
        if (opt.classes == 2)
            label = (i % 5) < 3 ? 1 : 0;  // roughly the fracture-heavy mix of a trauma corpus
        else
            label = i % 3;

        const PelvisShape shape = sample_shape(opt.size, rng);
        const cv::Mat mask = draw_mask(shape, opt.size);

        // speckle background
        cv::Mat img(opt.size, opt.size, CV_32FC1);
        std::normal_distribution<double> noise(0.0, 0.045);
        for (int y = 0; y < opt.size; ++y)
            for (int x = 0; x < opt.size; ++x)
                img.at<float>(y, x) = static_cast<float>(
                    0.14 + 0.05 * (static_cast<double>(y) / opt.size) + noise(rng));
        cv::GaussianBlur(img, img, cv::Size(5, 5), 0);

        // bone intensities over the mask, with a soft halo
        std::normal_distribution<double> bone_noise(0.0, 0.04);
        cv::Mat maskf;
        mask.convertTo(maskf, CV_32F, 1.0 / 255.0);
        cv::Mat halo;
        cv::GaussianBlur(maskf, halo, cv::Size(15, 15), 0);
        for (int y = 0; y < opt.size; ++y)
            for (int x = 0; x < opt.size; ++x) {
                img.at<float>(y, x) += 0.12f * halo.at<float>(y, x);
                if (mask.at<uchar>(y, x))
                    img.at<float>(y, x) = static_cast<float>(0.68 + bone_noise(rng));
            }

        const bool invis = i >= invis_start;
        if (label == 1) draw_crack(img, shape, invis ? 0.62 : 0.25, rng);
        if (label == 2) draw_texture_patch(img, opt.size, rng);

        cv::Mat img8;
        img.convertTo(img8, CV_8UC1, 255.0);
        ImageRecord r;
        r.id = id;
        r.image_path = (root / "images" / (id + ".png")).string();
        r.mask_path = (root / "masks" / (id + ".png")).string();
        r.label = label;
        r.subset = opt.classes == 3 ? Subset::PRETRAIN : (invis ? Subset::INVIS : Subset::VIS);
        save_gray8(r.image_path, img8);
        save_gray8(r.mask_path, mask);
        m.records.push_back(std::move(r));
    }

    save_manifest((root / "manifest.csv").string(), m);
    nlohmann::json meta;
    meta["seed"] = opt.seed;
    meta["n"] = opt.n;
    meta["classes"] = opt.classes;
    meta["size"] = opt.size;
    meta["invis_frac"] = opt.invis_frac;
    meta["generator"] = "pelfa-synth-1";
    std::ofstream os(root / "corpus_meta.json");
    os << meta.dump(2) << "\n";
    return m;
}

// ---------------------------------------------------------------------------
// Image I/O

cv::Mat load_gray8(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (img.empty()) throw IoError("cannot read image: " + path);
    return img;
}

void save_gray8(const std::string& path, const cv::Mat& img) {
    cv::Mat out = img;
    if (img.type() != CV_8UC1) img.convertTo(out, CV_8UC1);
    if (!cv::imwrite(path, out)) throw IoError("cannot write image: " + path);
}

Tensor mat_to_tensor01(const cv::Mat& img) {
    cv::Mat g = img;
    if (img.type() != CV_8UC1) img.convertTo(g, CV_8UC1);
    Tensor t({1, 1, g.rows, g.cols});
    for (int y = 0; y < g.rows; ++y)
        for (int x = 0; x < g.cols; ++x) t.at(0, 0, y, x) = g.at<uchar>(y, x) / 255.0;
    return t;
}

cv::Mat tensor01_to_mat8(const Tensor& t, int batch_index, int channel) {
    require_feature_map(t, "tensor01_to_mat8");
    const int h = t.dim(2), w = t.dim(3);
    cv::Mat img(h, w, CV_8UC1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.at<uchar>(y, x) = cv::saturate_cast<uchar>(
                std::lround(std::clamp(t.at(batch_index, channel, y, x), 0.0, 1.0) * 255.0));
    return img;
}

}  // namespace pelfa
