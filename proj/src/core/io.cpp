#include "uts/core/io.hpp"

#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "uts/core/errors.hpp"

namespace uts::io {

namespace fs = std::filesystem;

Image8 read_png_gray(const fs::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw LoadError("cannot read image: " + path.string());
    Image8 img(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < m.cols; ++x) img.at(y, x) = row[x];
    }
    return img;
}

void write_png_gray(const fs::path& path, const Image8& img) {
    cv::Mat m(img.h, img.w, CV_8UC1);
    for (int y = 0; y < img.h; ++y) {
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < img.w; ++x) row[x] = img.at(y, x);
    }
    if (!cv::imwrite(path.string(), m))
        throw LoadError("cannot write image: " + path.string());
}

Mask8 read_png_mask(const fs::path& path) {
    const Image8 img = read_png_gray(path);
    Mask8 mask(img.h, img.w);
    for (std::size_t i = 0; i < img.px.size(); ++i) mask.px[i] = img.px[i] != 0 ? 1 : 0;
    return mask;
}

void write_png_mask(const fs::path& path, const Mask8& mask) {
    cv::Mat m(mask.h, mask.w, CV_8UC1);
    for (int y = 0; y < mask.h; ++y) {
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < mask.w; ++x) row[x] = mask.at(y, x) ? 255 : 0;
    }
    if (!cv::imwrite(path.string(), m, {cv::IMWRITE_PNG_BILEVEL, 1}))
        throw LoadError("cannot write mask: " + path.string());
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot open file for writing: " + path.string());
    out << content;
    if (!out) throw LoadError("write failed: " + path.string());
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec && !fs::is_directory(dir))
        throw LoadError("cannot create directory: " + dir.string());
}

}  // namespace uts::io
