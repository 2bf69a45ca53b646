#include "e3d/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace e3d {

namespace {

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
    return ext;
}

int next_pnm_token(std::istream& is, std::string& tok) {
    tok.clear();
    char c;
    while (is.get(c)) {
        if (c == '#') {
            while (is.get(c) && c != '\n') {}
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) return 1;
            continue;
        }
        tok.push_back(c);
    }
    return tok.empty() ? 0 : 1;
}

}  // namespace

Image8 read_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_pnm: cannot open " + path);
    std::string tok;
    if (!next_pnm_token(is, tok)) throw std::runtime_error("read_pnm: empty file " + path);
    const std::string magic = tok;
    const bool binary = (magic == "P5" || magic == "P6");
    const bool ascii = (magic == "P2" || magic == "P3");
    if (!binary && !ascii) throw std::runtime_error("read_pnm: unsupported magic " + magic);
    const int channels = (magic == "P6" || magic == "P3") ? 3 : 1;

    long vals[3];
    for (int i = 0; i < 3; ++i) {
        if (!next_pnm_token(is, tok)) throw std::runtime_error("read_pnm: truncated header");
        vals[i] = std::stol(tok);
    }
    Image8 img;
    img.w = vals[0];
    img.h = vals[1];
    img.channels = channels;
    const long maxval = vals[2];
    if (img.w < 1 || img.h < 1 || maxval < 1 || maxval > 255) {
        throw std::runtime_error("read_pnm: bad header in " + path);
    }
    const size_t count = static_cast<size_t>(img.h * img.w) * static_cast<size_t>(channels);
    img.pixels.resize(count);
    if (binary) {
        is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(count));
        if (!is) throw std::runtime_error("read_pnm: truncated pixel data in " + path);
    } else {
        for (size_t i = 0; i < count; ++i) {
            if (!next_pnm_token(is, tok)) throw std::runtime_error("read_pnm: truncated pixels");
            img.pixels[i] = static_cast<std::uint8_t>(std::stol(tok));
        }
    }
    return img;
}

void write_pnm(const std::string& path, const Image8& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pnm: cannot open " + path);
    os << (img.channels == 3 ? "P6" : "P5") << "\n" << img.w << " " << img.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.pixels.data()),
             static_cast<std::streamsize>(img.pixels.size()));
    if (!os) throw std::runtime_error("write_pnm: write failed for " + path);
}

Image8 read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("read_png: cannot open " + path);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_stdio(&image, fp)) {
        std::fclose(fp);
        throw std::runtime_error("read_png: " + path + ": " + image.message);
    }
    const bool grey = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = grey ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image8 img;
    img.w = image.width;
    img.h = image.height;
    img.channels = grey ? 1 : 3;
    img.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
        std::fclose(fp);
        throw std::runtime_error("read_png: " + path + ": " + image.message);
    }
    std::fclose(fp);
    return img;
}

void write_png(const std::string& path, const Image8& img) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.w);
    image.height = static_cast<png_uint_32>(img.h);
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
        throw std::runtime_error("write_png: " + path + ": " + image.message);
    }
}

Image8 read_image(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "png") return read_png(path);
    if (ext == "pgm" || ext == "ppm" || ext == "pnm") return read_pnm(path);
    throw std::runtime_error("read_image: unsupported extension ." + ext + " (" + path + ")");
}

void write_image(const std::string& path, const Image8& img) {
    const std::string ext = lower_ext(path);
    if (ext == "png") {
        write_png(path, img);
    } else if (ext == "pgm" || ext == "ppm" || ext == "pnm") {
        write_pnm(path, img);
    } else {
        throw std::runtime_error("write_image: unsupported extension ." + ext + " (" + path + ")");
    }
}

}  // namespace e3d
