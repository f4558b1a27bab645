#include "wsss/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "wsss/error.hpp"
#include "wsss/image_io.hpp"
#include "wsss/rng.hpp"

namespace wsss {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// ---- synthetic shapes -------------------------------------------------------

struct Rgb {
  double r, g, b;
};

const Rgb kClassColors[kMaxSyntheticClasses] = {
    {0.85, 0.15, 0.15},  // disk
    {0.15, 0.75, 0.20},  // square
    {0.15, 0.25, 0.85},  // triangle
    {0.90, 0.85, 0.10},  // ring
    {0.80, 0.20, 0.80},  // bar
    {0.10, 0.80, 0.80},  // cross
};

struct ShapeInstance {
  std::size_t cls;
  double cx, cy, r;
  bool vertical;
};

bool inside(const ShapeInstance& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  switch (s.cls) {
    case 0:
      return dx * dx + dy * dy <= s.r * s.r;
    case 1:
      return std::abs(dx) <= s.r * 0.85 && std::abs(dy) <= s.r * 0.85;
    case 2: {
      // Upward triangle with apex at cy - r and base at cy + r.
      if (dy < -s.r || dy > s.r) return false;
      const double half = (dy + s.r) * 0.5 * 1.1;
      return std::abs(dx) <= half;
    }
    case 3: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= s.r * s.r && d2 >= (0.55 * s.r) * (0.55 * s.r);
    }
    case 4: {
      const double len = s.r, thick = s.r * 0.35;
      return s.vertical ? (std::abs(dx) <= thick && std::abs(dy) <= len)
                        : (std::abs(dy) <= thick && std::abs(dx) <= len);
    }
    default: {
      const double len = s.r, thick = s.r * 0.3;
      return (std::abs(dx) <= thick && std::abs(dy) <= len) ||
             (std::abs(dy) <= thick && std::abs(dx) <= len);
    }
  }
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string join_labels(const std::vector<std::size_t>& labels) {
  if (labels.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(labels[i]);
  }
  return out;
}

}  // namespace

std::vector<TrainingRecord> training_view(const DatasetManifest& manifest) {
  std::vector<TrainingRecord> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) out.push_back({r.id, r.image, r.labels});
  return out;
}

void write_manifest(const fs::path& dir, const DatasetManifest& manifest) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "classes.txt");
    if (!out) throw IoError("cannot write " + (dir / "classes.txt").string());
    for (const auto& n : manifest.class_names) out << n << '\n';
  }
  std::ofstream out(dir / "manifest.tsv");
  if (!out) throw IoError("cannot write " + (dir / "manifest.tsv").string());
  out << "id\timage\tlabels\tmask\n";
  for (const auto& r : manifest.records) {
    out << r.id << '\t' << r.image.lexically_relative(dir).generic_string() << '\t'
        << join_labels(r.labels) << '\t'
        << (r.mask ? r.mask->lexically_relative(dir).generic_string() : "-") << '\n';
  }
  if (!out) throw IoError("failed writing manifest in " + dir.string());
}

DatasetManifest read_manifest(const fs::path& dir) {
  DatasetManifest m;
  m.class_names = read_lines(dir / "classes.txt");
  std::ifstream in(dir / "manifest.tsv");
  if (!in) throw IoError("cannot read " + (dir / "manifest.tsv").string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "id\timage\tlabels\tmask") {
    throw DataError("manifest header must be 'id<TAB>image<TAB>labels<TAB>mask'");
  }
  std::set<std::string> ids;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cols = split(trim(line), '\t');
    if (cols.size() != 4) {
      throw DataError("manifest line " + std::to_string(lineno) + ": expected 4 columns");
    }
    ManifestRecord r;
    r.id = cols[0];
    if (!ids.insert(r.id).second) throw DataError("duplicate image id '" + r.id + "'");
    r.image = dir / cols[1];
    if (cols[2] != "-") {
      for (const auto& tok : split(cols[2], ',')) {
        std::size_t c = 0;
        try {
          c = std::stoul(tok);
        } catch (const std::logic_error&) {
          throw DataError("manifest line " + std::to_string(lineno) + ": bad label '" + tok + "'");
        }
        if (c >= m.num_classes()) {
          throw DataError("manifest line " + std::to_string(lineno) + ": class id " +
                          std::to_string(c) + " >= " + std::to_string(m.num_classes()));
        }
        r.labels.push_back(c);
      }
    }
    if (cols[3] != "-") r.mask = dir / cols[3];
    m.records.push_back(std::move(r));
  }
  return m;
}

const std::vector<std::string>& synthetic_class_names() {
  static const std::vector<std::string> names = {"disk", "square", "triangle",
                                                 "ring", "bar",    "cross"};
  return names;
}

DatasetManifest gen_synthetic(const fs::path& dir, const SyntheticSpec& spec) {
  if (spec.num_classes == 0 || spec.num_classes > kMaxSyntheticClasses) {
    throw ConfigError("synthetic data supports 1.." + std::to_string(kMaxSyntheticClasses) +
                      " classes");
  }
  if (spec.image_size < 16) throw ConfigError("synthetic images must be at least 16 px");
  const bool png = spec.format == "png";
  if (!png && spec.format != "ppm") throw ConfigError("format must be ppm or png");

  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  DatasetManifest manifest;
  manifest.class_names.assign(synthetic_class_names().begin(),
                              synthetic_class_names().begin() +
                                  static_cast<std::ptrdiff_t>(spec.num_classes));
  Rng rng(spec.seed);
  const std::size_t n = spec.image_size;
  const double size = static_cast<double>(n);
  // At most C-1 distinct classes per image, so every image has a negative.
  const std::size_t max_distinct = std::max<std::size_t>(1, std::min<std::size_t>(3, spec.num_classes - 1));

  for (std::size_t idx = 0; idx < spec.count; ++idx) {
    std::vector<std::size_t> pool(spec.num_classes);
    for (std::size_t c = 0; c < pool.size(); ++c) pool[c] = c;
    rng.shuffle(pool);
    const auto distinct = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_distinct)));
    std::vector<std::size_t> classes(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(distinct));
    if (classes.size() < 3 && rng.uniform() < 0.25) classes.push_back(classes.front());

    std::vector<ShapeInstance> placed;
    for (std::size_t cls : classes) {
      for (int attempt = 0; attempt < 50; ++attempt) {
        ShapeInstance s;
        s.cls = cls;
        s.r = rng.uniform(0.16, 0.24) * size;
        s.cx = rng.uniform(s.r + 1, size - s.r - 1);
        s.cy = rng.uniform(s.r + 1, size - s.r - 1);
        s.vertical = rng.uniform() < 0.5;
        bool clear = true;
        for (const auto& o : placed) {
          const double d = std::hypot(o.cx - s.cx, o.cy - s.cy);
          if (d < o.r + s.r + 2) clear = false;
        }
        if (clear) {
          placed.push_back(s);
          break;
        }
      }
    }

    const double base = rng.uniform(0.42, 0.58);
    const double freq = rng.uniform(0.2, 0.6), phase = rng.uniform(0.0, 6.28);
    const bool horiz = rng.uniform() < 0.5;
    Image8 img{n, n, 3, std::vector<std::uint8_t>(n * n * 3)};
    Image8 mask{n, n, 1, std::vector<std::uint8_t>(n * n, 0)};
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double t = static_cast<double>(horiz ? y : x);
        const double bg = base + 0.05 * std::sin(freq * t + phase);
        Rgb px{bg, bg, bg};
        for (const auto& s : placed) {
          if (inside(s, x + 0.5, y + 0.5)) {
            px = kClassColors[s.cls];
            mask.data[y * n + x] = static_cast<std::uint8_t>(s.cls + 1);
          }
        }
        const double noise = rng.uniform(-0.04, 0.04);
        img.data[(y * n + x) * 3 + 0] = to_byte(px.r + noise);
        img.data[(y * n + x) * 3 + 1] = to_byte(px.g + noise);
        img.data[(y * n + x) * 3 + 2] = to_byte(px.b + noise);
      }
    }

    // Labels come from the rendered mask so the two always agree.
    std::set<std::size_t> present;
    for (std::uint8_t v : mask.data)
      if (v) present.insert(v - 1u);

    std::ostringstream id;
    id << "img_" << std::setw(4) << std::setfill('0') << idx;
    ManifestRecord rec;
    rec.id = id.str();
    rec.image = dir / "images" / (rec.id + (png ? ".png" : ".ppm"));
    rec.mask = dir / "masks" / (rec.id + (png ? ".png" : ".pgm"));
    rec.labels.assign(present.begin(), present.end());
    write_image(rec.image, img);
    write_image(*rec.mask, mask);
    manifest.records.push_back(std::move(rec));
  }
  write_manifest(dir, manifest);
  return manifest;
}

DatasetManifest load_voc_manifest(const fs::path& root, const std::string& image_set) {
  std::vector<std::string> missing;
  const fs::path images = root / "JPEGImages";
  const fs::path annotations = root / "Annotations";
  fs::path list = root / "ImageSets" / "Segmentation" / (image_set + ".txt");
  if (!fs::exists(list)) list = root / "ImageSets" / "Main" / (image_set + ".txt");
  fs::path class_table = root / "labels.txt";
  if (!fs::exists(class_table)) class_table = root / "classes.txt";

  if (!fs::is_directory(images)) missing.push_back("JPEGImages/");
  if (!fs::exists(list)) {
    missing.push_back("ImageSets/Segmentation/" + image_set + ".txt");
  }
  if (!fs::exists(class_table)) missing.push_back("labels.txt (class-name table)");
  if (!fs::is_directory(annotations)) missing.push_back("Annotations/");
  if (!missing.empty()) {
    std::string msg = "malformed VOC layout under " + root.string() + "; missing:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }

  DatasetManifest manifest;
  for (const auto& name : read_lines(class_table)) {
    if (name == "background") continue;
    manifest.class_names.push_back(name);
  }
  std::map<std::string, std::size_t> class_id;
  for (std::size_t c = 0; c < manifest.class_names.size(); ++c) {
    class_id[manifest.class_names[c]] = c;
  }

  std::set<std::string> seen;
  for (const auto& line : read_lines(list)) {
    const std::string id = split(line, ' ').front();
    if (!seen.insert(id).second) throw DataError("duplicate image id '" + id + "' in " + list.string());
    ManifestRecord rec;
    rec.id = id;
    rec.image = images / (id + ".jpg");
    if (!fs::exists(rec.image)) {
      for (const char* ext : {".png", ".ppm"}) {
        if (fs::exists(images / (id + ext))) rec.image = images / (id + ext);
      }
    }
    if (!fs::exists(rec.image)) throw DataError("image for id '" + id + "' not found in JPEGImages/");

    const fs::path xml = annotations / (id + ".xml");
    std::ifstream in(xml);
    if (!in) throw DataError("annotation " + xml.string() + " is missing");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    std::set<std::size_t> present;
    // Object names are the <name> children of <object> elements.
    for (std::size_t pos = text.find("<object>"); pos != std::string::npos;
         pos = text.find("<object>", pos + 1)) {
      const auto b = text.find("<name>", pos);
      const auto e = text.find("</name>", b);
      if (b == std::string::npos || e == std::string::npos) {
        throw DataError("object without <name> in " + xml.string());
      }
      const std::string name = trim(text.substr(b + 6, e - b - 6));
      const auto it = class_id.find(name);
      if (it == class_id.end()) {
        throw DataError("unknown class '" + name + "' in " + xml.string());
      }
      present.insert(it->second);
    }
    rec.labels.assign(present.begin(), present.end());
    const fs::path mask = root / "SegmentationClass" / (id + ".png");
    if (fs::exists(mask)) rec.mask = mask;
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

}  // namespace wsss
