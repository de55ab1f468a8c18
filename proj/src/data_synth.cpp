#include "kgcicam/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace kgcicam {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (n_classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (image_h < 8 || image_w < 8) throw ConfigError("synth: image too small");
  if (object_scale_min <= 0 || object_scale_max > 1.0 ||
      object_scale_min > object_scale_max)
    throw ConfigError("synth: bad object scale range");
  if (entanglement_train < 0 || entanglement_train > 1 || entanglement_test < 0 ||
      entanglement_test > 1)
    throw ConfigError("synth: entanglement must be in [0,1]");
  int max_r = static_cast<int>(object_scale_max * std::min(image_h, image_w) / 2);
  // the object lives below the context band (top quarter of the image)
  if (image_h / 4 + 2 * max_r + 2 >= image_h || 2 * max_r + 2 >= image_w)
    throw ConfigError("synth: object does not fit at max scale");
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct Rgb {
  double r, g, b;
};

// Every class draws the same light object color. Class identity lives in the
// shape alone, so the context band stays the easier training signal and the
// entanglement actually tempts the classifier.
Rgb object_color(int) { return {0.92, 0.92, 0.88}; }

Rgb background_color(int cls) {
  static const Rgb palette[] = {
      {0.25, 0.35, 0.70}, {0.65, 0.45, 0.20}, {0.30, 0.60, 0.35},
      {0.60, 0.25, 0.35}, {0.45, 0.45, 0.55}, {0.25, 0.55, 0.60},
      {0.55, 0.55, 0.25}, {0.40, 0.30, 0.55}};
  return palette[cls % 8];
}

double texture_value(int cls, int x, int y, std::uint64_t texture_seed) {
  int pattern = cls % 5;
  int period = 4 + 2 * ((cls / 5) % 3);
  switch (pattern) {
    case 0:
      return 0.5 + 0.5 * std::sin(2.0 * M_PI * y / period);
    case 1:
      return 0.5 + 0.5 * std::sin(2.0 * M_PI * x / period);
    case 2:
      return ((x / period + y / period) % 2 == 0) ? 1.0 : 0.0;
    case 3:
      return 0.5 + 0.5 * std::sin(2.0 * M_PI * (x + y) / (period + 2));
    default: {
      // blocky value noise, stable per (class, cell)
      std::uint64_t h = splitmix(texture_seed ^ (static_cast<std::uint64_t>(cls) << 32) ^
                                 (static_cast<std::uint64_t>(x / 4) << 16) ^
                                 static_cast<std::uint64_t>(y / 4));
      return static_cast<double>(h % 1024) / 1023.0;
    }
  }
}

bool inside_shape(int shape, double dx, double dy, double r) {
  switch (shape) {
    case 0:
      return dx * dx + dy * dy <= r * r;
    case 1:
      return std::abs(dx) <= r * 0.85 && std::abs(dy) <= r * 0.85;
    case 2:  // upward triangle
      return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) * 0.5;
    case 3:  // plus
      return (std::abs(dx) <= r / 3 && std::abs(dy) <= r) ||
             (std::abs(dy) <= r / 3 && std::abs(dx) <= r);
    default:  // diamond
      return std::abs(dx) + std::abs(dy) <= r;
  }
}

}  // namespace

SynthSample generate_sample(const SynthConfig& cfg, int index, int split_tag,
                            double entanglement) {
  std::mt19937_64 rng(splitmix(cfg.seed ^ (static_cast<std::uint64_t>(split_tag) << 40) ^
                               static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int H = cfg.image_h, W = cfg.image_w;

  SynthSample s;
  s.label = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.n_classes));
  // with probability `entanglement` the class-signature background, else a
  // uniformly random class background (keeps label/background independent
  // at entanglement zero)
  s.background_class = (unit(rng) < entanglement)
                           ? s.label
                           : static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.n_classes));

  double scale = cfg.object_scale_min +
                 (cfg.object_scale_max - cfg.object_scale_min) * unit(rng);
  double r = scale * std::min(H, W) / 2.0;
  int margin = static_cast<int>(std::ceil(r)) + 1;
  // class-signature context occupies a fixed band at the top of the image
  // (the way sky accompanies birds); the object lives below it on a neutral
  // field, so the context has a consistent spatial layout the model can latch
  // onto
  int band_h = H / 4;
  std::uniform_int_distribution<int> cx_dist(margin, W - 1 - margin);
  std::uniform_int_distribution<int> cy_dist(band_h + margin, H - 1 - margin);
  int cx = cx_dist(rng);
  int cy = cy_dist(rng);
  int shape = s.label % 5;
  Rgb oc = object_color(s.label);
  Rgb bc = background_color(s.background_class);
  std::uint64_t texture_seed = splitmix(cfg.seed ^ 0x7457u);

  s.image = Tensor({3, H, W});
  int xmin = W, xmax = -1, ymin = H, ymax = -1;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double dx = x - cx, dy = y - cy;
      if (inside_shape(shape, dx, dy, r)) {
        s.image.at(0, y, x) = oc.r;
        s.image.at(1, y, x) = oc.g;
        s.image.at(2, y, x) = oc.b;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      } else if (y < band_h) {
        double v = 0.35 + 0.45 * texture_value(s.background_class, x, y, texture_seed);
        s.image.at(0, y, x) = bc.r * v;
        s.image.at(1, y, x) = bc.g * v;
        s.image.at(2, y, x) = bc.b * v;
      } else {
        // class-independent neutral field
        std::uint64_t h = splitmix(texture_seed ^ 0x6e75ull ^
                                   (static_cast<std::uint64_t>(x / 4) << 16) ^
                                   static_cast<std::uint64_t>(y / 4));
        double v = 0.40 + 0.20 * (static_cast<double>(h % 1024) / 1023.0);
        s.image.at(0, y, x) = v;
        s.image.at(1, y, x) = v;
        s.image.at(2, y, x) = v;
      }
    }
  }
  s.gt_box = cam::Box{xmin, ymin, xmax + 1, ymax + 1};
  std::ostringstream id;
  id << (split_tag == 0 ? "train" : "test") << "_" << index;
  s.id = id.str();
  return s;
}

SynthDataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset ds;
  ds.train.reserve(static_cast<size_t>(cfg.train_count));
  for (int i = 0; i < cfg.train_count; ++i)
    ds.train.push_back(generate_sample(cfg, i, 0, cfg.entanglement_train));
  ds.test.reserve(static_cast<size_t>(cfg.test_count));
  for (int i = 0; i < cfg.test_count; ++i)
    ds.test.push_back(generate_sample(cfg, i, 1, cfg.entanglement_test));
  return ds;
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError("write_ppm: expected [3,H,W]");
  int H = image.dim(1), W = image.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IngestionError("cannot write image: " + path);
  os << "P6\n" << W << " " << H << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(W) * 3);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        row[static_cast<size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
}

Tensor read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot read image: " + path);
  std::string magic;
  int W = 0, H = 0, maxval = 0;
  is >> magic >> W >> H >> maxval;
  if (magic != "P6" || maxval != 255 || W <= 0 || H <= 0)
    throw IngestionError("unsupported PPM: " + path);
  is.get();  // single whitespace after header
  std::vector<unsigned char> buf(static_cast<size_t>(W) * H * 3);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!is) throw IngestionError("truncated PPM: " + path);
  Tensor image({3, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        image.at(c, y, x) =
            buf[(static_cast<size_t>(y) * W + x) * 3 + c] / 255.0;
  return image;
}

void save_split(const std::string& root, const std::string& split,
                const std::vector<SynthSample>& samples) {
  fs::create_directories(fs::path(root) / split);
  std::ofstream manifest(fs::path(root) / (split + ".txt"));
  if (!manifest) throw IngestionError("cannot write manifest under " + root);
  for (const auto& s : samples) {
    std::string rel = split + "/" + s.id + ".ppm";
    write_ppm((fs::path(root) / rel).string(), s.image);
    manifest << s.id << " " << rel << " " << s.label << " " << s.gt_box.x0 << " "
             << s.gt_box.y0 << " " << s.gt_box.x1 << " " << s.gt_box.y1 << "\n";
  }
}

std::vector<SynthSample> load_split(const std::string& root, const std::string& split) {
  fs::path manifest_path = fs::path(root) / (split + ".txt");
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IngestionError("missing manifest: " + manifest_path.string());
  std::vector<SynthSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    SynthSample s;
    std::string rel;
    if (!(is >> s.id >> rel >> s.label >> s.gt_box.x0 >> s.gt_box.y0 >> s.gt_box.x1 >>
          s.gt_box.y1))
      throw IngestionError("bad manifest line " + std::to_string(line_no) + " in " +
                           manifest_path.string());
    fs::path img = fs::path(root) / rel;
    if (!fs::exists(img))
      throw IngestionError("missing image for record " + s.id + ": " + img.string());
    s.image = read_ppm(img.string());
    int H = s.image.dim(1), W = s.image.dim(2);
    if (!s.gt_box.valid() || s.gt_box.x1 > W || s.gt_box.y1 > H)
      throw IngestionError("record " + s.id + ": box out of image bounds");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace kgcicam
