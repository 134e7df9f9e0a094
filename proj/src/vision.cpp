#include "sloth/vision.hpp"

#include <cstring>
#include <fstream>

namespace sloth {

VisualGrid synth_features(std::uint64_t seed, int h, int w, int d) {
  if (h < 1 || w < 1 || d < 1)
    throw ShapeError("synth_features: dimensions must be positive, got " + std::to_string(h) + "x" +
                     std::to_string(w) + "x" + std::to_string(d));
  const std::size_t cells = static_cast<std::size_t>(h) * w;
  std::vector<double> raw(cells * d);
  Rng rng(mix_seed(seed, (static_cast<std::uint64_t>(h) << 40) ^
                             (static_cast<std::uint64_t>(w) << 20) ^ static_cast<std::uint64_t>(d)));
  for (auto& v : raw) v = rng.gaussian();

  // 3x3 box smoothing: mean over neighbors that fall inside the grid
  std::vector<double> smooth(cells * d, 0.0);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const std::size_t out = (static_cast<std::size_t>(i) * w + j) * d;
      int count = 0;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const int ni = i + di, nj = j + dj;
          if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
          const std::size_t in = (static_cast<std::size_t>(ni) * w + nj) * d;
          for (int f = 0; f < d; ++f) smooth[out + f] += raw[in + f];
          ++count;
        }
      for (int f = 0; f < d; ++f) smooth[out + f] /= count;
    }

  VisualGrid grid;
  grid.h = h;
  grid.w = w;
  grid.d = d;
  grid.features = Tensor::matrix(h * w, d, std::move(smooth));
  return grid;
}

HdTileSet hd_tile(const VisualGrid& full) {
  if (full.h % 2 != 0 || full.w % 2 != 0)
    throw ShapeError("hd_tile: grid must have even sides, got " + std::to_string(full.h) + "x" +
                     std::to_string(full.w));
  const int h = full.h / 2, w = full.w / 2, d = full.d;
  const auto& src = full.features.data();

  auto cell = [&](int i, int j, int f) {
    return src[(static_cast<std::size_t>(i) * full.w + j) * d + f];
  };

  HdTileSet out;
  const int row_off[4] = {0, 0, h, h};
  const int col_off[4] = {0, w, 0, w};
  for (int t = 0; t < 4; ++t) {
    std::vector<double> data(static_cast<std::size_t>(h) * w * d);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int f = 0; f < d; ++f)
          data[(static_cast<std::size_t>(i) * w + j) * d + f] =
              cell(row_off[t] + i, col_off[t] + j, f);
    out.tiles[static_cast<std::size_t>(t)] = {h, w, d, Tensor::matrix(h * w, d, std::move(data))};
  }

  std::vector<double> thumb(static_cast<std::size_t>(h) * w * d);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int f = 0; f < d; ++f)
        thumb[(static_cast<std::size_t>(i) * w + j) * d + f] =
            0.25 * (cell(2 * i, 2 * j, f) + cell(2 * i, 2 * j + 1, f) + cell(2 * i + 1, 2 * j, f) +
                    cell(2 * i + 1, 2 * j + 1, f));
  out.thumbnail = {h, w, d, Tensor::matrix(h * w, d, std::move(thumb))};
  return out;
}

std::vector<int> toy_tokenize(std::string_view text, int vocab_size) {
  if (vocab_size < kMinVocab)
    throw ContractError("toy_tokenize: vocab_size must be at least " + std::to_string(kMinVocab));
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char ch : text) ids.push_back(static_cast<int>(ch));
  return ids;
}

std::string toy_detokenize(const std::vector<int>& ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id >= 0 && id <= 255) out.push_back(static_cast<char>(id));
    // reserved/eoa ids carry no bytes
  }
  return out;
}

namespace {

void write_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_vgrd(const std::string& path, const VisualGrid& grid) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_vgrd: cannot open " + path);
  f.write("VGRD", 4);
  write_u32(f, static_cast<std::uint32_t>(grid.h));
  write_u32(f, static_cast<std::uint32_t>(grid.w));
  write_u32(f, static_cast<std::uint32_t>(grid.d));
  // hosts are little-endian IEEE-754; bytes go out as stored
  const auto& data = grid.features.data();
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!f) throw IoError("save_vgrd: short write to " + path);
}

VisualGrid load_vgrd(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_vgrd: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "VGRD", 4) != 0)
    throw IoError("load_vgrd: bad magic in " + path);
  const int h = static_cast<int>(read_u32(f));
  const int w = static_cast<int>(read_u32(f));
  const int d = static_cast<int>(read_u32(f));
  if (!f || h < 1 || w < 1 || d < 1) throw IoError("load_vgrd: bad header in " + path);
  std::vector<double> data(static_cast<std::size_t>(h) * w * d);
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!f) throw IoError("load_vgrd: truncated payload in " + path);
  return {h, w, d, Tensor::matrix(h * w, d, std::move(data))};
}

}  // namespace sloth
