#include "paircam/jpd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace paircam {

double Projection::total() const {
  return std::accumulate(grid.begin(), grid.end(), 0.0);
}

void Jpd::add(const CoincidencePair& pair) {
  const PhotonEvent* left = &pair.a;
  const PhotonEvent* right = &pair.b;
  if (left->half == right->half) {
    ++skipped_same_half_;
    return;
  }
  if (left->half == Half::Right) std::swap(left, right);
  const long px1 = std::lround(left->cx);
  const long py1 = std::lround(left->cy);
  const long px2 = std::lround(right->cx);
  const long py2 = std::lround(right->cy);
  if (px1 < 0 || px1 >= kSensorSize || py1 < 0 || py1 >= kSensorSize ||
      px2 < 0 || px2 >= kSensorSize || py2 < 0 || py2 >= kSensorSize) {
    ++dropped_out_of_range_;
    return;
  }
  add_bin(static_cast<int>(px1), static_cast<int>(py1), static_cast<int>(px2),
          static_cast<int>(py2));
}

void Jpd::add_bin(int px1, int py1, int px2, int py2, uint64_t count) {
  if (count == 0) return;
  counts_[pack_key(px1, py1, px2, py2)] += count;
  total_pairs_ += count;
}

void Jpd::merge(const Jpd& other) {
  if (basis_ != other.basis_ || !(optics_ == other.optics_)) {
    throw AnalysisError("Jpd::merge: mismatched basis or optics metadata");
  }
  for (const auto& [key, count] : other.counts_) counts_[key] += count;
  total_pairs_ += other.total_pairs_;
  skipped_same_half_ += other.skipped_same_half_;
  dropped_out_of_range_ += other.dropped_out_of_range_;
}

Projection Jpd::marginal(Half side) const {
  Projection p;
  p.kind = ProjectionKind::Marginal;
  p.nx = p.ny = kSensorSize;
  p.grid.assign(static_cast<size_t>(kSensorSize) * kSensorSize, 0.0);
  for (const auto& [key, count] : counts_) {
    int px1, py1, px2, py2;
    unpack_key(key, px1, py1, px2, py2);
    if (side == Half::Left) {
      p.at(px1, py1) += static_cast<double>(count);
    } else {
      p.at(px2, py2) += static_cast<double>(count);
    }
  }
  return p;
}

Projection Jpd::conditional(int ref_px1, int ref_py1) const {
  double ref_marginal = 0.0;
  for (const auto& [key, count] : counts_) {
    int px1, py1, px2, py2;
    unpack_key(key, px1, py1, px2, py2);
    if (px1 == ref_px1 && py1 == ref_py1) ref_marginal += static_cast<double>(count);
  }
  if (ref_marginal <= 0.0) {
    throw AnalysisError("conditional: zero marginal at reference pixel (" +
                        std::to_string(ref_px1) + "," + std::to_string(ref_py1) + ")");
  }
  Projection p;
  p.kind = ProjectionKind::Conditional;
  p.nx = p.ny = kSensorSize;
  p.grid.assign(static_cast<size_t>(kSensorSize) * kSensorSize, 0.0);
  for (const auto& [key, count] : counts_) {
    int px1, py1, px2, py2;
    unpack_key(key, px1, py1, px2, py2);
    if (px1 == ref_px1 && py1 == ref_py1) {
      p.at(px2, py2) += static_cast<double>(count) / ref_marginal;
    }
  }
  return p;
}

Projection Jpd::minus_projection() const {
  Projection p;
  p.kind = ProjectionKind::Minus;
  p.nx = p.ny = 2 * kSensorSize - 1;
  p.origin_x = p.origin_y = -(kSensorSize - 1);
  p.grid.assign(static_cast<size_t>(p.nx) * p.ny, 0.0);
  for (const auto& [key, count] : counts_) {
    int px1, py1, px2, py2;
    unpack_key(key, px1, py1, px2, py2);
    p.at(px1 - px2 - p.origin_x, py1 - py2 - p.origin_y) += static_cast<double>(count);
  }
  return p;
}

Projection Jpd::sum_projection() const {
  Projection p;
  p.kind = ProjectionKind::Sum;
  p.nx = p.ny = 2 * kSensorSize - 1;
  p.origin_x = p.origin_y = 0;
  p.grid.assign(static_cast<size_t>(p.nx) * p.ny, 0.0);
  for (const auto& [key, count] : counts_) {
    int px1, py1, px2, py2;
    unpack_key(key, px1, py1, px2, py2);
    p.at(px1 + px2, py1 + py2) += static_cast<double>(count);
  }
  return p;
}

std::vector<double> Jpd::axis_matrix(int axis) const {
  std::vector<double> m(static_cast<size_t>(kSensorSize) * kSensorSize, 0.0);
  for (const auto& [key, count] : counts_) {
    int px1, py1, px2, py2;
    unpack_key(key, px1, py1, px2, py2);
    const int a1 = axis == 0 ? px1 : py1;
    const int a2 = axis == 0 ? px2 : py2;
    m[static_cast<size_t>(a1) * kSensorSize + a2] += static_cast<double>(count);
  }
  return m;
}

bool Jpd::operator==(const Jpd& other) const {
  return basis_ == other.basis_ && optics_ == other.optics_ &&
         total_pairs_ == other.total_pairs_ && counts_ == other.counts_;
}

void Jpd::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw CodecError(CodecError::Kind::Io, 0, "cannot open " + path);
  out << "px1,py1,px2,py2,count\n";
  // Sorted for reproducible files.
  std::vector<uint64_t> keys;
  keys.reserve(counts_.size());
  for (const auto& [key, count] : counts_) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  for (uint64_t key : keys) {
    int px1, py1, px2, py2;
    unpack_key(key, px1, py1, px2, py2);
    out << px1 << ',' << py1 << ',' << px2 << ',' << py2 << ','
        << counts_.at(key) << '\n';
  }
  std::ofstream meta(path + ".meta");
  if (!meta) throw CodecError(CodecError::Kind::Io, 0, "cannot open " + path + ".meta");
  meta << "basis = " << to_string(basis_) << '\n'
       << "acquisition_s = " << acquisition_s_ << '\n'
       << "total_pairs = " << total_pairs_ << '\n'
       << "skipped_same_half = " << skipped_same_half_ << '\n'
       << "dropped_out_of_range = " << dropped_out_of_range_ << '\n'
       << "optics.pixel_pitch_m = " << optics_.pixel_pitch_m << '\n'
       << "optics.magnification_nf = " << optics_.magnification_nf << '\n'
       << "optics.f_eff_m = " << optics_.f_eff_m << '\n'
       << "optics.wavelength_m = " << optics_.wavelength_m << '\n';
}

namespace {

std::string meta_value(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string k = line.substr(0, eq);
    while (!k.empty() && (k.back() == ' ' || k.back() == '\t')) k.pop_back();
    if (k == key) {
      std::string v = line.substr(eq + 1);
      const auto start = v.find_first_not_of(" \t");
      return start == std::string::npos ? "" : v.substr(start);
    }
  }
  throw CodecError(CodecError::Kind::BadRecord, 0, "Jpd metadata missing key " + key);
}

}  // namespace

Jpd Jpd::load(const std::string& path) {
  std::ifstream meta_in(path + ".meta");
  if (!meta_in) {
    throw CodecError(CodecError::Kind::Io, 0, "cannot open " + path + ".meta");
  }
  std::stringstream meta_buf;
  meta_buf << meta_in.rdbuf();
  const std::string meta = meta_buf.str();

  OpticsConfig optics;
  const Basis basis = basis_from_string(meta_value(meta, "basis"));
  optics.basis = basis;
  optics.pixel_pitch_m = std::stod(meta_value(meta, "optics.pixel_pitch_m"));
  optics.magnification_nf = std::stod(meta_value(meta, "optics.magnification_nf"));
  optics.f_eff_m = std::stod(meta_value(meta, "optics.f_eff_m"));
  optics.wavelength_m = std::stod(meta_value(meta, "optics.wavelength_m"));

  Jpd j(basis, optics, std::stod(meta_value(meta, "acquisition_s")));
  j.skipped_same_half_ = std::stoull(meta_value(meta, "skipped_same_half"));
  j.dropped_out_of_range_ = std::stoull(meta_value(meta, "dropped_out_of_range"));

  std::ifstream in(path);
  if (!in) throw CodecError(CodecError::Kind::Io, 0, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "px1,py1,px2,py2,count") {
    throw CodecError(CodecError::Kind::BadRecord, 0, "Jpd CSV header mismatch in " + path);
  }
  uint64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    int px1, py1, px2, py2;
    unsigned long long count;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%d,%llu", &px1, &py1, &px2, &py2, &count) != 5) {
      throw CodecError(CodecError::Kind::BadRecord, lineno,
                       "Jpd CSV parse error on line " + std::to_string(lineno));
    }
    j.add_bin(px1, py1, px2, py2, count);
  }
  const uint64_t expected = std::stoull(meta_value(meta, "total_pairs"));
  if (j.total_pairs_ != expected) {
    throw CodecError(CodecError::Kind::BadRecord, 0,
                     "Jpd total_pairs mismatch: file sums to " +
                         std::to_string(j.total_pairs_) + ", metadata says " +
                         std::to_string(expected));
  }
  return j;
}

void write_projection_text(const Projection& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CodecError(CodecError::Kind::Io, 0, "cannot open " + path);
  out << "# " << p.nx << " x " << p.ny << ", origin (" << p.origin_x << ", "
      << p.origin_y << "), row-major, one row per line\n";
  for (int iy = 0; iy < p.ny; ++iy) {
    for (int ix = 0; ix < p.nx; ++ix) {
      if (ix) out << ' ';
      out << p.at(ix, iy);
    }
    out << '\n';
  }
}

void write_projection_pgm(const Projection& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CodecError(CodecError::Kind::Io, 0, "cannot open " + path);
  double maxval = 0.0;
  for (double v : p.grid) maxval = std::max(maxval, v);
  out << "P5\n" << p.nx << ' ' << p.ny << "\n65535\n";
  for (int iy = 0; iy < p.ny; ++iy) {
    for (int ix = 0; ix < p.nx; ++ix) {
      const double v = maxval > 0.0 ? p.at(ix, iy) / maxval : 0.0;
      const auto q = static_cast<uint16_t>(std::lround(v * 65535.0));
      const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
      out.write(bytes, 2);  // PGM is big-endian
    }
  }
}

}  // namespace paircam
