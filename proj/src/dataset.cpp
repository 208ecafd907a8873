#include "hnas/dataset.hpp"

#include "hnas/searchspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace hnas {

namespace {

constexpr char kMagic[8] = {'H', 'N', 'A', 'S', 'D', 'A', 'T', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("dataset file truncated");
  return v;
}

MultimodalDataset make_split(int n, const SyntheticTaskSpec& spec, Rng& rng) {
  MultimodalDataset d;
  d.modalities = {"mod0", "mod1"};
  d.channels = spec.channels;
  d.length = spec.length;
  d.num_classes = 4;
  d.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) d.labels[static_cast<std::size_t>(i)] = i % 4;
  std::shuffle(d.labels.begin(), d.labels.end(), rng);
  const std::size_t per = static_cast<std::size_t>(spec.channels * spec.length);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int m = 0; m < 2; ++m) {
    const auto tmpl = synthetic_template(m, spec.channels, spec.length);
    auto& sig = d.signals.emplace_back(per * static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int label = d.labels[static_cast<std::size_t>(i)];
      const int bit = m == 0 ? (label >> 1) & 1 : label & 1;
      const double sign = bit ? 1.0 : -1.0;
      for (std::size_t t = 0; t < per; ++t) {
        const double eps = noise(rng);
        sig[static_cast<std::size_t>(i) * per + t] = sign * tmpl[t] + spec.noise * eps;
      }
    }
  }
  return d;
}

}  // namespace

Index MultimodalDataset::modality_index(const std::string& name) const {
  const auto it = std::find(modalities.begin(), modalities.end(), name);
  if (it == modalities.end()) throw std::invalid_argument("unknown modality '" + name + "'");
  return it - modalities.begin();
}

Tensor MultimodalDataset::batch(std::size_t modality, std::span<const Index> rows) const {
  if (modality >= signals.size()) throw std::out_of_range("modality index out of range");
  if (rows.empty()) throw ShapeError("empty batch");
  const Index per = static_cast<Index>(channels) * length;
  Array values(static_cast<Index>(rows.size()) * per);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= size()) throw std::out_of_range("batch row out of range");
    std::memcpy(values.data() + static_cast<Index>(r) * per, signals[modality].data() + rows[r] * per,
                sizeof(double) * static_cast<std::size_t>(per));
  }
  return Tensor::from({static_cast<Index>(rows.size()), channels, length}, std::move(values));
}

Tensor MultimodalDataset::all(std::size_t modality) const {
  std::vector<Index> rows(static_cast<std::size_t>(size()));
  for (Index i = 0; i < size(); ++i) rows[static_cast<std::size_t>(i)] = i;
  return batch(modality, rows);
}

std::vector<int> MultimodalDataset::batch_labels(std::span<const Index> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (Index r : rows) out.push_back(labels.at(static_cast<std::size_t>(r)));
  return out;
}

MultimodalDataset MultimodalDataset::subset(std::span<const Index> rows) const {
  MultimodalDataset d;
  d.modalities = modalities;
  d.channels = channels;
  d.length = length;
  d.num_classes = num_classes;
  d.labels = batch_labels(rows);
  const std::size_t per = static_cast<std::size_t>(channels * length);
  for (const auto& sig : signals) {
    auto& out = d.signals.emplace_back();
    out.reserve(per * rows.size());
    for (Index r : rows) {
      out.insert(out.end(), sig.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(r) * per),
                 sig.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(r) + 1) * per));
    }
  }
  return d;
}

void MultimodalDataset::validate() const {
  if (signals.size() != modalities.size()) throw std::invalid_argument("dataset: modality count mismatch");
  const std::size_t per = static_cast<std::size_t>(channels * length);
  for (const auto& s : signals) {
    if (s.size() != per * labels.size()) throw std::invalid_argument("dataset: signal buffer size mismatch");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset: label out of range");
  }
}

std::vector<double> synthetic_template(int modality, int channels, int length) {
  std::vector<double> t(static_cast<std::size_t>(channels * length));
  const double freq = 1.0 + modality;
  for (int c = 0; c < channels; ++c) {
    const double phase = 0.25 * std::numbers::pi * (c + modality);
    for (int i = 0; i < length; ++i) {
      t[static_cast<std::size_t>(c * length + i)] =
          std::sin(2.0 * std::numbers::pi * freq * i / length + phase);
    }
  }
  return t;
}

DatasetSplits generate_synthetic(const SyntheticTaskSpec& spec, std::uint64_t seed) {
  if (spec.train < 0 || spec.val < 0 || spec.test < 0) throw std::invalid_argument("synthetic task: negative split size");
  if (spec.length < 1 || spec.channels < 1) throw std::invalid_argument("synthetic task: length and channels must be >= 1");
  if (!(spec.noise >= 0.0)) throw std::invalid_argument("synthetic task: noise must be >= 0");
  Rng rng(seed);
  DatasetSplits s;
  s.train = make_split(spec.train, spec, rng);
  s.val = make_split(spec.val, spec, rng);
  s.test = make_split(spec.test, spec, rng);
  return s;
}

void save_dataset(const MultimodalDataset& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write dataset file " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(data.modalities.size()));
  for (const auto& m : data.modalities) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.size()));
    os.write(m.data(), static_cast<std::streamsize>(m.size()));
  }
  write_pod<std::int32_t>(os, data.channels);
  write_pod<std::int32_t>(os, data.length);
  write_pod<std::int32_t>(os, data.num_classes);
  write_pod<std::uint64_t>(os, data.labels.size());
  for (int y : data.labels) write_pod<std::int32_t>(os, y);
  for (const auto& s : data.signals) os.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(double)));
  if (!os) throw std::runtime_error("failed writing dataset file " + path.string());
}

MultimodalDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset file " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw std::runtime_error("not a dataset file: " + path.string());
  MultimodalDataset d;
  const auto nm = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < nm; ++i) {
    std::string name(read_pod<std::uint32_t>(is), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    d.modalities.push_back(std::move(name));
  }
  d.channels = read_pod<std::int32_t>(is);
  d.length = read_pod<std::int32_t>(is);
  d.num_classes = read_pod<std::int32_t>(is);
  const auto n = read_pod<std::uint64_t>(is);
  d.labels.resize(n);
  for (auto& y : d.labels) y = read_pod<std::int32_t>(is);
  const std::size_t per = static_cast<std::size_t>(d.channels * d.length);
  for (std::uint32_t i = 0; i < nm; ++i) {
    auto& s = d.signals.emplace_back(per * n);
    is.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(double)));
    if (!is) throw std::runtime_error("dataset file truncated: " + path.string());
  }
  d.validate();
  return d;
}

void save_splits(const DatasetSplits& splits, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_dataset(splits.train, dir / "train.bin");
  save_dataset(splits.val, dir / "val.bin");
  save_dataset(splits.test, dir / "test.bin");
}

DatasetSplits load_splits(const std::filesystem::path& dir) {
  return {load_dataset(dir / "train.bin"), load_dataset(dir / "val.bin"), load_dataset(dir / "test.bin")};
}

}  // namespace hnas
