// Copyright 2026 The GRCNN Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "grcnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "grcnn/error.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace grcnn {

namespace {

constexpr char kMagic[8] = {'G', 'R', 'C', 'L', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void str(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void doubles(std::span<const double> v) {
    put(static_cast<std::uint64_t>(v.size()));
    raw(v.data(), v.size() * sizeof(double));
  }
  [[nodiscard]] const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointTruncatedError("checkpoint '" + path_ + "' is truncated at byte " + std::to_string(pos_));
    }
  }
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const auto n = get<std::uint64_t>();
    if (n > (bytes_.size() - pos_) / sizeof(double)) need(bytes_.size());
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  void tag(const char (&expected)[5]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, expected, 4) != 0) {
      throw CheckpointFormatError("checkpoint '" + path_ + "': missing section '" + expected + "'");
    }
    pos_ += 4;
  }
  [[nodiscard]] bool at_end() const { return pos_ == bytes_.size(); }
  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
  std::string path_;
};

struct Record {
  std::string name;
  std::uint8_t kind = 0;
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

struct Parsed {
  std::uint64_t digest = 0;
  std::uint64_t epoch = 0;
  std::string description;
  std::set<std::string> frozen;
  std::vector<Record> records;
  double lr = 0.0, momentum = 0.0, weight_decay = 0.0;
  std::map<std::string, std::vector<double>> buffers;
  std::string rng;
};

std::uint64_t fnv1a(const std::string& s) { return hash_name(s); }

Reader open_reader(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Reader(std::move(bytes), path.string());
}

void read_header(Reader& r, Parsed& p) {
  r.need(sizeof kMagic);
  char magic[sizeof kMagic];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointFormatError("'" + r.path() + "' is not a checkpoint (bad magic bytes)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint '" + r.path() + "' has version " + std::to_string(version) +
                                 ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  p.digest = r.get<std::uint64_t>();
  p.epoch = r.get<std::uint64_t>();
  p.description = r.str();
  if (fnv1a(p.description) != p.digest) {
    throw CheckpointFormatError("checkpoint '" + r.path() + "': model description does not match its digest");
  }
}

Parsed parse(const std::filesystem::path& path) {
  Reader r = open_reader(path);
  Parsed p;
  read_header(r, p);
  const auto frozen_count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < frozen_count; ++i) p.frozen.insert(r.str());

  r.tag("PARM");
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    rec.name = r.str();
    rec.kind = r.get<std::uint8_t>();
    if (rec.kind > 1) throw CheckpointFormatError("checkpoint '" + r.path() + "': bad record kind for '" + rec.name + "'");
    const auto rank = r.get<std::uint32_t>();
    if (rank > 4) throw CheckpointFormatError("checkpoint '" + r.path() + "': bad rank for '" + rec.name + "'");
    std::size_t expected = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      rec.dims.push_back(r.get<std::uint64_t>());
      expected *= rec.dims.back();
    }
    rec.values = r.doubles();
    if (rec.values.size() != expected) {
      throw CheckpointFormatError("checkpoint '" + r.path() + "': '" + rec.name + "' holds " +
                                  std::to_string(rec.values.size()) + " values for its dims");
    }
    p.records.push_back(std::move(rec));
  }

  r.tag("OPTM");
  p.lr = r.get<double>();
  p.momentum = r.get<double>();
  p.weight_decay = r.get<double>();
  const auto buffers = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < buffers; ++i) {
    std::string name = r.str();
    p.buffers[name] = r.doubles();
  }

  r.tag("RNGS");
  p.rng = r.str();
  r.tag("END.");
  if (!r.at_end()) throw CheckpointFormatError("checkpoint '" + r.path() + "' has trailing bytes");
  return p;
}

std::string join(const std::vector<std::size_t>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? std::string(1, sep) : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

std::string describe_model(const GrcnnConfig& c) {
  std::ostringstream out;
  out << "preset=" << c.preset << '\n';
  out << "input_channels=" << c.input_channels << '\n';
  out << "stem=" << c.stem_channels[0] << ',' << c.stem_channels[1] << '\n';
  out << "blocks=";
  for (std::size_t i = 0; i < c.blocks.size(); ++i) {
    out << (i ? "," : "") << c.blocks[i].channels << ':' << c.blocks[i].steps << ':' << (c.blocks[i].downsample ? 1 : 0);
  }
  out << '\n';
  out << "tie_weights=" << (c.tie_weights ? 1 : 0) << '\n';
  out << "kernels=" << c.feed_kernel << ',' << c.rec_kernel << ',' << c.gate_kernel << '\n';
  out << "num_classes=" << c.num_classes << '\n';
  return out.str();
}

GrcnnConfig parse_model_description(const std::string& text) {
  GrcnnConfig c;
  std::istringstream in(text);
  std::string line;
  auto bad = [&](const std::string& why) { return CheckpointFormatError("model description: " + why); };
  auto numbers = [&](const std::string& v, char sep) {
    std::vector<std::size_t> out;
    std::istringstream s(v);
    std::string item;
    while (std::getline(s, item, sep)) {
      try {
        out.push_back(std::stoul(item));
      } catch (const std::exception&) {
        throw bad("bad number '" + item + "'");
      }
    }
    return out;
  };
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw bad("malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "preset") {
      c.preset = value;
    } else if (key == "input_channels") {
      c.input_channels = numbers(value, ',').at(0);
    } else if (key == "stem") {
      const auto v = numbers(value, ',');
      if (v.size() != 2) throw bad("stem needs two widths");
      c.stem_channels[0] = v[0];
      c.stem_channels[1] = v[1];
    } else if (key == "blocks") {
      std::istringstream s(value);
      std::string item;
      while (std::getline(s, item, ',')) {
        const auto v = numbers(item, ':');
        if (v.size() != 3) throw bad("block entry '" + item + "'");
        c.blocks.push_back({v[0], v[1], v[2] != 0});
      }
    } else if (key == "tie_weights") {
      c.tie_weights = value == "1";
    } else if (key == "kernels") {
      const auto v = numbers(value, ',');
      if (v.size() != 3) throw bad("kernels needs three sizes");
      c.feed_kernel = v[0];
      c.rec_kernel = v[1];
      c.gate_kernel = v[2];
    } else if (key == "num_classes") {
      c.num_classes = numbers(value, ',').at(0);
    } else {
      throw bad("unknown key '" + key + "'");
    }
  }
  return c;
}

std::uint64_t config_digest(const GrcnnConfig& config) { return fnv1a(describe_model(config)); }

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.put(kCheckpointVersion);
  const std::string description = describe_model(state.net.config);
  w.put(fnv1a(description));
  w.put(static_cast<std::uint64_t>(state.epoch));
  w.str(description);
  w.put(static_cast<std::uint32_t>(state.net.frozen.size()));
  for (const auto& g : state.net.frozen) w.str(g);

  w.raw("PARM", 4);
  const auto slots = parameter_slots(state.net, true);
  w.put(static_cast<std::uint32_t>(slots.size()));
  for (const auto& s : slots) {
    w.str(s.name);
    w.put(static_cast<std::uint8_t>(s.buffer ? 1 : 0));
    w.put(static_cast<std::uint32_t>(s.dims.size()));
    for (std::size_t d : s.dims) w.put(static_cast<std::uint64_t>(d));
    w.doubles(s.values);
  }

  w.raw("OPTM", 4);
  w.put(state.optimizer.lr);
  w.put(state.optimizer.momentum);
  w.put(state.optimizer.weight_decay);
  w.put(static_cast<std::uint32_t>(state.optimizer.buffers.size()));
  for (const auto& [name, values] : state.optimizer.buffers) {
    w.str(name);
    w.doubles(values);
  }

  w.raw("RNGS", 4);
  std::ostringstream rng;
  rng << state.rng;
  w.str(rng.str());
  w.raw("END.", 4);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw IoError("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(const std::filesystem::path& path, TrainState& state) {
  Parsed p = parse(path);
  const std::string where = "checkpoint '" + path.string() + "'";
  if (p.digest != config_digest(state.net.config)) {
    throw CheckpointShapeError(where + " was written for a different model:\n" + p.description);
  }
  auto slots = parameter_slots(state.net, true);
  if (slots.size() != p.records.size()) {
    throw CheckpointShapeError(where + " holds " + std::to_string(p.records.size()) + " tensors, model has " +
                               std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& rec = p.records[i];
    if (rec.name != slots[i].name || rec.dims != slots[i].dims || (rec.kind == 1) != slots[i].buffer) {
      throw CheckpointShapeError(where + ": record '" + rec.name + "' [" + join(rec.dims, 'x') +
                                 "] does not match model tensor '" + slots[i].name + "' [" +
                                 join(slots[i].dims, 'x') + "]");
    }
  }
  const auto groups = state.net.groups();
  for (const auto& g : p.frozen) {
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) {
      throw CheckpointShapeError(where + ": unknown frozen group '" + g + "'");
    }
  }
  for (const auto& [name, values] : p.buffers) {
    const auto it = std::find_if(slots.begin(), slots.end(), [&](const auto& s) { return s.name == name && !s.buffer; });
    if (it == slots.end() || it->values.size() != values.size()) {
      throw CheckpointShapeError(where + ": momentum buffer '" + name + "' matches no parameter");
    }
  }
  Rng rng;
  std::istringstream rng_text(p.rng);
  rng_text >> rng;
  if (!rng_text) throw CheckpointFormatError(where + ": unreadable RNG state");

  for (std::size_t i = 0; i < slots.size(); ++i) {
    std::copy(p.records[i].values.begin(), p.records[i].values.end(), slots[i].values.begin());
  }
  state.net.frozen = std::move(p.frozen);
  state.optimizer.lr = p.lr;
  state.optimizer.momentum = p.momentum;
  state.optimizer.weight_decay = p.weight_decay;
  state.optimizer.buffers = std::move(p.buffers);
  state.rng = rng;
  state.epoch = p.epoch;
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const GrcnnConfig config = read_checkpoint_config(path);
  Rng init(0);
  TrainState state{build_grcnn(config, init), {}, Rng(0), 0};
  load_checkpoint(path, state);
  return state;
}

GrcnnConfig read_checkpoint_config(const std::filesystem::path& path) {
  Reader r = open_reader(path);
  Parsed p;
  read_header(r, p);
  GrcnnConfig c = parse_model_description(p.description);
  try {
    c.validate();
  } catch (const Error& e) {
    throw CheckpointFormatError("checkpoint '" + path.string() + "': " + e.what());
  }
  return c;
}

}  // namespace grcnn
