#include "pgsum/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "json.hpp"

#include "pgsum/errors.hpp"

namespace pgsum {

namespace {

constexpr char kMagic[8] = {'N', 'A', 'T', 'S', 'C', 'K', 'P', 'T'};

template <class U>
void put_le(std::ostream& out, U value) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<unsigned char>(value >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw DataError("checkpoint truncated");
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(buf[i]) << (8 * i);
  }
  return value;
}

void put_record(std::ostream& out, const std::string& name, const Shape& shape,
                std::span<const double> values) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) put_le<std::uint64_t>(out, d);
  for (double x : values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
}

struct Record {
  Shape shape;
  std::vector<double> values;
};

std::string get_string(std::istream& in, std::uint64_t n) {
  if (n > (1u << 30)) throw DataError("checkpoint string length implausible");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw DataError("checkpoint truncated");
  }
  return s;
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParameters& params,
                     const OptimizerState& opt, const TrainingProgress& progress,
                     const std::string& extra_json) {
  nlohmann::json header = {
      {"model", nlohmann::json::parse(params.config().to_json())},
      {"epoch", progress.epoch},
      {"step", progress.step},
      {"adam",
       {{"t", opt.t},
        {"lr", opt.config.lr},
        {"beta1", opt.config.beta1},
        {"beta2", opt.config.beta2},
        {"eps", opt.config.eps}}},
      {"extra", nlohmann::json::parse(extra_json)},
  };
  const std::string block = header.dump();
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, block.size());
  out.write(block.data(), static_cast<std::streamsize>(block.size()));

  const auto named = params.named();
  for (const auto& [name, t] : named) put_record(out, name, t.shape(), t.data());
  if (opt.m.size() == named.size() && opt.v.size() == named.size()) {
    for (std::size_t k = 0; k < named.size(); ++k) {
      put_record(out, "adam.m/" + named[k].first, named[k].second.shape(),
                 opt.m[k]);
      put_record(out, "adam.v/" + named[k].first, named[k].second.shape(),
                 opt.v[k]);
    }
  }
  if (!out) throw IoError("failed writing checkpoint");
}

void save_checkpoint_file(const std::string& path,
                          const ModelParameters& params,
                          const OptimizerState& opt,
                          const TrainingProgress& progress,
                          const std::string& extra_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  save_checkpoint(out, params, opt, progress, extra_json);
}

namespace {

Checkpoint load_impl(std::istream& in, const ModelConfig* expected) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const std::string block = get_string(in, get_le<std::uint64_t>(in));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(block);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  const ModelConfig config = ModelConfig::from_json(header.at("model").dump());
  if (expected != nullptr && !(*expected == config)) {
    throw ConfigError("checkpoint model config " + config.to_json() +
                      " does not match expected " + expected->to_json());
  }

  std::map<std::string, Record> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    const std::string name = get_string(in, get_le<std::uint32_t>(in));
    Record r;
    const auto rank = get_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.shape.push_back(get_le<std::uint64_t>(in));
    }
    const std::size_t n = shape_size(r.shape);
    r.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      r.values[i] = std::bit_cast<double>(get_le<std::uint64_t>(in));
    }
    records[name] = std::move(r);
  }

  Checkpoint ck{ModelParameters(config), {}, {}, "null"};
  const auto& adam = header.at("adam");
  ck.optimizer.config = {adam.at("lr").get<double>(),
                         adam.at("beta1").get<double>(),
                         adam.at("beta2").get<double>(),
                         adam.at("eps").get<double>()};
  ck.optimizer.t = adam.at("t").get<std::uint64_t>();
  ck.progress.epoch = header.at("epoch").get<std::uint64_t>();
  ck.progress.step = header.at("step").get<std::uint64_t>();
  ck.extra_json = header.at("extra").dump();

  auto take = [&](const std::string& name, const Shape& shape) {
    auto it = records.find(name);
    if (it == records.end()) {
      throw DataError("checkpoint lacks tensor '" + name + "'");
    }
    if (it->second.shape != shape) {
      throw DataError("checkpoint tensor '" + name + "' has shape " +
                      shape_string(it->second.shape) + ", model expects " +
                      shape_string(shape));
    }
    return it->second.values;
  };
  const bool has_moments = records.count("adam.m/embedding") != 0;
  for (auto& [name, t] : ck.params.named()) {
    const auto values = take(name, t.shape());
    auto dst = Tensor(t).mutable_data();
    std::copy(values.begin(), values.end(), dst.begin());
    if (has_moments) {
      ck.optimizer.m.push_back(take("adam.m/" + name, t.shape()));
      ck.optimizer.v.push_back(take("adam.v/" + name, t.shape()));
    } else {
      ck.optimizer.m.emplace_back(t.size(), 0.0);
      ck.optimizer.v.emplace_back(t.size(), 0.0);
    }
  }
  return ck;
}

}  // namespace

Checkpoint load_checkpoint(std::istream& in, const ModelConfig* expected) {
  try {
    return load_impl(in, expected);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header is incomplete: ") +
                    e.what());
  }
}

Checkpoint load_checkpoint_file(const std::string& path,
                                const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open checkpoint " + path);
  return load_checkpoint(in, expected);
}

}  // namespace pgsum
