#include "simulrl/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>

#include "simulrl/errors.hpp"

namespace simulrl {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'I', 'M', 'U', 'L', 'R', 'L', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_doubles(std::string& buf, const std::vector<double>& v) {
  buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = buf_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::vector<double> doubles(std::size_t n) {
    need(n * sizeof(double));
    std::vector<double> out(n);
    std::memcpy(out.data(), buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return out;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw DataError("checkpoint: truncated file");
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

nlohmann::json transformer_to_json(const TransformerConfig& t) {
  return {{"latent_dim", t.latent_dim}, {"layers", t.layers}, {"heads", t.heads}, {"ffn_dim", t.ffn_dim}};
}

TransformerConfig transformer_from_json(const nlohmann::json& j) {
  TransformerConfig t;
  t.latent_dim = j.at("latent_dim").get<int>();
  t.layers = j.at("layers").get<int>();
  t.heads = j.at("heads").get<int>();
  t.ffn_dim = j.at("ffn_dim").get<int>();
  return t;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return {{"temporal", transformer_to_json(cfg.temporal)},
          {"context_frames", cfg.context_frames},
          {"depth", transformer_to_json(cfg.depth)},
          {"depth_shared_weights", cfg.depth_shared_weights},
          {"acoustic_delay_frames", cfg.acoustic_delay_frames},
          {"positional", cfg.positional},
          {"rope_base", cfg.rope_base},
          {"num_codebooks", cfg.num_codebooks},
          {"text_vocab_size", cfg.text_vocab_size},
          {"audio_vocab_size", cfg.audio_vocab_size}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig cfg;
    cfg.temporal = transformer_from_json(j.at("temporal"));
    cfg.context_frames = j.at("context_frames").get<int>();
    cfg.depth = transformer_from_json(j.at("depth"));
    cfg.depth_shared_weights = j.at("depth_shared_weights").get<bool>();
    cfg.acoustic_delay_frames = j.at("acoustic_delay_frames").get<int>();
    cfg.positional = j.at("positional").get<std::string>();
    cfg.rope_base = j.at("rope_base").get<double>();
    cfg.num_codebooks = j.at("num_codebooks").get<int>();
    cfg.text_vocab_size = j.at("text_vocab_size").get<int>();
    cfg.audio_vocab_size = j.at("audio_vocab_size").get<int>();
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto& params = ckpt.params;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : params.layout->tensors())
    tensors.push_back({{"name", t.name}, {"offset", t.offset}, {"rows", t.rows}, {"cols", t.cols}});
  nlohmann::json header = {{"model", model_config_to_json(params.config)},
                           {"tensors", tensors},
                           {"num_values", params.values.size()},
                           {"meta", ckpt.meta},
                           {"optimizer", ckpt.optimizer.has_value()}};
  if (ckpt.optimizer) header["optimizer_step"] = ckpt.optimizer->step;
  const std::string header_text = header.dump();

  std::string buf;
  buf.append(kMagic.data(), kMagic.size());
  put(buf, kVersion);
  put(buf, static_cast<std::uint64_t>(header_text.size()));
  buf += header_text;
  put_doubles(buf, params.values);
  if (ckpt.optimizer) {
    if (ckpt.optimizer->m.size() != params.values.size() || ckpt.optimizer->v.size() != params.values.size())
      throw std::invalid_argument("save_checkpoint: optimizer state size mismatch");
    put_doubles(buf, ckpt.optimizer->m);
    put_doubles(buf, ckpt.optimizer->v);
  }
  put(buf, fnv1a64(buf.data(), buf.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot write " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < kMagic.size() + sizeof(std::uint64_t))
    throw DataError("checkpoint: truncated file " + path.string());

  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - sizeof(stored), sizeof(stored));
  if (fnv1a64(buf.data(), buf.size() - sizeof(stored)) != stored)
    throw DataError("checkpoint: checksum mismatch in " + path.string());

  Reader r(buf);
  if (r.bytes(kMagic.size()) != std::string(kMagic.data(), kMagic.size()))
    throw DataError("checkpoint: bad magic in " + path.string());
  if (const auto version = r.get<std::uint32_t>(); version != kVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto header_len = r.get<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }

  Checkpoint ckpt;
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(header.at("model"));
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  ckpt.params = ModelParams::zeros_like(ModelParams::initialize(cfg, 0));

  try {
    const auto& tensors = header.at("tensors");
    const auto& expected = ckpt.params.layout->tensors();
    if (tensors.size() != expected.size()) throw DataError("checkpoint: tensor table does not match the model");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto& t = tensors[i];
      if (t.at("name").get<std::string>() != expected[i].name || t.at("offset").get<std::size_t>() != expected[i].offset ||
          t.at("rows").get<int>() != expected[i].rows || t.at("cols").get<int>() != expected[i].cols)
        throw DataError("checkpoint: tensor table does not match the model at " + expected[i].name);
    }
    const auto n = header.at("num_values").get<std::size_t>();
    if (n != ckpt.params.values.size()) throw DataError("checkpoint: parameter count mismatch");
    ckpt.params.values = r.doubles(n);
    if (header.at("optimizer").get<bool>()) {
      AdamState st;
      st.m = r.doubles(n);
      st.v = r.doubles(n);
      st.step = header.at("optimizer_step").get<long>();
      ckpt.optimizer = std::move(st);
    }
    ckpt.meta = header.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (r.pos() + sizeof(std::uint64_t) != buf.size()) throw DataError("checkpoint: trailing bytes");
  return ckpt;
}

}  // namespace simulrl
