#include "davse/model.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace davse::model {

void ModelConfig::validate() const {
  if (base_channels < 4 || base_channels % 4 != 0)
    throw std::invalid_argument("model: base_channels must be a positive multiple of 4");
  if (n_frames < 1) throw std::invalid_argument("model: n_frames must be >= 1");
  if (time_frames != 4 * n_frames)
    throw std::invalid_argument("model: T must equal 4*N");
  const int fm1 = freq_bins - 1;
  if (fm1 < 16 || (fm1 & (fm1 - 1)) != 0)
    throw std::invalid_argument("model: F must be 2^m + 1 with m >= 4");
  if (frame_size < 8 || frame_size % 2 != 0)
    throw std::invalid_argument("model: frame_size must be even and >= 8");
  if (variant != "aose" && variant != "avse_concat" && variant != "avse_mam" &&
      variant != "avse_sam" && variant != "dual_full")
    throw std::invalid_argument("model: unknown variant: " + variant);
  if (visual_input != "face" && visual_input != "lip_crop")
    throw std::invalid_argument("model: unknown visual_input: " + visual_input);
  if (temperature_init <= 0)
    throw std::invalid_argument("model: temperature_init must be > 0");
  if (backbone_width <= 0)
    throw std::invalid_argument("model: backbone_width must be > 0");
}

int ModelConfig::freq_pools() const {
  int m = 0, v = freq_bins - 1;
  while (v > 1) {
    v >>= 1;
    ++m;
  }
  return m - 1;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"base_channels", c.base_channels},
                        {"n_frames", c.n_frames},
                        {"freq_bins", c.freq_bins},
                        {"time_frames", c.time_frames},
                        {"frame_size", c.frame_size},
                        {"variant", c.variant},
                        {"visual_input", c.visual_input},
                        {"temperature_init", c.temperature_init},
                        {"backbone_width", c.backbone_width}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.base_channels = j.at("base_channels").get<int>();
  c.n_frames = j.at("n_frames").get<int>();
  c.freq_bins = j.at("freq_bins").get<int>();
  c.time_frames = j.at("time_frames").get<int>();
  c.frame_size = j.at("frame_size").get<int>();
  c.variant = j.at("variant").get<std::string>();
  c.visual_input = j.at("visual_input").get<std::string>();
  c.temperature_init = j.at("temperature_init").get<double>();
  c.backbone_width = j.at("backbone_width").get<double>();
  return c;
}

namespace {
constexpr char kMagic[8] = {'D', 'A', 'V', 'S', 'E', '0', '0', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
}  // namespace

bool Checkpoint::has_best() const {
  for (const auto& [name, t] : tensors)
    if (name.rfind("best/", 0) == 0) return true;
  return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(kMagic, 8);
  nlohmann::json meta = {{"config", config_to_json(ck.cfg)},
                         {"stft",
                          {{"sample_rate", ck.stft.sample_rate},
                           {"win_len", ck.stft.win_len},
                           {"hop", ck.stft.hop},
                           {"fft_size", ck.stft.fft_size}}},
                         {"seed", ck.seed},
                         {"step", ck.step},
                         {"best_val", ck.best_val}};
  const std::string ms = meta.dump();
  write_u32(f, static_cast<uint32_t>(ms.size()));
  f.write(ms.data(), static_cast<std::streamsize>(ms.size()));
  write_u32(f, static_cast<uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    write_u32(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(f, 0);  // dtype: f32
    write_u32(f, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(f, static_cast<uint32_t>(d));
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const uint32_t mlen = read_u32(f);
  std::string ms(mlen, '\0');
  f.read(ms.data(), mlen);
  nlohmann::json meta = nlohmann::json::parse(ms);
  Checkpoint ck;
  ck.cfg = config_from_json(meta.at("config"));
  const auto& js = meta.at("stft");
  ck.stft.sample_rate = js.at("sample_rate").get<int>();
  ck.stft.win_len = js.at("win_len").get<int>();
  ck.stft.hop = js.at("hop").get<int>();
  ck.stft.fft_size = js.at("fft_size").get<int>();
  ck.seed = meta.at("seed").get<uint64_t>();
  ck.step = meta.at("step").get<int64_t>();
  ck.best_val = meta.at("best_val").get<double>();
  const uint32_t n = read_u32(f);
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t nl = read_u32(f);
    std::string name(nl, '\0');
    f.read(name.data(), nl);
    const uint32_t dtype = read_u32(f);
    if (dtype != 0) throw std::runtime_error("unsupported tensor dtype in " + path);
    const uint32_t rank = read_u32(f);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_u32(f));
    nn::Tensor<float> t(shape);
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    ck.tensors.emplace(std::move(name), std::move(t));
  }
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  return ck;
}

void fill_checkpoint_from_net(DualAvseNet<float>& net, Checkpoint& ck,
                              const std::string& snapshot_prefix) {
  std::vector<nn::ParamRef<float>> ps;
  net.collect_params(ps);
  for (auto& p : ps) ck.tensors[snapshot_prefix + "param/" + p.name] = *p.value;
  std::vector<std::pair<std::string, nn::Tensor<float>*>> st;
  net.collect_state(st);
  for (auto& [name, t] : st) ck.tensors[snapshot_prefix + "state/" + name] = *t;
}

void load_net_from_checkpoint(const Checkpoint& ck, DualAvseNet<float>& net,
                              const std::string& snapshot_prefix) {
  std::vector<nn::ParamRef<float>> ps;
  net.collect_params(ps);
  for (auto& p : ps) {
    const std::string key = snapshot_prefix + "param/" + p.name;
    auto it = ck.tensors.find(key);
    if (it == ck.tensors.end())
      throw std::runtime_error("checkpoint missing tensor: " + key);
    if (it->second.shape != p.value->shape)
      throw std::runtime_error("checkpoint shape mismatch for: " + p.name);
    *p.value = it->second;
  }
  std::vector<std::pair<std::string, nn::Tensor<float>*>> st;
  net.collect_state(st);
  for (auto& [name, t] : st) {
    const std::string key = snapshot_prefix + "state/" + name;
    auto it = ck.tensors.find(key);
    if (it == ck.tensors.end())
      throw std::runtime_error("checkpoint missing tensor: " + key);
    *t = it->second;
  }
}

}  // namespace davse::model
