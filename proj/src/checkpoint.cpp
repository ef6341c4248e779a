#include <fstream>
#include <map>

#include "sgg/binary_io.hpp"
#include "sgg/training.hpp"

namespace sgg {

namespace {

constexpr char kMagic[] = "SGCK";
constexpr std::uint32_t kVersion = 1;
constexpr char kPlane[] = "checkpoint";

using Records = std::map<std::string, nn::Tensor<float>>;

void write_record(std::ostream& os, const std::string& name, const nn::Tensor<float>& t) {
  binary::write_u32(os, static_cast<std::uint32_t>(name.size()));
  binary::write_bytes(os, name);
  binary::write_u32(os, 4);
  const auto s = t.shape();
  for (int d : {s.n, s.c, s.h, s.w}) binary::write_u32(os, static_cast<std::uint32_t>(d));
  for (float v : t.values()) binary::write_f32(os, v);
}

void collect(std::vector<std::pair<std::string, const nn::Tensor<float>*>>& out,
             const std::string& prefix, const nn::ParameterSet<float>& p) {
  for (const auto& e : p.entries()) out.emplace_back(prefix + e.name, &e.var->value);
}

void collect_adam(std::vector<std::pair<std::string, const nn::Tensor<float>*>>& out,
                  const std::string& prefix, const Adam& a, const nn::ParameterSet<float>& p) {
  const auto& entries = p.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    out.emplace_back(prefix + ".m/" + entries[k].name, &a.m[k]);
    out.emplace_back(prefix + ".v/" + entries[k].name, &a.v[k]);
  }
}

void restore(const Records& recs, const std::string& name, nn::Tensor<float>& dst) {
  auto it = recs.find(name);
  if (it == recs.end()) throw FormatError(kPlane, "missing record " + name);
  if (it->second.shape() != dst.shape()) {
    throw FormatError(kPlane, "record " + name + " has shape " + it->second.shape().str() +
                                  ", expected " + dst.shape().str());
  }
  dst = it->second;
}

void restore_params(const Records& recs, const std::string& prefix, nn::ParameterSet<float>& p) {
  for (const auto& e : p.entries()) restore(recs, prefix + e.name, e.var->value);
}

struct Loaded {
  std::uint64_t step = 0;
  nlohmann::json header;
  Records records;
};

Loaded read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(kPlane, "cannot open " + path.string());
  binary::Reader r(is, kPlane);
  r.expect_magic(kMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw FormatError(kPlane, "unsupported version " + std::to_string(version));
  Loaded out;
  out.step = r.u64();
  const std::uint32_t jlen = r.u32();
  try {
    out.header = nlohmann::json::parse(r.bytes(jlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(kPlane, std::string("bad header: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t nlen = r.u32();
    if (nlen > 4096) throw FormatError(kPlane, "record name too long");
    std::string name = r.bytes(nlen);
    if (r.u32() != 4) throw FormatError(kPlane, "record " + name + " is not rank 4");
    int d[4];
    for (int& v : d) {
      const std::uint32_t x = r.u32();
      if (x > (1u << 24)) throw FormatError(kPlane, "record " + name + " has an absurd dimension");
      v = static_cast<int>(x);
    }
    nn::Tensor<float> t(nn::Shape{d[0], d[1], d[2], d[3]});
    for (float& v : t.values()) v = r.f32();
    out.records.emplace(std::move(name), std::move(t));
  }
  return out;
}

const std::string kMeanRecord = "g.mapping.omega_mean";

}  // namespace

void save_checkpoint(const TrainState& s, const std::filesystem::path& path) {
  nlohmann::json header{{"generator", to_json(s.g_config)},
                        {"discriminator", to_json(s.d_config)},
                        {"train", to_json(s.config)},
                        {"adam_g_t", s.adam_g->t},
                        {"adam_d_t", s.adam_d->t},
                        {"mean_updates", s.g->mapping().mean_updates},
                        {"has_ema", static_cast<bool>(s.g_ema)}};
  if (s.g_ema) header["ema_mean_updates"] = s.g_ema->mapping().mean_updates;

  std::vector<std::pair<std::string, const nn::Tensor<float>*>> recs;
  collect(recs, "", s.g->params());
  collect(recs, "", s.d->params());
  collect_adam(recs, "adam_g", *s.adam_g, s.g->params());
  collect_adam(recs, "adam_d", *s.adam_d, s.d->params());
  recs.emplace_back(kMeanRecord, &s.g->mapping().omega_mean);
  if (s.g_ema) {
    collect(recs, "ema/", s.g_ema->params());
    recs.emplace_back("ema/" + kMeanRecord, &s.g_ema->mapping().omega_mean);
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    binary::write_bytes(os, kMagic);
    binary::write_u32(os, kVersion);
    binary::write_u64(os, s.step);
    const std::string js = header.dump();
    binary::write_u32(os, static_cast<std::uint32_t>(js.size()));
    binary::write_bytes(os, js);
    binary::write_u32(os, static_cast<std::uint32_t>(recs.size()));
    for (const auto& [name, t] : recs) write_record(os, name, *t);
    if (!os) throw std::runtime_error("error writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  Loaded f = read_file(path);
  const auto& h = f.header;
  TrainState s;
  try {
    s = TrainState::create(generator_config_from_json(h.at("generator")),
                           discriminator_config_from_json(h.at("discriminator")),
                           train_config_from_json(h.at("train")));
    s.adam_g->t = h.at("adam_g_t").get<std::uint64_t>();
    s.adam_d->t = h.at("adam_d_t").get<std::uint64_t>();
    s.g->mapping().mean_updates = h.at("mean_updates").get<std::uint64_t>();
    if (h.at("has_ema").get<bool>() != static_cast<bool>(s.g_ema)) {
      throw FormatError(kPlane, "EMA presence disagrees with the stored decay");
    }
    if (s.g_ema) s.g_ema->mapping().mean_updates = h.at("ema_mean_updates").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(kPlane, std::string("bad header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(kPlane, std::string("bad configuration: ") + e.what());
  }
  s.step = f.step;
  restore_params(f.records, "", s.g->params());
  restore_params(f.records, "", s.d->params());
  const auto restore_adam = [&](const std::string& prefix, Adam& a, nn::ParameterSet<float>& p) {
    const auto& entries = p.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      restore(f.records, prefix + ".m/" + entries[k].name, a.m[k]);
      restore(f.records, prefix + ".v/" + entries[k].name, a.v[k]);
    }
  };
  restore_adam("adam_g", *s.adam_g, s.g->params());
  restore_adam("adam_d", *s.adam_d, s.d->params());
  restore(f.records, kMeanRecord, s.g->mapping().omega_mean);
  if (s.g_ema) {
    restore_params(f.records, "ema/", s.g_ema->params());
    restore(f.records, "ema/" + kMeanRecord, s.g_ema->mapping().omega_mean);
  }
  return s;
}

std::unique_ptr<Generator<float>> load_generator(const std::filesystem::path& path) {
  TrainState s = load_checkpoint(path);
  return s.g_ema ? std::move(s.g_ema) : std::move(s.g);
}

}  // namespace sgg
