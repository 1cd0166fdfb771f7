#include "softflow/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "softflow/config.hpp"
#include "softflow/version.hpp"

namespace softflow {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'F', 'L', 'W'};

void put_u32(std::string& out, uint32_t v) {
  char bytes[4];
  std::memcpy(bytes, &v, 4);
  out.append(bytes, 4);
}

void put_u64(std::string& out, uint64_t v) {
  char bytes[8];
  std::memcpy(bytes, &v, 8);
  out.append(bytes, 8);
}

void put_i32(std::string& out, int32_t v) {
  char bytes[4];
  std::memcpy(bytes, &v, 4);
  out.append(bytes, 4);
}

void put_f64(std::string& out, double v) {
  char bytes[8];
  std::memcpy(bytes, &v, 8);
  out.append(bytes, 8);
}

class Reader {
 public:
  Reader(const char* data, size_t size) : data_(data), size_(size) {}

  uint32_t u32() { return read<uint32_t>(); }
  uint64_t u64() { return read<uint64_t>(); }
  int32_t i32() { return read<int32_t>(); }
  double f64() { return read<double>(); }
  uint8_t u8() { return read<uint8_t>(); }

  std::string bytes(size_t n) {
    require(n);
    std::string out(data_ + pos_, n);
    pos_ += n;
    return out;
  }

  size_t remaining() const { return size_ - pos_; }

 private:
  template <typename T>
  T read() {
    require(sizeof(T));
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void require(size_t n) const {
    if (pos_ + n > size_) throw std::runtime_error("checkpoint: truncated payload");
  }

  const char* data_;
  size_t size_;
  size_t pos_ = 0;
};

struct TensorTable {
  json meta = json::array();
  std::string payload;

  void add(const std::string& name, const Tensor& t) {
    meta.push_back({{"name", name}, {"shape", t.shape()}});
    for (double v : t.values()) put_f64(payload, v);
  }
};

json mlp_meta(const MlpParams& mlp) {
  return {{"layers", mlp.layer_sizes},
          {"activation", mlp.activation == Activation::tanh ? "tanh" : "relu"}};
}

void add_mlp(TensorTable& table, const std::string& prefix, const MlpParams& mlp) {
  for (size_t l = 0; l < mlp.weights.size(); ++l) {
    table.add(prefix + ".w" + std::to_string(l), mlp.weights[l]);
    table.add(prefix + ".b" + std::to_string(l), mlp.biases[l]);
  }
}

void add_adam(TensorTable& table, const std::string& prefix, const AdamState& state) {
  for (const auto& [name, mom] : state.moments) {
    table.add(prefix + ".m." + name, mom.m);
    table.add(prefix + ".v." + name, mom.v);
  }
}

void serialize_trajectory(std::string& out, const Trajectory& t) {
  put_u32(out, static_cast<uint32_t>(t.actions.size()));
  for (int a : t.actions) put_i32(out, a);
  if (t.kind == EnvKind::grid) {
    const GridState& cell = std::get<GridState>(t.terminal);
    put_i32(out, cell.x);
    put_i32(out, cell.y);
  } else {
    const std::string& s = std::get<std::string>(t.terminal);
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.append(s);
  }
  put_f64(out, t.reward_raw);
  out.push_back(t.feasible ? 1 : 0);
}

Trajectory deserialize_trajectory(Reader& reader, const Env& env) {
  const uint32_t n_actions = reader.u32();
  std::vector<int> actions(n_actions);
  for (uint32_t i = 0; i < n_actions; ++i) actions[i] = reader.i32();

  TerminalObject stored_terminal;
  if (env.kind() == EnvKind::grid) {
    GridState cell;
    cell.x = reader.i32();
    cell.y = reader.i32();
    cell.stopped = true;
    stored_terminal = cell;
  } else {
    const uint32_t len = reader.u32();
    stored_terminal = reader.bytes(len);
  }
  const double reward = reader.f64();
  const bool feasible = reader.u8() != 0;

  // Rebuild states by replay; keep the stored evaluation (the oracle at save
  // time may differ from env defaults).
  Trajectory t;
  t.kind = env.kind();
  EnvState s = env.initial_state();
  t.states.push_back(s);
  for (int a : actions) {
    s = env.apply(s, a);
    t.actions.push_back(a);
    t.states.push_back(s);
  }
  if (!env.is_terminal(s)) throw std::runtime_error("checkpoint: stored trajectory not terminal");
  t.terminal = env.terminal_of(s);
  if (terminal_key(t.terminal) != terminal_key(stored_terminal))
    throw std::runtime_error("checkpoint: stored terminal does not match replayed actions");
  t.reward_raw = reward;
  t.feasible = feasible;
  return t;
}

Tensor read_tensor(Reader& reader, const json& meta) {
  const std::vector<int> shape = meta.at("shape").get<std::vector<int>>();
  int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> values(static_cast<size_t>(n));
  for (double& v : values) v = reader.f64();
  return Tensor(shape, std::move(values));
}

MlpParams read_mlp(const json& meta, const std::string& prefix,
                   std::map<std::string, Tensor>& tensors) {
  MlpParams mlp;
  mlp.layer_sizes = meta.at("layers").get<std::vector<int>>();
  mlp.activation = meta.at("activation").get<std::string>() == "tanh" ? Activation::tanh
                                                                      : Activation::relu;
  for (size_t l = 0; l + 1 < mlp.layer_sizes.size(); ++l) {
    mlp.weights.push_back(tensors.at(prefix + ".w" + std::to_string(l)));
    mlp.biases.push_back(tensors.at(prefix + ".b" + std::to_string(l)));
  }
  return mlp;
}

AdamState read_adam(const json& header, const std::string& prefix, uint64_t t,
                    std::map<std::string, Tensor>& tensors) {
  AdamState state;
  state.t = t;
  const std::string m_prefix = prefix + ".m.";
  for (auto& [name, tensor] : tensors) {
    if (name.rfind(m_prefix, 0) != 0) continue;
    const std::string param = name.substr(m_prefix.size());
    state.moments[param] = {tensor, tensors.at(prefix + ".v." + param)};
  }
  (void)header;
  return state;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainerState& state) {
  TensorTable table;
  add_mlp(table, "post", state.posterior.mlp);
  table.add("post.logZ", state.posterior.log_z);
  if (!state.prior.analytic_uniform) add_mlp(table, "prior", state.prior.mlp);
  add_adam(table, "adam_net", state.adam_net);
  add_adam(table, "adam_logz", state.adam_logz);

  std::string buffers;
  for (size_t i = 0; i < state.d_pos.size(); ++i) {
    const BufferEntry& e = state.d_pos.entry(i);
    serialize_trajectory(buffers, e.trajectory);
    put_f64(buffers, e.reward_raw);
    put_u64(buffers, e.insertion_seq);
  }
  for (size_t i = 0; i < state.d_neg.size(); ++i) serialize_trajectory(buffers, state.d_neg.entry(i));

  json header;
  header["version"] = kCheckpointVersion;
  header["code_version"] = kVersionString;
  header["config"] = json::parse(config_to_json_text(state.cfg));
  header["step"] = state.step;
  header["rng"] = state.rng.save();
  header["posterior"] = mlp_meta(state.posterior.mlp);
  header["posterior_window"] = state.posterior.window;
  header["prior"] = state.prior.analytic_uniform ? json("analytic-uniform")
                                                 : mlp_meta(state.prior.mlp);
  header["prior_window"] = state.prior.window;
  header["adam_net_t"] = state.adam_net.t;
  header["adam_logz_t"] = state.adam_logz.t;
  header["tensors"] = table.meta;
  header["pos_count"] = state.d_pos.size();
  header["pos_next_seq"] = state.d_pos.next_seq();
  header["neg_count"] = state.d_neg.size();
  const std::string header_text = header.dump();

  std::string blob;
  blob.append(kMagic, 4);
  put_u32(blob, kCheckpointVersion);
  put_u64(blob, header_text.size());
  blob.append(header_text);
  put_u64(blob, table.payload.size());
  blob.append(table.payload);
  put_u64(blob, buffers.size());
  blob.append(buffers);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

TrainerState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string blob = buf.str();
  Reader reader(blob.data(), blob.size());

  const std::string magic = reader.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic (expected \"SFLW\")");
  const uint32_t version = reader.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  const uint64_t header_len = reader.u64();
  const std::string header_text = reader.bytes(header_len);
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed header: ") + e.what());
  }

  const uint64_t tensor_bytes = reader.u64();
  if (reader.remaining() < tensor_bytes) throw std::runtime_error("checkpoint: truncated payload");
  Reader tensor_reader(blob.data() + (blob.size() - reader.remaining()), tensor_bytes);
  std::map<std::string, Tensor> tensors;
  for (const json& meta : header.at("tensors"))
    tensors.emplace(meta.at("name").get<std::string>(), read_tensor(tensor_reader, meta));
  if (tensor_reader.remaining() != 0)
    throw std::runtime_error("checkpoint: tensor payload length mismatch");
  reader.bytes(tensor_bytes);

  const uint64_t buffer_bytes = reader.u64();
  if (reader.remaining() != buffer_bytes)
    throw std::runtime_error("checkpoint: buffer payload length mismatch");

  const TrainConfig cfg = parse_config_text(header.at("config").dump());
  Env env = cfg.make_env();

  Policy posterior;
  posterior.env_kind = cfg.env;
  posterior.window = header.at("posterior_window").get<int>();
  posterior.mlp = read_mlp(header.at("posterior"), "post", tensors);
  posterior.log_z = tensors.at("post.logZ");

  PriorPolicy prior;
  prior.window = header.at("prior_window").get<int>();
  if (header.at("prior").is_string()) {
    prior.analytic_uniform = true;
  } else {
    prior.analytic_uniform = false;
    prior.mlp = read_mlp(header.at("prior"), "prior", tensors);
  }

  TrainerState state{cfg,
                     std::move(env),
                     std::move(posterior),
                     std::move(prior),
                     PositiveBuffer(cfg.positive_capacity),
                     NegativeBuffer(cfg.negative_capacity),
                     read_adam(header, "adam_net", header.at("adam_net_t").get<uint64_t>(), tensors),
                     read_adam(header, "adam_logz", header.at("adam_logz_t").get<uint64_t>(), tensors),
                     RngStream(0),
                     header.at("step").get<uint64_t>(),
                     std::nullopt,
                     std::nullopt};
  state.rng.load(header.at("rng").get<std::string>());

  const uint64_t pos_count = header.at("pos_count").get<uint64_t>();
  const uint64_t neg_count = header.at("neg_count").get<uint64_t>();
  for (uint64_t i = 0; i < pos_count; ++i) {
    BufferEntry entry;
    entry.trajectory = deserialize_trajectory(reader, state.env);
    entry.reward_raw = reader.f64();
    entry.insertion_seq = reader.u64();
    state.d_pos.restore_entry(std::move(entry));
  }
  state.d_pos.set_next_seq(header.at("pos_next_seq").get<uint64_t>());
  for (uint64_t i = 0; i < neg_count; ++i) {
    Trajectory t = deserialize_trajectory(reader, state.env);
    state.d_neg.push(std::move(t));
  }
  if (reader.remaining() != 0) throw std::runtime_error("checkpoint: trailing bytes");
  return state;
}

}  // namespace softflow
