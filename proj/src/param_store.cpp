#include "cslsl/param_store.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace cslsl::grad {

ParamId ParamStore::add(std::string name, Tensor2 init) {
  if (by_name_.contains(name)) {
    throw std::invalid_argument("duplicate parameter " + name);
  }
  if (!init.allFinite()) {
    throw std::invalid_argument("non-finite initial value for " + name);
  }
  Parameter p;
  p.grad = Tensor2::Zero(init.rows(), init.cols());
  p.m = Tensor2::Zero(init.rows(), init.cols());
  p.v = Tensor2::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.name = name;
  by_name_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return {params_.size() - 1};
}

ParamId ParamStore::id(std::string_view name) const {
  const auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) {
    throw std::out_of_range("no parameter named " + std::string(name));
  }
  return {it->second};
}

bool ParamStore::contains(std::string_view name) const { return by_name_.contains(std::string(name)); }

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    n += static_cast<std::size_t>(p.value.size());
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) {
    p.grad.setZero();
  }
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) {
    sq += p.grad.squaredNorm();
  }
  return std::sqrt(sq);
}

double ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& p : params_) {
      p.grad *= scale;
    }
  }
  return norm;
}

void ParamStore::adam_step(const AdamOptions& o) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double bias1 = 1.0 - std::pow(o.beta1, t);
  const double bias2 = 1.0 - std::pow(o.beta2, t);
  for (auto& p : params_) {
    p.m = o.beta1 * p.m + (1.0 - o.beta1) * p.grad;
    p.v = o.beta2 * p.v + (1.0 - o.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= o.lr * (p.m.array() / bias1) / ((p.v.array() / bias2).sqrt() + o.eps);
    p.grad.setZero();
  }
}

Tensor2 uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  // Explicit mapping from raw 64-bit draws keeps values identical across
  // standard library implementations.
  Tensor2 t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
    t.data()[i] = (2.0 * u - 1.0) * bound;
  }
  return t;
}

namespace {

constexpr char kMagic[8] = {'C', 'S', 'L', 'S', 'L', 'C', 'K', 'P'};

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) {
    b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) {
    b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  out.write(b, 8);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_reals(std::ostream& out, const Tensor2& t) {
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    put_u64(out, std::bit_cast<std::uint64_t>(t.data()[i]));
  }
}

std::uint64_t get_uint(std::istream& in, int bytes) {
  unsigned char b[8] = {};
  in.read(reinterpret_cast<char*>(b), bytes);
  if (!in) {
    throw CheckpointError("truncated checkpoint");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= std::uint64_t{b[i]} << (8 * i);
  }
  return v;
}

std::string get_string(std::istream& in) {
  const auto len = get_uint(in, 4);
  if (len > (1u << 24)) {
    throw CheckpointError("implausible string length in checkpoint");
  }
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) {
    throw CheckpointError("truncated checkpoint");
  }
  return s;
}

void get_reals(std::istream& in, Tensor2& t) {
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    t.data()[i] = std::bit_cast<double>(get_uint(in, 8));
  }
}

CheckpointData read_preamble(std::istream& in, std::uint64_t& step) {
  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw CheckpointError("not a checkpoint file");
  }
  const auto version = get_uint(in, 4);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointData data;
  data.rng_seed = get_uint(in, 8);
  step = get_uint(in, 8);
  const auto meta_count = get_uint(in, 4);
  for (std::uint64_t i = 0; i < meta_count; ++i) {
    std::string k = get_string(in);
    data.meta[std::move(k)] = get_string(in);
  }
  return data;
}

}  // namespace

void save_checkpoint(std::ostream& out, const ParamStore& store, const CheckpointData& data) {
  out.write(kMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u64(out, data.rng_seed);
  put_u64(out, store.step());
  put_u32(out, static_cast<std::uint32_t>(data.meta.size()));
  for (const auto& [k, v] : data.meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& p : store) {
    put_string(out, p.name);
    put_u64(out, static_cast<std::uint64_t>(p.value.rows()));
    put_u64(out, static_cast<std::uint64_t>(p.value.cols()));
    put_reals(out, p.value);
    put_reals(out, p.m);
    put_reals(out, p.v);
  }
  if (!out) {
    throw CheckpointError("checkpoint write failed");
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const CheckpointData& data) {
  // Write-then-rename so an interrupted run never leaves a torn checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) {
      throw CheckpointError("cannot write " + tmp.string());
    }
    save_checkpoint(out, store, data);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint(std::istream& in, ParamStore& store) {
  std::uint64_t step = 0;
  CheckpointData data = read_preamble(in, step);
  const auto count = get_uint(in, 4);
  if (count != store.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(store.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_string(in);
    if (!store.contains(name)) {
      throw CheckpointError("checkpoint tensor '" + name + "' is not a model parameter");
    }
    Parameter& p = store[name];
    const auto rows = get_uint(in, 8);
    const auto cols = get_uint(in, 8);
    if (rows != static_cast<std::uint64_t>(p.value.rows()) || cols != static_cast<std::uint64_t>(p.value.cols())) {
      throw CheckpointError("shape mismatch for '" + name + "'");
    }
    get_reals(in, p.value);
    get_reals(in, p.m);
    get_reals(in, p.v);
    if (!p.value.allFinite()) {
      throw CheckpointError("non-finite values in '" + name + "'");
    }
    p.grad.setZero();
  }
  store.set_step(step);
  return data;
}

CheckpointData load_checkpoint(const std::filesystem::path& path, ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError("cannot open checkpoint " + path.string());
  }
  return load_checkpoint(in, store);
}

CheckpointData read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError("cannot open checkpoint " + path.string());
  }
  std::uint64_t step = 0;
  return read_preamble(in, step);
}

}  // namespace cslsl::grad
