#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace cslsl::grad {

// Row-major dense matrix. Vectors are 1 x n (or B x n for a batch of rows).
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ParamId {
  std::size_t index = 0;
  friend bool operator==(ParamId, ParamId) = default;
};

struct Parameter {
  std::string name;
  Tensor2 value;
  Tensor2 grad;
  Tensor2 m;  // Adam first moment
  Tensor2 v;  // Adam second moment
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class ParamStore {
 public:
  ParamId add(std::string name, Tensor2 init);
  ParamId id(std::string_view name) const;
  bool contains(std::string_view name) const;

  Parameter& operator[](ParamId id) { return params_.at(id.index); }
  const Parameter& operator[](ParamId id) const { return params_.at(id.index); }
  Parameter& operator[](std::string_view name) { return (*this)[id(name)]; }
  const Parameter& operator[](std::string_view name) const { return (*this)[id(name)]; }

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }

  void zero_grad();
  double grad_norm() const;
  // Scales all gradients so their global L2 norm is at most max_norm.
  // Returns the norm before clipping.
  double clip_grad_norm(double max_norm);
  // Bias-corrected Adam update of every parameter, then zeroes gradients.
  void adam_step(const AdamOptions& options);

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
  std::uint64_t step_ = 0;
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor2 uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, std::mt19937_64& rng);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary checkpoint, all integers little-endian, reals IEEE-754 binary64:
//   char[8]  magic "CSLSLCKP"
//   u32      format version (1)
//   u64      rng seed
//   u64      Adam step counter
//   u32      metadata entry count, then per entry: u32 len + key bytes, u32 len + value bytes
//   u32      tensor count, then per tensor:
//              u32 len + name bytes, u64 rows, u64 cols,
//              rows*cols f64 values, rows*cols f64 m, rows*cols f64 v  (row-major)
struct CheckpointData {
  std::uint64_t rng_seed = 0;
  std::map<std::string, std::string> meta;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(std::ostream& out, const ParamStore& store, const CheckpointData& data);
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const CheckpointData& data);
// Restores values, moments and the step counter into a store whose parameter
// names and shapes already match the file.
CheckpointData load_checkpoint(std::istream& in, ParamStore& store);
CheckpointData load_checkpoint(const std::filesystem::path& path, ParamStore& store);
CheckpointData read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace cslsl::grad
