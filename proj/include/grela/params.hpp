#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "grela/common.hpp"
#include "grela/tensor.hpp"

namespace grela {

// Named trainable tensors. Iteration is sorted by name, which fixes both the
// checkpoint layout and the optimizer's update order.
class ParamStore {
public:
    // uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))
    Tensor create(const std::string& name, std::vector<int> shape, int fan_in,
                  int fan_out, Rng& rng);
    Tensor create_zeros(const std::string& name, std::vector<int> shape);

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;
    void zero_grads();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    Tensor insert(const std::string& name, Tensor t);
    std::map<std::string, Tensor> params_;
};

// Raw 64-bit float IO with an explicit little-endian byte order, shared by
// the checkpoint and training-state formats.
void write_doubles_le(std::ostream& out, const std::vector<double>& values);
void read_doubles_le(std::istream& in, std::vector<double>& values);

// Checkpoint file: magic "GRELA1\n", then per parameter a header line
// "name ndim d1 ... dk\n" followed by raw little-endian 64-bit floats in
// row-major order; parameters sorted by name.
void save_checkpoint(const ParamStore& params, const std::string& path);

// Loads values into an existing store; the file's name set and shapes must
// match exactly.
void load_checkpoint(ParamStore& params, const std::string& path);

// Reads a checkpoint into a fresh map (used to inspect shapes before a model
// is constructed).
std::map<std::string, Tensor> read_checkpoint(const std::string& path);

}  // namespace grela
