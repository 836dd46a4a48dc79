#pragma once

// "CFN1" checkpoint container: little-endian, f32 payloads.
//   magic "CFN1" | version u32 | tensor count u32 | per tensor:
//   name_len u16, name bytes, rank u8, dims u32..., data f32...
// save -> load -> save round-trips byte-exactly.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "copdflow/tensor.hpp"

namespace copdflow {

constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

/// Snapshot of live parameters (values truncated to f32 on save).
template <class T>
std::vector<NamedTensor> pack_params(const std::vector<std::pair<std::string, const TensorT<T>*>>& named) {
    std::vector<NamedTensor> out;
    out.reserve(named.size());
    for (const auto& [name, t] : named) {
        NamedTensor nt;
        nt.name = name;
        nt.shape = t->shape;
        nt.data.reserve(t->data.size());
        for (auto v : t->data) nt.data.push_back(static_cast<float>(v));
        out.push_back(std::move(nt));
    }
    return out;
}

/// Restores parameters by name; every destination must be present with a
/// matching shape.
template <class T>
void unpack_params(const std::vector<NamedTensor>& src,
                   const std::vector<std::pair<std::string, TensorT<T>*>>& dst) {
    for (const auto& [name, t] : dst) {
        const NamedTensor* found = nullptr;
        for (const auto& nt : src)
            if (nt.name == name) {
                found = &nt;
                break;
            }
        if (!found) throw ParseError("checkpoint: missing tensor '" + name + "'");
        if (found->shape != t->shape)
            throw ParseError("checkpoint: shape mismatch for '" + name + "'");
        for (std::size_t i = 0; i < t->data.size(); ++i)
            t->data[i] = static_cast<T>(found->data[i]);
    }
}

}  // namespace copdflow
