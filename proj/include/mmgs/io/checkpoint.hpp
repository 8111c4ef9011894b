#pragma once

#include "mmgs/ad/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mmgs::io {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

struct CheckpointTensor {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::size_t> shape;
    std::vector<float> f32;  // filled for F32
    std::vector<double> f64; // filled for F64

    std::size_t numel() const;
};

/// "MMGS", u32 version 1, u32 count, per tensor: u16 name length, name,
/// u8 dtype, u8 rank, u32 dims, payload; then u32 length + JSON config echo.
struct Checkpoint {
    std::vector<CheckpointTensor> tensors;
    nlohmann::json config = nlohmann::json::object();

    const CheckpointTensor* find(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <std::floating_point T>
CheckpointTensor to_checkpoint_tensor(const std::string& name, const ad::Tensor<T>& tensor);

/// Copies the stored values into `tensor` (shape and precision must match).
template <std::floating_point T>
void assign_from_checkpoint(const CheckpointTensor& stored, ad::Tensor<T>& tensor);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace mmgs::io
