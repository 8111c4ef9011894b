#include "mmgs/io/checkpoint.hpp"

#include "mmgs/common/error.hpp"
#include "mmgs/io/binary.hpp"

#include <algorithm>
#include <limits>

namespace mmgs::io {

std::size_t CheckpointTensor::numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) {
            return &t;
        }
    }
    return nullptr;
}

template <std::floating_point T>
CheckpointTensor to_checkpoint_tensor(const std::string& name, const ad::Tensor<T>& tensor) {
    CheckpointTensor out;
    out.name = name;
    out.shape = tensor.shape();
    if constexpr (std::is_same_v<T, float>) {
        out.dtype = DType::F32;
        out.f32 = tensor.to_vector();
    } else {
        out.dtype = DType::F64;
        out.f64.assign(tensor.data().begin(), tensor.data().end());
    }
    return out;
}

template <std::floating_point T>
void assign_from_checkpoint(const CheckpointTensor& stored, ad::Tensor<T>& tensor) {
    if (stored.shape != tensor.shape()) {
        throw FormatError("checkpoint tensor '" + stored.name + "' has shape " + ad::shape_string(stored.shape) +
                          ", expected " + ad::shape_string(tensor.shape()));
    }
    const DType want = std::is_same_v<T, float> ? DType::F32 : DType::F64;
    if (stored.dtype != want) {
        throw FormatError("checkpoint tensor '" + stored.name + "' has a different precision");
    }
    auto dst = tensor.mutable_data();
    if constexpr (std::is_same_v<T, float>) {
        std::copy(stored.f32.begin(), stored.f32.end(), dst.begin());
    } else {
        std::copy(stored.f64.begin(), stored.f64.end(), dst.begin());
    }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    ByteWriter w;
    w.bytes("MMGS", 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
    for (const auto& t : checkpoint.tensors) {
        if (t.name.size() > std::numeric_limits<std::uint16_t>::max() || t.shape.size() > 255) {
            throw ContractViolation("checkpoint tensor '" + t.name + "' cannot be encoded");
        }
        w.u16(static_cast<std::uint16_t>(t.name.size()));
        w.bytes(t.name.data(), t.name.size());
        w.u8(static_cast<std::uint8_t>(t.dtype));
        w.u8(static_cast<std::uint8_t>(t.shape.size()));
        for (auto d : t.shape) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        if (t.dtype == DType::F32) {
            for (float v : t.f32) w.f32(v);
        } else {
            for (double v : t.f64) w.f64(v);
        }
    }
    const std::string config = checkpoint.config.dump();
    w.u32(static_cast<std::uint32_t>(config.size()));
    w.bytes(config.data(), config.size());
    w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto r = ByteReader::from_file(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string(magic, 4) != "MMGS") {
        throw FormatError(path.string() + ": bad magic '" + std::string(magic, 4) + "', not a checkpoint");
    }
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        t.name.resize(r.u16());
        r.bytes(t.name.data(), t.name.size());
        const auto dtype = r.u8();
        if (dtype > 1) {
            throw FormatError(path.string() + ": unknown dtype code " + std::to_string(dtype) + " at byte offset " +
                              std::to_string(r.offset() - 1));
        }
        t.dtype = static_cast<DType>(dtype);
        t.shape.resize(r.u8());
        for (auto& d : t.shape) d = r.u32();
        const std::size_t n = t.numel();
        const std::size_t width = t.dtype == DType::F32 ? 4 : 8;
        if (n > r.remaining() / width) {
            throw FormatError(path.string() + ": truncated at byte offset " + std::to_string(r.remaining() + r.offset()) +
                              " while reading tensor '" + t.name + "'");
        }
        if (t.dtype == DType::F32) {
            t.f32.resize(n);
            for (auto& v : t.f32) v = r.f32();
        } else {
            t.f64.resize(n);
            for (auto& v : t.f64) v = r.f64();
        }
        ckpt.tensors.push_back(std::move(t));
    }
    std::string config(r.u32(), '\0');
    r.bytes(config.data(), config.size());
    try {
        ckpt.config = nlohmann::json::parse(config);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": malformed config echo: " + e.what());
    }
    return ckpt;
}

template CheckpointTensor to_checkpoint_tensor(const std::string&, const ad::Tensor<float>&);
template CheckpointTensor to_checkpoint_tensor(const std::string&, const ad::Tensor<double>&);
template void assign_from_checkpoint(const CheckpointTensor&, ad::Tensor<float>&);
template void assign_from_checkpoint(const CheckpointTensor&, ad::Tensor<double>&);

} // namespace mmgs::io
