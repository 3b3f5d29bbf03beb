#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sickfuse/autodiff.hpp"
#include "sickfuse/tensor.hpp"

namespace sickfuse {

// Little-endian primitives shared by the checkpoint (SFM1), window cache (SFW1)
// and frame (SFR1) formats.
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

void write_magic(std::ostream& out, std::string_view magic);
/// Throws ParseError when the next bytes are not `magic`.
void expect_magic(std::istream& in, std::string_view magic, std::string_view what);

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Record layout: name length, name bytes, rank, dims, values.
void write_named_tensor(std::ostream& out, std::string_view name, const Tensor& value);
/// Returns nullopt at a clean end of stream; throws ParseError on truncation.
std::optional<NamedTensor> read_named_tensor(std::istream& in);

inline constexpr std::string_view kCheckpointMagic = "SFM1";

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Parameter*>& params);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace sickfuse
