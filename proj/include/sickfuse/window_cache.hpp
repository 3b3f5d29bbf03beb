#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sickfuse/labeling.hpp"

namespace sickfuse {

inline constexpr std::string_view kWindowCacheMagic = "SFW1";

/// One window per file: magic, id, then named tensor records ("label" = [t_report, fms],
/// "eye", "head", and any of "video", "flow", "disparity").
void write_window_file(const WindowData& window, const std::filesystem::path& path);
WindowData read_window_file(const std::filesystem::path& path);

/// File name of a window inside a cache directory.
std::filesystem::path window_file(const std::filesystem::path& cache_dir, const std::string& window_id);

/// Writes every window plus windows.csv (kept and dropped rows).
void write_window_cache(const std::filesystem::path& cache_dir, const std::vector<WindowData>& windows,
                        const std::vector<WindowIndexRow>& index);

/// Loads the kept windows listed in windows.csv, in index order.
std::vector<WindowData> read_window_cache(const std::filesystem::path& cache_dir);

}  // namespace sickfuse
