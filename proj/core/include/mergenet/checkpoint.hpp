#ifndef MERGENET_CHECKPOINT_HPP
#define MERGENET_CHECKPOINT_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "mergenet/param_codec.hpp"

namespace mergenet {

/*
 * Checkpoint file layout:
 *
 *   MERGENET-CKPT 1\n
 *   slots <count>\n
 *   <slot_id> <rows> <cols> <r>\n        one line per slot, manifest order
 *   payload\n
 *   <raw little-endian float64 values>
 *
 * A factorized slot (r >= 1) stores b (rows x r) then a (r x cols); a dense
 * slot is written with r = 0 and stores rows x cols values. Slot ids may not
 * contain whitespace. Values are always 64-bit on disk.
 */
struct CheckpointEntry {
  std::string slot_id;
  std::variant<Tensor, LowRankParam> value;

  std::size_t rows() const;
  std::size_t cols() const;
  /// 0 for dense entries.
  std::size_t rank() const;
};

void write_checkpoint(std::ostream& os, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(std::istream& is);

std::string checkpoint_bytes(const std::vector<CheckpointEntry>& entries);
void save_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace mergenet

#endif  // MERGENET_CHECKPOINT_HPP
