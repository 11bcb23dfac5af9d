#pragma once

// Named-tensor container.
//
//   magic "DRSACCKP" | u32 version | u64 tensor count |
//   per tensor: u32 name length, name bytes, u64 rows, u64 cols,
//               rows*cols little-endian float64 in row-major order |
//   u64 text count | per entry: u32 name length, name, u64 length, bytes
//
// Entries are written in name order, so equal contents give equal files.

#include <map>
#include <string>

#include "drsac/linalg.hpp"
#include "drsac/nn/parameter_store.hpp"

namespace drsac::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class Checkpoint {
 public:
  void put_tensor(const std::string& name, const Matrix& value);
  const Matrix& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const { return tensors_.count(name) != 0; }

  void put_text(const std::string& name, const std::string& value);
  const std::string& text(const std::string& name) const;
  bool has_text(const std::string& name) const { return texts_.count(name) != 0; }

  /// Stores every parameter as "<prefix>/<name>"; with optimizer state also
  /// the Adam moments and step count.
  void put_store(const std::string& prefix, const ParameterStore& store, bool optimizer_state);
  /// Restores values (and optimizer state when present) into a store with
  /// the same layout. Throws on missing or mis-shaped tensors.
  void get_store(const std::string& prefix, ParameterStore& store) const;

  const std::map<std::string, Matrix>& tensors() const { return tensors_; }
  const std::map<std::string, std::string>& texts() const { return texts_; }

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);
  /// Writes to a temporary file and renames it into place.
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::map<std::string, Matrix> tensors_;
  std::map<std::string, std::string> texts_;
};

}  // namespace drsac::nn
