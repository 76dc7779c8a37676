#include "mergenet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "mergenet/errors.hpp"

namespace mergenet {

namespace {

constexpr const char* kMagic = "MERGENET-CKPT 1";

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

double get_f64(std::istream& is, std::size_t slot_index) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) {
    throw FormatError("checkpoint payload truncated in slot " + std::to_string(slot_index));
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

void put_tensor(std::ostream& os, const Tensor& t) {
  for (auto v : t.data()) put_f64(os, static_cast<double>(v));
}

Tensor get_tensor(std::istream& is, std::size_t rows, std::size_t cols, std::size_t slot_index) {
  std::vector<Scalar> data(rows * cols);
  for (auto& v : data) v = static_cast<Scalar>(get_f64(is, slot_index));
  return Tensor({rows, cols}, std::move(data));
}

}  // namespace

std::size_t CheckpointEntry::rows() const {
  return std::visit([](const auto& v) -> std::size_t { return v.rows(); }, value);
}

std::size_t CheckpointEntry::cols() const {
  return std::visit([](const auto& v) -> std::size_t { return v.cols(); }, value);
}

std::size_t CheckpointEntry::rank() const {
  if (const auto* p = std::get_if<LowRankParam>(&value)) return p->rank();
  return 0;
}

void write_checkpoint(std::ostream& os, const std::vector<CheckpointEntry>& entries) {
  os << kMagic << '\n' << "slots " << entries.size() << '\n';
  for (const auto& e : entries) {
    if (e.slot_id.empty() || e.slot_id.find_first_of(" \t\r\n") != std::string::npos) {
      throw ContractError("checkpoint slot id '" + e.slot_id + "' is empty or contains whitespace");
    }
    if (const auto* t = std::get_if<Tensor>(&e.value); t && !t->is_matrix()) {
      throw ShapeError("checkpoint slot '" + e.slot_id + "' must be 2-D, got " + shape_str(t->shape()));
    }
    os << e.slot_id << ' ' << e.rows() << ' ' << e.cols() << ' ' << e.rank() << '\n';
  }
  os << "payload\n";
  for (const auto& e : entries) {
    if (const auto* p = std::get_if<LowRankParam>(&e.value)) {
      put_tensor(os, p->b);
      put_tensor(os, p->a);
    } else {
      put_tensor(os, std::get<Tensor>(e.value));
    }
  }
}

std::vector<CheckpointEntry> read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMagic) throw FormatError("not a mergenet checkpoint (bad magic)");
  if (!std::getline(is, line)) throw FormatError("checkpoint truncated before slot count");
  std::size_t count = 0;
  {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag >> count) || tag != "slots") throw FormatError("checkpoint: malformed slot count line");
  }
  struct Header {
    std::string id;
    std::size_t rows, cols, rank;
  };
  std::vector<Header> headers;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw FormatError("checkpoint manifest truncated at slot " + std::to_string(i));
    std::istringstream ls(line);
    Header h{};
    if (!(ls >> h.id >> h.rows >> h.cols >> h.rank) || h.rows == 0 || h.cols == 0) {
      throw FormatError("checkpoint manifest line " + std::to_string(i + 3) + " malformed: '" + line + "'");
    }
    headers.push_back(h);
  }
  if (!std::getline(is, line) || line != "payload") throw FormatError("checkpoint: missing payload marker");
  std::vector<CheckpointEntry> out;
  for (std::size_t i = 0; i < headers.size(); ++i) {
    const auto& h = headers[i];
    if (h.rank == 0) {
      out.push_back({h.id, get_tensor(is, h.rows, h.cols, i)});
    } else {
      auto b = get_tensor(is, h.rows, h.rank, i);
      auto a = get_tensor(is, h.rank, h.cols, i);
      out.push_back({h.id, LowRankParam(std::move(b), std::move(a), h.id)});
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes after payload");
  return out;
}

std::string checkpoint_bytes(const std::vector<CheckpointEntry>& entries) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, entries);
  return os.str();
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries) {
  write_file_atomic(path, checkpoint_bytes(entries));
}

std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace mergenet
