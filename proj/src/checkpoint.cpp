#include <bit>
#include <charconv>
#include <cstring>

#include "sia/rng.hpp"
#include "sia/store.hpp"

namespace sia {

using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

json encode(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) data.push_back(hex64(std::bit_cast<std::uint64_t>(m(i, j))));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"order", "column_major"}, {"bits", data}};
}

double decode_scalar(const json& v) {
  const std::string s = v.get<std::string>();
  std::uint64_t bits = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), bits, 16);
  if (ec != std::errc{} || end != s.data() + s.size() || s.size() != 16) {
    throw std::invalid_argument("checkpoint: bad scalar '" + s + "'");
  }
  return std::bit_cast<double>(bits);
}

Eigen::MatrixXd decode(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& bits = j.at("bits");
  if (rows < 0 || cols < 0 || bits.size() != static_cast<std::size_t>(rows * cols)) {
    throw std::invalid_argument("checkpoint: matrix size does not match its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = decode_scalar(bits[k++]);
  }
  return m;
}

}  // namespace

std::string serialize_policy(const Policyd& p) {
  const json doc{
      {"format", "sia.policy"},
      {"version", kCheckpointVersion},
      {"feature_dim", p.feature_dim()},
      {"action_count", p.action_count()},
      {"rank", p.rank()},
      {"temperature", hex64(std::bit_cast<std::uint64_t>(p.temperature()))},
      {"lineage", p.lineage()},
      {"base_weights", encode(p.base_weights())},
      {"adapter_left", encode(p.adapter_left())},
      {"adapter_right", encode(p.adapter_right())},
      {"value_head", encode(p.value_head())},
  };
  return doc.dump(1) + "\n";
}

Policyd deserialize_policy(std::string_view text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format") != "sia.policy" || doc.at("version") != kCheckpointVersion) {
      throw std::invalid_argument("checkpoint: unsupported format or version");
    }
    Eigen::MatrixXd value = decode(doc.at("value_head"));
    if (value.cols() != 1) throw std::invalid_argument("checkpoint: value head must be a column");
    Policyd p(decode(doc.at("base_weights")), decode(doc.at("adapter_left")), decode(doc.at("adapter_right")),
              value.col(0), decode_scalar(doc.at("temperature")),
              doc.at("lineage").get<std::vector<std::string>>());
    if (p.rank() != doc.at("rank").get<int>() || p.feature_dim() != doc.at("feature_dim").get<Eigen::Index>() ||
        p.action_count() != doc.at("action_count").get<Eigen::Index>()) {
      throw std::invalid_argument("checkpoint: header shape disagrees with parameters");
    }
    return p;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace sia
