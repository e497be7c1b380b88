#include "propspace/maps.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <string>

#include <json.hpp>

#include "propspace/binio.hpp"
#include "propspace/error.hpp"

namespace propspace {

void save_logit_map(const std::string& path, const LogitMap& map,
                    const std::string& provenance) {
  if (map.values.size() != map.height * map.width * map.channels) {
    fail(errc::shape_mismatch, "logit map values do not match its dims");
  }
  std::vector<std::uint8_t> buf;
  binio::put_bytes(buf, "PLLG", 4);
  binio::put_u32(buf, 1);
  binio::put_u32(buf, static_cast<std::uint32_t>(map.height));
  binio::put_u32(buf, static_cast<std::uint32_t>(map.width));
  binio::put_u32(buf, static_cast<std::uint32_t>(map.channels));
  for (double x : map.values) binio::put_f32(buf, static_cast<float>(x));

  nlohmann::json footer;
  footer["activated"] = map.activated;
  footer["provenance"] = provenance;
  const std::string footer_text = footer.dump();
  binio::put_bytes(buf, footer_text.data(), footer_text.size());
  binio::write_file(path, buf);
}

LogitMap load_logit_map(const std::string& path) {
  const auto bytes = binio::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PLLG", 4) != 0) {
    fail(errc::format_error, path + " is not a PLLG logit map");
  }
  binio::Reader reader(bytes);
  reader.bytes(4);
  if (reader.u32() != 1) fail(errc::format_error, "unsupported PLLG version");

  LogitMap map;
  map.height = reader.u32();
  map.width = reader.u32();
  map.channels = reader.u32();
  const std::uint64_t count =
      static_cast<std::uint64_t>(map.height) * map.width * map.channels;
  if (reader.remaining() < count * 4) {
    fail(errc::corrupt_payload, path + " is truncated");
  }
  map.values.resize(count);
  for (double& x : map.values) {
    x = static_cast<double>(reader.f32());
    if (!std::isfinite(x)) {
      fail(errc::corrupt_payload, "logit map has non-finite values");
    }
  }
  try {
    const auto rest = reader.bytes(reader.remaining());
    const auto footer = nlohmann::json::parse(std::string_view(
        reinterpret_cast<const char*>(rest.data()), rest.size()));
    map.activated = footer.at("activated").get<bool>();
  } catch (const nlohmann::json::exception&) {
    fail(errc::corrupt_payload, "logit map footer is not valid JSON");
  }
  return map;
}

void save_label_map_pgm(const std::string& path, const LabelMap& map) {
  if (map.labels.size() != map.height * map.width) {
    fail(errc::shape_mismatch, "label map size does not match its dims");
  }
  for (std::uint16_t v : map.labels) {
    if (v > 255) {
      fail(errc::label_out_of_range,
           "label " + std::to_string(v) + " does not fit an 8-bit PGM");
    }
  }
  std::string header = "P5\n" + std::to_string(map.width) + " " +
                       std::to_string(map.height) + "\n255\n";
  std::vector<std::uint8_t> buf(header.begin(), header.end());
  for (std::uint16_t v : map.labels) buf.push_back(static_cast<std::uint8_t>(v));
  binio::write_file(path, buf);
}

LabelMap load_label_map_pgm(const std::string& path) {
  const auto bytes = binio::read_file(path);
  std::size_t pos = 0;
  const auto token = [&]() -> std::string {
    while (true) {
      while (pos < bytes.size() &&
             std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      }
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() &&
           !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    }
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };

  if (token() != "P5") fail(errc::format_error, path + " is not a binary PGM");
  LabelMap map;
  try {
    map.width = std::stoul(token());
    map.height = std::stoul(token());
    if (std::stoul(token()) != 255) {
      fail(errc::format_error, "PGM maxval must be 255");
    }
  } catch (const std::logic_error&) {
    fail(errc::format_error, path + " has a malformed PGM header");
  }
  ++pos;  // single whitespace after maxval
  if (bytes.size() - pos < map.height * map.width) {
    fail(errc::corrupt_payload, path + " is truncated");
  }
  map.labels.resize(map.height * map.width);
  for (std::size_t i = 0; i < map.labels.size(); ++i) {
    map.labels[i] = bytes[pos + i];
  }
  return map;
}

}  // namespace propspace
