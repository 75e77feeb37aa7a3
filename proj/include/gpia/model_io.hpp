#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <json.hpp>

#include "gpia/model.hpp"

namespace gpia {

// Binary record, all fields little-endian:
//   char[4] "GPMP" | u32 version (=1) | u32 loss | u32 c | u32 f | u32 l | f64 lambda
//   | f64[c*(f+1)] theta (row-major, bias last in each row)
inline constexpr char kModelMagic[4] = {'G', 'P', 'M', 'P'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "model records are written in native order; port the swap for big-endian hosts");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(in.good(), Errc::parse_error, "truncated model record");
  return v;
}

}  // namespace detail

inline void write_model(std::ostream& out, const ModelParams& p) {
  out.write(kModelMagic, 4);
  detail::put<std::uint32_t>(out, kModelVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.loss));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.classes()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.feature_dim()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.hops));
  detail::put<double>(out, p.lambda);
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) detail::put<double>(out, p.theta.data()[i]);
}

inline ModelParams read_model(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, kModelMagic, 4) == 0, Errc::parse_error,
          "not a model record");
  const auto version = detail::get<std::uint32_t>(in);
  require(version == kModelVersion, Errc::parse_error,
          "unsupported model version " + std::to_string(version));
  const auto loss = detail::get<std::uint32_t>(in);
  require(loss <= 1, Errc::parse_error, "unknown loss tag");
  const auto c = detail::get<std::uint32_t>(in);
  const auto f = detail::get<std::uint32_t>(in);
  const auto l = detail::get<std::uint32_t>(in);
  const auto lambda = detail::get<double>(in);
  auto p = ModelParams::zeros(c, f, static_cast<int>(l), lambda, static_cast<LossKind>(loss));
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta.data()[i] = detail::get<double>(in);
  return p;
}

inline void save_model(const ModelParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, path.string());
  write_model(out, p);
  require(out.good(), Errc::io, path.string());
}

inline ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::missing_file, path.string());
  return read_model(in);
}

inline nlohmann::json to_json(const ModelParams& p) {
  nlohmann::json j;
  j["version"] = kModelVersion;
  j["loss"] = to_string(p.loss);
  j["classes"] = p.classes();
  j["feature_dim"] = p.feature_dim();
  j["hops"] = p.hops;
  j["lambda"] = p.lambda;
  j["theta"] = std::vector<double>(p.theta.data(), p.theta.data() + p.theta.size());
  return j;
}

inline ModelParams model_from_json(const nlohmann::json& j) {
  try {
    auto p = ModelParams::zeros(j.at("classes").get<std::size_t>(),
                                j.at("feature_dim").get<std::size_t>(), j.at("hops").get<int>(),
                                j.at("lambda").get<double>(),
                                loss_kind_from_string(j.at("loss").get<std::string>()));
    const auto theta = j.at("theta").get<std::vector<double>>();
    require(theta.size() == p.size(), Errc::dimension_mismatch, "theta length");
    std::copy(theta.begin(), theta.end(), p.theta.data());
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, e.what());
  }
}

}  // namespace gpia
