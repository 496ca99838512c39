#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "psyprobe/remote_oracle.hpp"

#include <httplib.h>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <thread>

#include "psyprobe/encoding.hpp"
#include "psyprobe/error.hpp"
#include "psyprobe/image_io.hpp"

namespace psyprobe {
namespace {

bool retryable(int status) { return status >= 500 || status == 429; }

}  // namespace

RemoteOracle::RemoteOracle(std::string endpoint, InputDims dims, RemoteOptions options,
                           std::uint64_t max_queries)
    : Oracle(max_queries), endpoint_(std::move(endpoint)), dims_(dims), options_(options) {
  const auto scheme_end = endpoint_.find("://");
  if (scheme_end == std::string::npos) {
    throw ParameterError(fmt::format("endpoint '{}' must start with http:// or https://", endpoint_));
  }
  const auto path_start = endpoint_.find('/', scheme_end + 3);
  host_ = endpoint_.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : endpoint_.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  if (options_.attempts < 1) throw ParameterError("remote oracle needs at least one attempt");
  if (dims_.width <= 0 || dims_.height <= 0 || (dims_.channels != 1 && dims_.channels != 3)) {
    throw DimensionError("remote oracle input dims are invalid");
  }
}

ClassProbabilities RemoteOracle::query(const Image& img) const {
  const std::string body = encode_classify_request(img);
  const std::string path = base_path_ + "/classify";
  std::string last_error;
  for (int attempt = 0; attempt < options_.attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.backoff * (1 << (attempt - 1)));
    httplib::Client client(host_);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    ++requests_;
    const auto res = client.Post(path, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      spdlog::warn("classify request to {} failed: {}", endpoint_, last_error);
      continue;
    }
    if (res->status >= 400) {
      last_error = fmt::format("HTTP {}", res->status);
      if (!retryable(res->status)) break;
      spdlog::warn("classify request to {} answered {}", endpoint_, res->status);
      continue;
    }
    return parse_classify_response(res->body);
  }
  throw TransportError(fmt::format("classify request to {} failed: {}", endpoint_, last_error));
}

std::string encode_classify_request(const Image& img) {
  return nlohmann::json{{"image_png_b64", base64_encode(encode_png(img))}}.dump();
}

Image decode_classify_request(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    return decode_png(base64_decode(j.at("image_png_b64").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(fmt::format("malformed classify request: {}", e.what()));
  }
}

std::string encode_classify_response(const ClassProbabilities& probs, const std::string& model_id) {
  return nlohmann::json{{"probabilities", probs.entries()}, {"model_id", model_id}}.dump();
}

ClassProbabilities parse_classify_response(const std::string& body, std::string* model_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(fmt::format("response is not JSON: {}", e.what()));
  }
  if (!j.is_object() || !j.contains("probabilities") || !j["probabilities"].is_object()) {
    throw ProtocolError("response lacks a 'probabilities' object");
  }
  std::map<std::string, double> entries;
  for (const auto& [cls, value] : j["probabilities"].items()) {
    if (!value.is_number()) throw ProtocolError(fmt::format("probability of '{}' is not a number", cls));
    entries[cls] = value.get<double>();
  }
  if (model_id) {
    *model_id = j.contains("model_id") && j["model_id"].is_string() ? j["model_id"].get<std::string>() : "";
  }
  return ClassProbabilities(std::move(entries));
}

}  // namespace psyprobe
