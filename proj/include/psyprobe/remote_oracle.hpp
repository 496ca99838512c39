#pragma once

#include <atomic>
#include <chrono>
#include <string>

#include "psyprobe/oracle.hpp"

namespace psyprobe {

struct RemoteOptions {
  int attempts = 3;
  std::chrono::milliseconds backoff{100};  // doubled after every failed attempt
  std::chrono::seconds timeout{30};
};

/// HTTP classifier client.
///
/// POST <endpoint>/classify with {"image_png_b64": "<base64 PNG>"}; the server
/// answers {"probabilities": {"<class>": p, ...}, "model_id": "<id>"}.
/// Connection failures and 5xx/429 answers are retried; other 4xx answers
/// fail at once.
class RemoteOracle final : public Oracle {
 public:
  RemoteOracle(std::string endpoint, InputDims dims, RemoteOptions options = {},
               std::uint64_t max_queries = OracleBudget::kUnlimited);

  InputDims input_dims() const override { return dims_; }
  std::string id() const override { return "remote:" + endpoint_; }

  /// HTTP requests sent so far, retries included.
  std::uint64_t requests_sent() const { return requests_.load(); }

 protected:
  ClassProbabilities query(const Image& img) const override;

 private:
  std::string endpoint_;
  std::string host_;
  std::string base_path_;
  InputDims dims_;
  RemoteOptions options_;
  mutable std::atomic<std::uint64_t> requests_{0};
};

/// Request body for an image.
std::string encode_classify_request(const Image& img);
/// Server side of the same format.
Image decode_classify_request(const std::string& body);
std::string encode_classify_response(const ClassProbabilities& probs, const std::string& model_id);
/// Parses and validates a response body; throws ProtocolError.
ClassProbabilities parse_classify_response(const std::string& body, std::string* model_id = nullptr);

}  // namespace psyprobe
