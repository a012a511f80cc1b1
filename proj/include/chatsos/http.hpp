#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>

#include "chatsos/error.hpp"
#include "chatsos/utf8.hpp"

namespace chatsos::http {

struct Url {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string path;  // always starts with '/'

  std::string origin() const { return scheme + "://" + host + ":" + std::to_string(port); }
};

inline Url parse_url(const std::string& url) {
  Url out;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::kConfiguration, "endpoint URL has no scheme: " + url);
  }
  out.scheme = url.substr(0, scheme_end);
  if (out.scheme != "http" && out.scheme != "https") {
    throw Error(ErrorKind::kConfiguration, "unsupported URL scheme: " + out.scheme);
  }
  const std::string rest = url.substr(scheme_end + 3);
  const auto path_start = rest.find('/');
  std::string authority = rest.substr(0, path_start);
  out.path = path_start == std::string::npos ? "/" : rest.substr(path_start);
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos && authority.find(']') == std::string::npos) {
    out.host = authority.substr(0, colon);
    try {
      out.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfiguration, "bad port in URL: " + url);
    }
  } else {
    out.host = authority;
    out.port = out.scheme == "https" ? 443 : 80;
  }
  if (out.host.empty()) throw Error(ErrorKind::kConfiguration, "URL has no host: " + url);
  return out;
}

/// Transport failures are retried `max_retries` times, sleeping
/// base_delay * 2^attempt between attempts.
struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{250};

  std::chrono::milliseconds delay_for(int attempt) const { return base_delay * (1LL << attempt); }
};

struct Response {
  int status = 0;
  std::string body;
};

/// Reads a bearer token: explicit value first, then the environment.
inline std::string resolve_token(const std::string& explicit_token, const char* env_var) {
  if (!explicit_token.empty()) return explicit_token;
  if (const char* v = std::getenv(env_var)) return v;
  return {};
}

/// POSTs a JSON body. Returns any HTTP response (2xx or not); throws
/// `transport_kind` once the retry budget is spent on connection errors.
inline Response post_json(const std::string& endpoint, const std::string& body,
                          const std::string& bearer_token, std::chrono::milliseconds timeout,
                          const RetryPolicy& retry, ErrorKind transport_kind) {
  const Url url = parse_url(endpoint);
  httplib::Client client(url.origin());
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);

  std::string last_error;
  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(url.path, headers, body, "application/json");
    if (res) return Response{res->status, res->body};
    last_error = httplib::to_string(res.error());
    if (attempt >= retry.max_retries) break;
    std::this_thread::sleep_for(retry.delay_for(attempt));
  }
  throw Error(transport_kind, "request to " + endpoint + " failed after " +
                                  std::to_string(retry.max_retries) + " retries: " + last_error);
}

inline std::string excerpt(const std::string& body, std::size_t max = 200) {
  const std::string head = utf8::prefix(body, max);
  return head.size() == body.size() ? head : head + "...";
}

}  // namespace chatsos::http
