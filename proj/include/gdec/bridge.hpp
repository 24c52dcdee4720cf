#pragma once

/**
 * Client and reference server for the model-bridge wire protocol.
 *
 * Newline-delimited JSON over a byte stream (a child's stdio or TCP):
 *
 *   -> {"op":"hello","proto":1}
 *   <- {"ok":true,"vocab_size":N,"bos":i,"eos":j,"name":s}
 *   -> {"op":"frame","id":k,"tokens":[...],"with_context":bool}
 *   <- {"ok":true,"id":k,"logprobs":[...]}      entries are numbers or "-inf"
 *   -> {"op":"close"}
 *
 * Any {"ok":false,"error":s} aborts the session. The hello request may carry
 * optional "prompt" and "context" fields; the hello response may carry
 * optional "masking" (the bridge's masking mode) and "vocab" (token texts).
 */

#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gdec/error.hpp"
#include "gdec/logit_source.hpp"
#include "gdec/numeric.hpp"
#include "gdec/trace.hpp"

namespace gdec {

inline constexpr int kProtocolVersion = 1;

class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void write_line(const std::string& line) = 0;
  // std::nullopt at end of stream.
  virtual std::optional<std::string> read_line() = 0;
};

// Line I/O over a pair of file descriptors.
class FdChannel : public LineChannel {
 public:
  FdChannel(int in_fd, int out_fd, bool owns = false, bool is_socket = false)
      : in_(in_fd), out_(out_fd), owns_(owns), socket_(is_socket) {}
  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;
  ~FdChannel() override { close_fds(); }

  void write_line(const std::string& line) override {
    std::string buf = line + '\n';
    const char* p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
      const ssize_t n = socket_ ? ::send(out_, p, left, MSG_NOSIGNAL) : ::write(out_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("write failed: ") + std::strerror(errno));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> read_line() override {
    for (;;) {
      if (auto pos = buf_.find('\n'); pos != std::string::npos) {
        std::string line = buf_.substr(0, pos);
        buf_.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      char tmp[65536];
      const ssize_t n = ::read(in_, tmp, sizeof tmp);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("read failed: ") + std::strerror(errno));
      }
      if (n == 0) {
        if (buf_.empty()) return std::nullopt;
        std::string line = std::move(buf_);
        buf_.clear();
        return line;
      }
      buf_.append(tmp, static_cast<std::size_t>(n));
    }
  }

 protected:
  void close_fds() {
    if (!owns_) return;
    if (in_ >= 0) ::close(in_);
    if (out_ >= 0 && out_ != in_) ::close(out_);
    in_ = out_ = -1;
    owns_ = false;
  }

 private:
  int in_, out_;
  bool owns_;
  bool socket_;
  std::string buf_;
};

// Runs `/bin/sh -c command` and talks to it over its stdin/stdout.
class SubprocessChannel final : public FdChannel {
 public:
  static std::unique_ptr<SubprocessChannel> spawn(const std::string& command) {
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw ProtocolError("pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw ProtocolError("pipe failed");
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw ProtocolError("fork failed");
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::unique_ptr<SubprocessChannel>(new SubprocessChannel(from_child[0], to_child[1], pid));
  }

  ~SubprocessChannel() override {
    close_fds();
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }

 private:
  SubprocessChannel(int in, int out, pid_t pid) : FdChannel(in, out, true), pid_(pid) {}
  pid_t pid_;
};

inline std::unique_ptr<FdChannel> connect_tcp(const std::string& host, const std::string& port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw ProtocolError("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw ProtocolError("cannot connect to " + host + ":" + port);
  return std::make_unique<FdChannel>(fd, fd, true, true);
}

// "stdio:<command>" or "tcp:<host>:<port>".
inline std::unique_ptr<LineChannel> open_endpoint(const std::string& spec) {
  if (spec.rfind("stdio:", 0) == 0) return SubprocessChannel::spawn(spec.substr(6));
  if (spec.rfind("tcp:", 0) == 0) {
    const auto rest = spec.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw ConfigError("tcp endpoint needs host:port");
    return connect_tcp(rest.substr(0, colon), rest.substr(colon + 1));
  }
  throw ConfigError("endpoint must start with stdio: or tcp:");
}

namespace wire {

inline void append_number(std::string& out, double v) {
  if (v == kNegInf) {
    out += "\"-inf\"";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

inline std::string frame_response(std::int64_t id, std::span<const double> logprobs) {
  std::string out = "{\"ok\":true,\"id\":" + std::to_string(id) + ",\"logprobs\":[";
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    if (i) out += ',';
    append_number(out, logprobs[i]);
  }
  out += "]}";
  return out;
}

inline std::string error_response(const std::string& msg) {
  return json{{"ok", false}, {"error", msg}}.dump();
}

inline LogProbs parse_logprobs(const json& arr) {
  if (!arr.is_array()) throw ProtocolError("logprobs is not an array");
  LogProbs out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (v.is_number()) out.push_back(v.get<double>());
    else if (v.is_string() && v.get<std::string>() == "-inf") out.push_back(kNegInf);
    else throw ProtocolError("logprobs entry is neither a number nor \"-inf\"");
  }
  return out;
}

}  // namespace wire

class BridgeSession final : public ModelSession {
 public:
  explicit BridgeSession(std::unique_ptr<LineChannel> channel, const std::string& prompt = {},
                         const std::string& context_ref = {})
      : ch_(std::move(channel)) {
    json hello{{"op", "hello"}, {"proto", kProtocolVersion}};
    if (!prompt.empty()) hello["prompt"] = prompt;
    if (!context_ref.empty()) hello["context"] = context_ref;
    ch_->write_line(hello.dump());
    const json r = read_response("hello");
    if (r.contains("proto") && r.at("proto") != kProtocolVersion)
      throw ProtocolError("handshake version mismatch: bridge speaks proto " + r.at("proto").dump());
    try {
      desc_.vocab_size = r.at("vocab_size").get<std::size_t>();
      desc_.bos_id = r.at("bos").get<TokenId>();
      desc_.eos_id = r.at("eos").get<TokenId>();
      desc_.model_name = r.at("name").get<std::string>();
      masking_ = r.value("masking", std::string("unspecified"));
      if (r.contains("vocab")) vocab_ = r.at("vocab").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("bad hello response: ") + e.what());
    }
    try {
      validate_descriptor(desc_);
    } catch (const ConfigError& e) {
      throw ProtocolError(std::string("bad hello response: ") + e.what());
    }
  }

  BridgeSession(const BridgeSession&) = delete;
  BridgeSession& operator=(const BridgeSession&) = delete;

  ~BridgeSession() override {
    try {
      ch_->write_line(R"({"op":"close"})");
    } catch (...) {
    }
  }

  const SessionDescriptor& descriptor() const override { return desc_; }
  std::string masking_mode() const override { return masking_; }

  std::string token_text(TokenId id) const override {
    if (id >= 0 && static_cast<std::size_t>(id) < vocab_.size()) return vocab_[id];
    return ModelSession::token_text(id);
  }

  LogProbs frame_for(std::span<const TokenId> prefix, bool include_context) override {
    CacheKey key{Tokens(prefix.begin(), prefix.end()), include_context};
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;

    const std::int64_t id = next_id_++;
    json req{{"op", "frame"}, {"id", id}, {"tokens", key.first}, {"with_context", include_context}};
    ch_->write_line(req.dump());
    const json r = read_response("frame " + std::to_string(id));
    if (!r.contains("id") || r.at("id") != id)
      throw ProtocolError("response id does not match request id " + std::to_string(id));
    if (!r.contains("logprobs")) throw ProtocolError("frame response lacks logprobs (request id " + std::to_string(id) + ")");
    LogProbs lp = wire::parse_logprobs(r.at("logprobs"));
    if (lp.size() != desc_.vocab_size)
      throw ContractViolation("request id " + std::to_string(id) + ": " + std::to_string(lp.size()) +
                              " entries, expected " + std::to_string(desc_.vocab_size));
    if (auto e = check_logprobs(lp); !e.empty())
      throw ContractViolation("request id " + std::to_string(id) + ": " + e);

    if (cache_.size() >= kCacheLimit) cache_.clear();
    cache_.emplace(std::move(key), lp);
    return lp;
  }

  std::int64_t requests_sent() const { return next_id_; }

 private:
  using CacheKey = std::pair<Tokens, bool>;
  static constexpr std::size_t kCacheLimit = 4096;

  json read_response(const std::string& what) {
    auto line = ch_->read_line();
    ++lines_read_;
    if (!line) throw ProtocolError("bridge closed the stream while awaiting " + what);
    json r;
    try {
      r = json::parse(*line);
    } catch (const json::exception& e) {
      throw ProtocolError("malformed response at line " + std::to_string(lines_read_) + ": " + e.what());
    }
    if (!r.is_object() || !r.contains("ok") || !r.at("ok").is_boolean())
      throw ProtocolError("malformed response at line " + std::to_string(lines_read_) + ": missing \"ok\"");
    if (!r.at("ok").get<bool>())
      throw ProtocolError("bridge reported error: " + r.value("error", std::string("(no message)")));
    return r;
  }

  std::unique_ptr<LineChannel> ch_;
  SessionDescriptor desc_;
  std::string masking_ = "unspecified";
  std::vector<std::string> vocab_;
  std::int64_t next_id_ = 0;
  std::size_t lines_read_ = 0;
  std::map<CacheKey, LogProbs> cache_;
};

inline std::unique_ptr<BridgeSession> open_bridge_session(const std::string& endpoint, const std::string& prompt = {},
                                                          const std::string& context_ref = {}) {
  return std::make_unique<BridgeSession>(open_endpoint(endpoint), prompt, context_ref);
}

// Serves `session` over `ch` until close or end of stream. Per-request
// failures are answered with {"ok":false} and do not end the loop.
inline void serve_session(ModelSession& session, LineChannel& ch) {
  const auto& d = session.descriptor();
  while (auto line = ch.read_line()) {
    if (line->empty()) continue;
    json req;
    try {
      req = json::parse(*line);
    } catch (const json::exception& e) {
      ch.write_line(wire::error_response(std::string("malformed request: ") + e.what()));
      continue;
    }
    const auto op = req.value("op", std::string());
    try {
      if (op == "hello") {
        if (req.value("proto", 0) != kProtocolVersion) {
          ch.write_line(wire::error_response("unsupported proto"));
          continue;
        }
        json vocab = json::array();
        for (std::size_t i = 0; i < d.vocab_size; ++i) vocab.push_back(session.token_text(static_cast<TokenId>(i)));
        ch.write_line(json{{"ok", true},
                           {"proto", kProtocolVersion},
                           {"vocab_size", d.vocab_size},
                           {"bos", d.bos_id},
                           {"eos", d.eos_id},
                           {"name", d.model_name},
                           {"masking", session.masking_mode()},
                           {"vocab", vocab}}
                          .dump());
      } else if (op == "frame") {
        const auto id = req.at("id").get<std::int64_t>();
        const auto tokens = req.at("tokens").get<Tokens>();
        const auto with_context = req.at("with_context").get<bool>();
        ch.write_line(wire::frame_response(id, session.frame_for(tokens, with_context)));
      } else if (op == "close") {
        return;
      } else {
        ch.write_line(wire::error_response("unknown op '" + op + "'"));
      }
    } catch (const std::exception& e) {
      ch.write_line(wire::error_response(e.what()));
    }
  }
}

}  // namespace gdec
