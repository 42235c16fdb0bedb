#pragma once

// Client side of the gateway protocol: one connection, framed request/reply.

#include <string>
#include <vector>

#include "minigrid/framing.hpp"
#include "minigrid/net.hpp"
#include "minigrid/outcome.hpp"
#include "minigrid/protocol.hpp"

namespace minigrid {

class GatewayClient {
public:
  explicit GatewayClient(const net::Endpoint& ep) : sock_(net::connect_to(ep)) {}
  explicit GatewayClient(const std::string& addr)
      : GatewayClient(net::parse_endpoint(addr)) {}

  UplMessage call(const UplMessage& request) {
    sock_.send_all(frame_encode(message_encode(request)));
    char buf[16384];
    for (;;) {
      std::size_t n = sock_.recv_some(buf, sizeof buf);
      if (n == 0) {
        decoder_.finish(); // throws Truncated when mid-frame
        throw NetError("connection closed by gateway");
      }
      auto payloads = decoder_.feed(buf, n);
      if (!payloads.empty()) return message_decode(payloads.front());
    }
  }

  std::vector<std::string> list_vsites() {
    return expect<msg::VsiteList>(call(msg::ListVsites{})).names;
  }

  msg::ResourceReply describe(const std::string& vsite) {
    return expect<msg::ResourceReply>(call(msg::DescribeResources{vsite}));
  }

  std::string consign_async(const std::string& ajo_bytes) {
    return expect<msg::Consigned>(call(msg::Consign{ajo_bytes, ConsignMode::ASYNC}))
        .job_id;
  }

  Outcome consign_sync(const std::string& ajo_bytes) {
    auto reply =
        expect<msg::OutcomeReply>(call(msg::Consign{ajo_bytes, ConsignMode::SYNC}));
    return decode_outcome(reply.outcome_bytes);
  }

  msg::StatusReply poll(const std::string& job_id) {
    return expect<msg::StatusReply>(call(msg::Poll{job_id}));
  }

  msg::StatusReply kill(const std::string& job_id) {
    return expect<msg::StatusReply>(call(msg::Kill{job_id}));
  }

  Outcome outcome(const std::string& job_id) {
    auto reply = expect<msg::OutcomeReply>(call(msg::RetrieveOutcome{job_id}));
    return decode_outcome(reply.outcome_bytes);
  }

private:
  template <typename T> static T expect(const UplMessage& reply) {
    if (const auto* err = std::get_if<msg::ErrorReply>(&reply))
      throw Error(err->code, err->message);
    if (const auto* v = std::get_if<T>(&reply)) return *v;
    throw MalformedPayload("unexpected reply type");
  }

  net::Socket sock_;
  FrameDecoder decoder_;
};

} // namespace minigrid
