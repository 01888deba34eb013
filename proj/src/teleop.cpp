#include "lanerl/teleop.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/core/detail/base64.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <deque>
#include <filesystem>

#include "lanerl/error.hpp"

namespace lanerl {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr int kTopDownPixels = 192;

std::string base64_png(const Image &img) {
  const auto png = encode_png(img);
  std::string out(boost::beast::detail::base64::encoded_size(png.size()), '\0');
  out.resize(boost::beast::detail::base64::encode(out.data(), png.data(), png.size()));
  return out;
}

ojson metrics_json(const MetricsReport &m) {
  return {{"survival_time", m.survival_time},
          {"distance_ego_lane", m.distance_ego_lane},
          {"distance_both_lanes", m.distance_both_lanes},
          {"lateral_deviation", m.lateral_deviation},
          {"orientation_deviation", m.orientation_deviation}};
}

ojson message(const char *type) {
  ojson j;
  j["v"] = kTeleopProtocolVersion;
  j["type"] = type;
  return j;
}

std::string error_message(const std::string &text) {
  ojson j = message("error");
  j["message"] = text;
  return j.dump();
}

bool flag(const json &j, const char *key) {
  const auto it = j.find(key);
  if (it == j.end()) return false;
  if (!it->is_boolean()) throw UsageError(std::string("key_state.") + key + " must be a boolean");
  return it->get<bool>();
}

}  // namespace

KeyAction discrete_key_action(const KeyState &keys) {
  KeyAction a;
  const bool left = keys.left && !keys.right;
  const bool right = keys.right && !keys.left;
  if (keys.down || (!keys.up && !left && !right)) {
    a.rates = {0.0, 0.0};
    return a;
  }
  double steer = 0.0;
  if (keys.up) {
    steer = left ? -0.5 : right ? 0.5 : 0.0;
  } else {
    steer = left ? -1.0 : 1.0;
  }
  a.steering = steer;
  const double raw[1] = {steer};
  a.rates = map_action(ActionMapping::Steering, raw);
  return a;
}

TeleopSession::TeleopSession(std::shared_ptr<const TrackMap> track, EnvConfig env_config,
                             TeleopConfig cfg, std::string map_id)
    : track_(std::move(track)), cfg_(std::move(cfg)), map_id_(std::move(map_id)) {
  cfg_.validate();
  env_config.action_mapping = ActionMapping::WheelVelocityBraking;
  env_config.horizon = cfg_.horizon;
  env_config.render = true;
  env_ = std::make_unique<Env>(track_, env_config);
}

void TeleopSession::set_images(bool on) {
  images_ = on;
  EnvConfig c = env_->config();
  c.render = on;
  env_ = std::make_unique<Env>(track_, c);
}

std::string TeleopSession::hello() const {
  ojson j = message("hello");
  j["map"] = map_id_;
  j["map_text"] = track_->serialize();
  j["dt"] = env_->dt();
  j["horizon"] = cfg_.horizon;
  j["speedup"] = cfg_.speedup;
  j["keys"] = {"up", "down", "left", "right"};
  return j.dump();
}

void TeleopSession::start(std::uint64_t seed) {
  env_->reset(seed);
  keys_ = {};
  last_t_client_.reset();
  running_ = true;
  log_ = begin_log(*env_, "human", map_id_, cfg_.horizon);
}

std::vector<std::string> TeleopSession::handle(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error &e) {
    return {error_message(std::string("malformed message: ") + e.what())};
  }
  try {
    if (!j.is_object()) return {error_message("message must be an object")};
    if (!j.contains("v") || j["v"] != kTeleopProtocolVersion) {
      return {error_message("unsupported protocol version (expected v=" +
                            std::to_string(kTeleopProtocolVersion) + ")")};
    }
    const std::string type = j.value("type", "");
    if (type == "key_state") {
      if (const auto it = j.find("t_client"); it != j.end() && it->is_number()) {
        const double t = it->get<double>();
        if (last_t_client_ && t <= *last_t_client_) {
          ++stale_dropped_;
          return {};
        }
        last_t_client_ = t;
      }
      keys_ = {flag(j, "up"), flag(j, "down"), flag(j, "left"), flag(j, "right")};
      return {};
    }
    if (type == "start_episode") {
      std::vector<std::string> out;
      if (running_) out.push_back(finish(TerminationReason::Aborted));
      std::uint64_t seed = episode_counter_;
      if (const auto it = j.find("seed"); it != j.end() && !it->is_null()) {
        if (!it->is_number_unsigned()) return {error_message("seed must be a non-negative integer")};
        seed = it->get<std::uint64_t>();
      }
      ++episode_counter_;
      start(seed);
      ojson ack = message("episode_started");
      ack["seed"] = seed;
      ack["step"] = 0;
      out.push_back(ack.dump());
      return out;
    }
    if (type == "end_episode") {
      if (!running_) return {error_message("no episode is running")};
      return {finish(TerminationReason::Aborted)};
    }
    return {error_message("unknown message type '" + type + "'")};
  } catch (const Error &e) {
    return {error_message(e.what())};
  } catch (const json::exception &e) {
    return {error_message(e.what())};
  }
}

std::vector<std::string> TeleopSession::tick(double t_server) {
  if (!running_) return {};
  const KeyAction action = discrete_key_action(keys_);
  const auto raw = action.braking_raw();
  const StepResult r = env_->step(raw);
  append_record(*log_, *env_, r);

  ojson f = message("frame");
  f["step"] = env_->step_index();
  f["t_server"] = t_server;
  f["t_sim"] = env_->time();
  f["keys"] = {{"up", keys_.up}, {"down", keys_.down}, {"left", keys_.left}, {"right", keys_.right}};
  f["rates"] = {{"omega_l", r.info.rates.left}, {"omega_r", r.info.rates.right}};
  const LanePose &p = r.info.lane_pose;
  f["lane_pose"] = {{"d", p.d},
                    {"psi", p.psi},
                    {"s", p.s},
                    {"in_right_lane", p.in_right_lane},
                    {"on_road", p.on_road}};
  f["pose"] = {{"x", env_->ego().position.x},
               {"y", env_->ego().position.y},
               {"heading", env_->ego().heading}};
  f["reward"] = r.reward;
  f["metrics"] = metrics_json(compute_metrics(*log_, *track_));
  f["done"] = r.done;
  if (images_) {
    f["camera_png"] = base64_png(env_->last_frame());
    std::vector<VehicleState> vehicles{env_->ego()};
    if (env_->lead()) vehicles.push_back(*env_->lead());
    f["top_down_png"] = base64_png(Renderer::render_top_down(*track_, vehicles, kTopDownPixels));
  }
  std::vector<std::string> out{f.dump()};
  if (r.done) out.push_back(finish(r.info.termination_reason));
  return out;
}

std::string TeleopSession::finish(TerminationReason reason) {
  running_ = false;
  EpisodeLog log = std::move(*log_);
  log_.reset();
  log.termination_reason = reason;
  const MetricsReport m = compute_metrics(log, *track_);

  namespace fs = std::filesystem;
  std::string path;
  if (!cfg_.log_dir.empty()) {
    std::error_code ec;
    fs::create_directories(cfg_.log_dir, ec);
    const auto stamp = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
    path = (fs::path(cfg_.log_dir) /
            ("human_" + std::to_string(stamp) + "_seed" + std::to_string(log.seed) + ".jsonl"))
               .string();
    write_episode_logs(path, {log});
    log_paths_.push_back(path);
  }

  ojson s = message("episode_summary");
  s["step"] = env_->step_index();
  s["seed"] = log.seed;
  s["termination_reason"] = std::string(to_string(reason));
  s["metrics"] = metrics_json(m);
  s["log_path"] = path;
  s["stale_dropped"] = stale_dropped_;
  finished_.push_back(std::move(log));
  return s.dump();
}

void TeleopSession::disconnect() {
  if (running_) finish(TerminationReason::Aborted);
}

// ---------------------------------------------------------------------------------------------
// Transport

namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using Clock = std::chrono::steady_clock;

struct Server;

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, Server &server);
  void run();

 private:
  void on_accept(beast::error_code ec);
  void read();
  void on_read(beast::error_code ec, std::size_t);
  void schedule();
  void on_tick(beast::error_code ec);
  void send(std::string msg, bool droppable);
  void write_next();
  void close();

  websocket::stream<beast::tcp_stream> ws_;
  Server &server_;
  TeleopSession session_;
  asio::steady_timer timer_;
  beast::flat_buffer buffer_;
  std::deque<std::pair<std::string, bool>> queue_;
  bool writing_ = false;
  bool closed_ = false;
  Clock::time_point start_;
  Clock::time_point next_;
};

struct Server {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::shared_ptr<const TrackMap> track;
  EnvConfig env_config;
  TeleopConfig cfg;
  std::string map_id;
  const TeleopServeOptions &options;
  bool busy = false;
  int sessions = 0;

  explicit Server(const TeleopServeOptions &o) : options(o) {}

  void say(const std::string &s) const {
    if (options.log) options.log(s);
  }

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      if (busy) {
        reject(std::move(socket));
      } else {
        busy = true;
        std::make_shared<Connection>(std::move(socket), *this)->run();
      }
      accept();
    });
  }

  void reject(tcp::socket socket) {
    auto ws = std::make_shared<websocket::stream<beast::tcp_stream>>(std::move(socket));
    ws->async_accept([ws](beast::error_code ec) {
      if (ec) return;
      auto text = std::make_shared<std::string>(
          error_message("another client session is active; try again later"));
      ws->async_write(asio::buffer(*text), [ws, text](beast::error_code, std::size_t) {
        ws->async_close(websocket::close_code::try_again_later, [ws](beast::error_code) {});
      });
    });
  }

  void session_ended(const TeleopSession &s) {
    busy = false;
    ++sessions;
    if (options.episodes) {
      options.episodes->insert(options.episodes->end(), s.episodes().begin(), s.episodes().end());
    }
    say("session ended (" + std::to_string(s.episodes().size()) + " episodes)");
    if (options.max_sessions > 0 && sessions >= options.max_sessions) {
      beast::error_code ec;
      acceptor.close(ec);
      io.stop();
    }
  }
};

Connection::Connection(tcp::socket socket, Server &server)
    : ws_(std::move(socket)),
      server_(server),
      session_(server.track, server.env_config, server.cfg, server.map_id),
      timer_(ws_.get_executor()) {}

void Connection::run() {
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.async_accept(beast::bind_front_handler(&Connection::on_accept, shared_from_this()));
}

void Connection::on_accept(beast::error_code ec) {
  if (ec) {
    close();
    return;
  }
  ws_.text(true);
  server_.say("client connected");
  start_ = Clock::now();
  next_ = start_;
  send(session_.hello(), false);
  read();
  schedule();
}

void Connection::read() {
  ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_read, shared_from_this()));
}

void Connection::on_read(beast::error_code ec, std::size_t) {
  if (ec) {
    close();
    return;
  }
  const std::string text = beast::buffers_to_string(buffer_.data());
  buffer_.consume(buffer_.size());
  for (auto &reply : session_.handle(text)) send(std::move(reply), false);
  read();
}

void Connection::schedule() {
  const auto period = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(session_.period()));
  next_ += period;
  const auto now = Clock::now();
  if (next_ < now - period) next_ = now;  // fell behind; do not burst to catch up
  timer_.expires_at(next_);
  timer_.async_wait(beast::bind_front_handler(&Connection::on_tick, shared_from_this()));
}

void Connection::on_tick(beast::error_code ec) {
  if (ec || closed_) return;
  const double t = std::chrono::duration<double>(Clock::now() - start_).count();
  try {
    auto out = session_.tick(t);
    for (std::size_t i = 0; i < out.size(); ++i) send(std::move(out[i]), i == 0);
  } catch (const std::exception &e) {
    send(error_message(e.what()), false);
  }
  schedule();
}

void Connection::send(std::string msg, bool droppable) {
  if (closed_) return;
  // A frame still waiting behind another frame is stale; replace rather than queue.
  if (droppable && queue_.size() > 1 && queue_.back().second) {
    queue_.back().first = std::move(msg);
    return;
  }
  queue_.emplace_back(std::move(msg), droppable);
  if (!writing_) write_next();
}

void Connection::write_next() {
  if (queue_.empty() || closed_) {
    writing_ = false;
    return;
  }
  writing_ = true;
  ws_.async_write(asio::buffer(queue_.front().first),
                  [self = shared_from_this()](beast::error_code ec, std::size_t) {
                    self->queue_.pop_front();
                    if (ec) {
                      self->close();
                      return;
                    }
                    self->write_next();
                  });
}

void Connection::close() {
  if (closed_) return;
  closed_ = true;
  timer_.cancel();
  if (session_.running()) server_.say("client disconnected mid-episode; episode aborted");
  try {
    session_.disconnect();
  } catch (const std::exception &e) {
    server_.say(std::string("failed to record aborted episode: ") + e.what());
  }
  beast::error_code ignored;
  beast::get_lowest_layer(ws_).socket().close(ignored);
  server_.session_ended(session_);
}

}  // namespace

void serve(std::shared_ptr<const TrackMap> track, const EnvConfig &env_config,
           const TeleopConfig &cfg, const std::string &map_id, const TeleopServeOptions &options) {
  cfg.validate();
  Server server(options);
  server.track = std::move(track);
  server.env_config = env_config;
  server.cfg = cfg;
  server.map_id = map_id;
  // Fail early on a bad environment configuration rather than at first connection.
  TeleopSession probe(server.track, env_config, cfg, map_id);

  beast::error_code ec;
  const tcp::endpoint endpoint(asio::ip::make_address("0.0.0.0"),
                               static_cast<unsigned short>(cfg.port));
  server.acceptor.open(endpoint.protocol(), ec);
  if (!ec) server.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) server.acceptor.bind(endpoint, ec);
  if (!ec) server.acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw IoError("cannot listen on port " + std::to_string(cfg.port) + ": " + ec.message());
  const unsigned short port = server.acceptor.local_endpoint().port();
  server.say("teleop service listening on port " + std::to_string(port));
  if (options.on_listening) options.on_listening(port);
  server.accept();
  server.io.run();
}

}  // namespace lanerl
