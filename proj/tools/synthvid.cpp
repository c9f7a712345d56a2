// synthvid: render a synthetic camera-motion clip as Y4M.
//
//   synthvid --motion pan --vx 3 --frames 120 -o clip.y4m
//   synthvid --uri 'synth://rotate?rot=0.01&frames=90'        (Y4M on stdout)
//
// The --uri form lets the curation pipeline use synthvid as its decoder
// command: decoder.command = "synthvid --uri {src}".

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "clipcurate/synth.hpp"

using clipcurate::synth::Scene;

namespace {

void apply_uri(const std::string& uri, Scene& s) {
  const std::string prefix = "synth://";
  if (uri.rfind(prefix, 0) != 0) throw std::runtime_error("uri must start with synth://");
  std::string rest = uri.substr(prefix.size());
  std::string query;
  if (auto q = rest.find('?'); q != std::string::npos) {
    query = rest.substr(q + 1);
    rest = rest.substr(0, q);
  }
  s.motion = clipcurate::synth::motion_from_string(rest);
  std::map<std::string, std::string> kv;
  std::istringstream in(query);
  for (std::string item; std::getline(in, item, '&');) {
    auto eq = item.find('=');
    if (eq == std::string::npos) continue;
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  for (const auto& [k, v] : kv) {
    if (k == "width") s.width = std::stoi(v);
    else if (k == "height") s.height = std::stoi(v);
    else if (k == "frames") s.frames = std::stoi(v);
    else if (k == "fps") s.fps = {std::stoll(v), 1};
    else if (k == "seed") s.seed = std::stoull(v);
    else if (k == "vx") s.velocity.u = std::stod(v);
    else if (k == "vy") s.velocity.v = std::stod(v);
    else if (k == "amp") s.amplitude = std::stod(v);
    else if (k == "period") s.period = std::stod(v);
    else if (k == "rot") s.rot_rate = std::stod(v);
    else if (k == "zoom") s.zoom_rate = std::stod(v);
    else if (k == "event") s.event_frame = std::stoi(v);
    else if (k == "fade") s.fade_len = std::stoi(v);
    else if (k == "noise") s.noise_sigma = std::stod(v);
    else if (k == "brightness_b") s.brightness_b = std::stod(v);
    else throw std::runtime_error("unknown synth parameter '" + k + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Render synthetic camera-motion clips as Y4M"};
  Scene s;
  std::string motion = "pan", uri, output = "-";
  int fps = 30;
  app.add_option("--uri", uri, "synth://<motion>?key=value&... (overrides other flags)");
  app.add_option("--motion", motion, "static|pan|oscillate|rotate|zoom|track|parallax|crossfade|hardcut");
  app.add_option("--width", s.width);
  app.add_option("--height", s.height);
  app.add_option("--frames", s.frames);
  app.add_option("--fps", fps);
  app.add_option("--seed", s.seed);
  app.add_option("--vx", s.velocity.u, "content displacement per frame, x");
  app.add_option("--vy", s.velocity.v, "content displacement per frame, y");
  app.add_option("--amp", s.amplitude);
  app.add_option("--period", s.period);
  app.add_option("--rot", s.rot_rate);
  app.add_option("--zoom", s.zoom_rate);
  app.add_option("--event", s.event_frame);
  app.add_option("--fade", s.fade_len);
  app.add_option("--noise", s.noise_sigma);
  app.add_option("--brightness-b", s.brightness_b);
  app.add_option("-o,--output", output, "output file, '-' for stdout");
  CLI11_PARSE(app, argc, argv);

  try {
    s.fps = {fps, 1};
    if (!uri.empty()) apply_uri(uri, s);
    else s.motion = clipcurate::synth::motion_from_string(motion);
    if (output == "-") {
      std::ios::sync_with_stdio(false);
      clipcurate::synth::write_y4m(std::cout, s);
      std::cout.flush();
      return std::cout ? 0 : 1;
    }
    std::ofstream out(output, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + output);
    clipcurate::synth::write_y4m(out, s);
    return out ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "synthvid: " << e.what() << '\n';
    return 2;
  }
}
