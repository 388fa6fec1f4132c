// Scriptable stand-in for an external model process.
//
//   fake_backend oracle <classes> <w> <h>   mean-brightness oracle for class 0
//   fake_backend replay <transcript>        replays a recorded exchange
//   fake_backend <fault> <classes> <w> <h>  fault in {die, garbage, error, wrong-id, short, bad-probs}
//   fake_backend no-hello

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "facexai/classifier.hpp"
#include "facexai/wire.hpp"

using namespace fxai;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

void send(const std::string& line) { std::cout << line << '\n' << std::flush; }

int replay(const char* path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "cannot open transcript " << path << '\n';
    return 2;
  }
  std::string line, request;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::string tag = line.substr(0, 3);
    const std::string body = line.substr(3);
    if (tag == "B> ") {
      send(body);
    } else if (tag == "H> ") {
      if (!std::getline(std::cin, request)) return 0;
      if (request != body) {
        std::cerr << "transcript mismatch\nexpected: " << body << "\nreceived: " << request << '\n';
        return 4;
      }
    }
  }
  // Drain until the host closes the stream.
  while (std::getline(std::cin, request)) {
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "oracle";
  if (mode == "replay" && argc > 2) return replay(argv[2]);
  if (mode == "no-hello") return 0;

  const ClassList classes(split(argc > 2 ? argv[2] : "angry,happy,sad", ','));
  const InputSize size{argc > 3 ? std::atoi(argv[3]) : 8, argc > 4 ? std::atoi(argv[4]) : 8};
  OracleClassifier oracle({.kind = OracleKind::kMeanBrightness, .size = size}, classes);
  send(wire::encode_hello(classes, size));

  std::string line;
  while (std::getline(std::cin, line)) {
    const auto j = wire::parse_line(line);
    const auto id = j.at("id").get<std::uint64_t>();
    if (mode == "die") return 3;
    if (mode == "garbage") {
      send("this is not json");
      continue;
    }
    if (mode == "error") {
      send(wire::encode_error(id, "model exploded"));
      continue;
    }
    std::vector<Image> images;
    for (const auto& im : j.at("images")) images.push_back(wire::image_from_json(im));
    auto rows = oracle.predict(images);
    if (mode == "short" && !rows.empty()) rows.pop_back();
    if (mode == "bad-probs") {
      for (auto& r : rows) r.probs.assign(classes.size(), 0.9);
    }
    send(wire::encode_probs(mode == "wrong-id" ? id + 1 : id, rows));
  }
  return 0;
}
