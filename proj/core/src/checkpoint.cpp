#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "claimsrisk/seqmodel.hpp"

namespace claimsrisk {

namespace {

constexpr std::string_view kMagic = "claimsrisk-checkpoint";
constexpr int kVersion = 1;

std::string hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') throw Error("checkpoint: bad number '" + token + "'");
  return v;
}

template <class Block>
void write_block(std::ostream& out, std::string_view name, const Block& m) {
  out << "block " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << hex(m(i, j));
    }
    out << '\n';
  }
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params) {
  const auto& h = params.hyper;
  out << kMagic << ' ' << kVersion << '\n';
  out << "kind " << kind_name(h.kind) << '\n';
  out << "vocab_size " << h.vocab_size << '\n';
  out << "embed_dim " << h.embed_dim << '\n';
  out << "hidden " << h.hidden << '\n';
  out << "attn_dim " << h.attn_dim << '\n';
  out << "hops " << h.hops << '\n';
  out << "fc_hidden " << h.fc_hidden << '\n';
  out << "penalty " << hex(h.penalty) << '\n';
  params.for_each_block([&](std::string_view name, const auto& m) { write_block(out, name, m); });
  out << "end\n";
  if (!out) throw Error("checkpoint: write failed");
}

ModelParams load_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) throw Error("checkpoint: missing header");
  if (version != kVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));

  std::map<std::string, std::string> fields;
  std::string key;
  while (in >> key && key != "block") {
    std::string value;
    if (!(in >> value)) throw Error("checkpoint: truncated header at '" + key + "'");
    fields[key] = value;
  }
  const auto get = [&](const char* name) -> const std::string& {
    const auto it = fields.find(name);
    if (it == fields.end()) throw Error(std::string("checkpoint: missing field ") + name);
    return it->second;
  };
  ModelHyper h;
  h.kind = parse_kind(get("kind"));
  h.vocab_size = std::stoi(get("vocab_size"));
  h.embed_dim = std::stoi(get("embed_dim"));
  h.hidden = std::stoi(get("hidden"));
  h.attn_dim = std::stoi(get("attn_dim"));
  h.hops = std::stoi(get("hops"));
  h.fc_hidden = std::stoi(get("fc_hidden"));
  h.penalty = parse_hex(get("penalty"));

  ModelParams params = ModelParams::zeros(h);
  std::string token;
  bool first = true;
  params.for_each_block([&](std::string_view name, auto& m) {
    if (!first && !(in >> key && key == "block")) throw Error("checkpoint: expected block header");
    first = false;
    std::string got;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> got >> rows >> cols) || got != name || rows != m.rows() || cols != m.cols()) {
      throw Error("checkpoint: block '" + got + "' does not match expected '" + std::string(name) +
                  "' " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (!(in >> token)) throw Error("checkpoint: truncated block " + got);
        m(i, j) = parse_hex(token);
      }
    }
  });
  if (!(in >> key) || key != "end") throw Error("checkpoint: missing end marker");
  return params;
}

void save_checkpoint_file(const std::string& path, const ModelParams& params) {
  std::ofstream out(path);
  if (!out) throw Error("checkpoint: cannot write '" + path + "'");
  save_checkpoint(out, params);
}

ModelParams load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("checkpoint: cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace claimsrisk
