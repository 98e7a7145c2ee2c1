#pragma once

// Text checkpoint format (one token stream, whitespace separated):
//
//   unilite-checkpoint 1
//   version <u64>
//   model <name>
//     arch <input_dim> <n_hidden> <h_1> ... <h_n> <output_dim>
//     layer <rows> <cols> <rows*cols weights, row-major> <rows biases>
//     ... (one layer line per weight matrix)
//     log_std <n> <n values>
//   end
//   normalizer <name> <dim> <count> <frozen 0|1> <dim means> <dim vars>
//   eof
//
// Values are printed with max_digits10 so a save/load round trip is exact.

#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "unilite/net/mlp.hpp"
#include "unilite/net/normalizer.hpp"

namespace unilite::net {

template <class T>
struct Checkpoint {
  std::uint64_t version = 0;
  std::map<std::string, ModelParams<T>> models;
  std::map<std::string, Normalizer> normalizers;
};

namespace detail {

template <class T>
void write_values(std::ostream& os, const T* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) os << ' ' << data[i];
}

inline void expect(std::istream& is, const std::string& token) {
  std::string got;
  if (!(is >> got) || got != token) {
    throw std::runtime_error("checkpoint: expected '" + token + "', got '" +
                             got + "'");
  }
}

template <class V>
V read_value(std::istream& is) {
  V v{};
  if (!(is >> v)) throw std::runtime_error("checkpoint: truncated value");
  return v;
}

}  // namespace detail

template <class T>
std::string serialize_checkpoint(const Checkpoint<T>& ck) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << "unilite-checkpoint 1\nversion " << ck.version << "\n";
  for (const auto& [name, p] : ck.models) {
    os << "model " << name << "\n  arch " << p.arch.input_dim << ' '
       << p.arch.hidden_dims.size();
    for (int h : p.arch.hidden_dims) os << ' ' << h;
    os << ' ' << p.arch.output_dim << "\n";
    for (const auto& l : p.layers) {
      os << "  layer " << l.weight.rows() << ' ' << l.weight.cols();
      detail::write_values(os, l.weight.data(), l.weight.size());
      detail::write_values(os, l.bias.data(), l.bias.size());
      os << "\n";
    }
    os << "  log_std " << p.log_std.size();
    detail::write_values(os, p.log_std.data(), p.log_std.size());
    os << "\nend\n";
  }
  for (const auto& [name, n] : ck.normalizers) {
    os << "normalizer " << name << ' ' << n.dim() << ' ' << n.count << ' '
       << (n.frozen ? 1 : 0);
    detail::write_values(os, n.mean.data(), n.mean.size());
    detail::write_values(os, n.var.data(), n.var.size());
    os << "\n";
  }
  os << "eof\n";
  return os.str();
}

template <class T>
Checkpoint<T> parse_checkpoint(std::istream& is) {
  Checkpoint<T> ck;
  detail::expect(is, "unilite-checkpoint");
  if (detail::read_value<int>(is) != 1) {
    throw std::runtime_error("checkpoint: unsupported format version");
  }
  detail::expect(is, "version");
  ck.version = detail::read_value<std::uint64_t>(is);
  std::string tok;
  while (is >> tok) {
    if (tok == "eof") return ck;
    if (tok == "model") {
      const auto name = detail::read_value<std::string>(is);
      ModelParams<T> p;
      detail::expect(is, "arch");
      p.arch.input_dim = detail::read_value<int>(is);
      const auto nh = detail::read_value<std::size_t>(is);
      for (std::size_t i = 0; i < nh; ++i) {
        p.arch.hidden_dims.push_back(detail::read_value<int>(is));
      }
      p.arch.output_dim = detail::read_value<int>(is);
      p.arch.validate();
      for (const auto& [rows, cols] : p.arch.weight_shapes()) {
        detail::expect(is, "layer");
        if (detail::read_value<int>(is) != rows ||
            detail::read_value<int>(is) != cols) {
          throw std::runtime_error("checkpoint: layer shape mismatch");
        }
        Layer<T> l{Mat<T>(rows, cols), Vec<T>(rows)};
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) {
          l.weight.data()[i] = detail::read_value<T>(is);
        }
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
          l.bias(i) = detail::read_value<T>(is);
        }
        p.layers.push_back(std::move(l));
      }
      detail::expect(is, "log_std");
      p.log_std.resize(detail::read_value<Eigen::Index>(is));
      for (Eigen::Index i = 0; i < p.log_std.size(); ++i) {
        p.log_std(i) = detail::read_value<T>(is);
      }
      detail::expect(is, "end");
      p.version = ck.version;
      ck.models.emplace(name, std::move(p));
    } else if (tok == "normalizer") {
      const auto name = detail::read_value<std::string>(is);
      const auto dim = detail::read_value<Eigen::Index>(is);
      Normalizer n(dim);
      n.count = detail::read_value<double>(is);
      n.frozen = detail::read_value<int>(is) != 0;
      for (Eigen::Index i = 0; i < dim; ++i) n.mean(i) = detail::read_value<double>(is);
      for (Eigen::Index i = 0; i < dim; ++i) n.var(i) = detail::read_value<double>(is);
      ck.normalizers.emplace(name, std::move(n));
    } else {
      throw std::runtime_error("checkpoint: unexpected token '" + tok + "'");
    }
  }
  throw std::runtime_error("checkpoint: missing eof marker");
}

template <class T>
void save_checkpoint(const Checkpoint<T>& ck, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path.string());
  os << serialize_checkpoint(ck);
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint: " + path.string());
  return parse_checkpoint<T>(is);
}

}  // namespace unilite::net
