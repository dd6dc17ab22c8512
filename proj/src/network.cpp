#include "actmon/network.hpp"

#include <random>

#include "actmon/io.hpp"
#include "json_codec.hpp"

namespace actmon {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::LeakyRelu: return "leaky_relu";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "dense") return LayerKind::Dense;
  if (name == "conv2d") return LayerKind::Conv2d;
  if (name == "batchnorm") return LayerKind::BatchNorm;
  if (name == "leaky_relu") return LayerKind::LeakyRelu;
  throw InvalidArgument("unknown layer kind '" + std::string(name) + "'");
}

Network<double> init_network(const Architecture& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const auto fill = [&](auto& m, double r) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(-r, r);
  };

  if (arch.input_shape.size() <= 0) throw ValidationError("architecture input shape is empty");
  std::vector<Layer<double>> layers;
  Shape shape = arch.input_shape;
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const auto& desc = arch.layers[l];
    switch (desc.kind) {
      case LayerKind::Dense: {
        if (desc.units <= 0) {
          throw ValidationError("layer " + std::to_string(l) + ": dense needs units > 0");
        }
        const double r = 1.0 / std::sqrt(static_cast<double>(shape.size()));
        DenseLayer<double> d{MatrixXd(desc.units, shape.size()), VectorXd(desc.units)};
        fill(d.weights, r);
        fill(d.bias, r);
        shape = Shape{desc.units, 1};
        layers.emplace_back(std::move(d));
        break;
      }
      case LayerKind::Conv2d: {
        const auto& k = desc.kernel;
        if (k.rows < 1 || k.cols < 1 || k.rows > shape.rows || k.cols > shape.cols) {
          throw ValidationError("layer " + std::to_string(l) + ": conv2d kernel does not fit");
        }
        const double r = 1.0 / std::sqrt(static_cast<double>(k.size()));
        Conv2dLayer<double> c{MatrixXd(k.rows, k.cols), 0.0};
        fill(c.filter, r);
        c.bias = uniform(-r, r);
        shape = Shape{shape.rows - k.rows + 1, shape.cols - k.cols + 1};
        layers.emplace_back(std::move(c));
        break;
      }
      case LayerKind::BatchNorm: {
        const Index n = shape.size();
        BatchNormLayer<double> b{VectorXd(n), VectorXd(n), VectorXd::Zero(n), VectorXd::Ones(n),
                                 1e-5};
        for (Index i = 0; i < n; ++i) b.gamma[i] = uniform(0.5, 1.5);
        for (Index i = 0; i < n; ++i) b.beta[i] = uniform(-0.1, 0.1);
        layers.emplace_back(std::move(b));
        break;
      }
      case LayerKind::LeakyRelu:
        layers.emplace_back(LeakyReluLayer{});
        break;
    }
  }
  return Network<double>(arch.input_shape, std::move(layers));
}

void estimate_batchnorm_statistics(Network<double>& net, std::span<const VectorXd> inputs) {
  if (inputs.empty()) throw InvalidArgument("batchnorm statistics need at least one input");
  std::vector<VectorXd> h(inputs.begin(), inputs.end());
  for (const auto& x : h) detail::check_input(net, x);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    auto& layer = net.mutable_layer(l);
    if (auto* bn = std::get_if<BatchNormLayer<double>>(&layer)) {
      VectorXd mean = VectorXd::Zero(bn->gamma.size());
      for (const auto& x : h) mean += x;
      mean /= static_cast<double>(h.size());
      VectorXd var = VectorXd::Zero(mean.size());
      for (const auto& x : h) var += (x - mean).cwiseAbs2();
      var /= static_cast<double>(h.size());
      bn->running_mean = std::move(mean);
      bn->running_var = std::move(var);
    }
    for (auto& x : h) {
      x = std::visit([&](const auto& lay) { return detail::apply(lay, x, net.shapes()[l]); },
                     layer);
    }
  }
}

namespace json_codec {

json vector_to_json(const Eigen::Ref<const VectorXd>& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

VectorXd vector_from(const json& j, const char* what) {
  if (!j.is_array()) throw ValidationError(std::string(what) + " must be a numeric array");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(std::string(what) + " must be a numeric array");
    v[static_cast<Index>(i)] = j[i].get<double>();
  }
  return v;
}

namespace {

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) rows.push_back(vector_to_json(m.row(r).transpose()));
  return rows;
}

MatrixXd matrix_from(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw ValidationError(std::string(what) + " must be a non-empty array of rows");
  }
  MatrixXd m(static_cast<Index>(j.size()), static_cast<Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const auto row = vector_from(j[r], what);
    if (row.size() != m.cols()) throw ValidationError(std::string(what) + " rows differ in length");
    m.row(static_cast<Index>(r)) = row.transpose();
  }
  return m;
}

json shape_to_json(const Shape& s) { return json::array({s.rows, s.cols}); }

Shape shape_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw ValidationError(std::string(what) + " must be [rows, cols]");
  }
  return Shape{j[0].get<Index>(), j[1].get<Index>()};
}

}  // namespace

json parse(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(ParseError::Kind::Syntax, e.byte,
                     std::string("malformed ") + what + ": " + e.what());
  }
}

json to_json(const Network<double>& net) {
  json layers = json::array();
  for (const auto& layer : net.layers()) {
    json entry{{"kind", to_string(kind_of(layer))}};
    std::visit(
        [&](const auto& lay) {
          using T = std::decay_t<decltype(lay)>;
          if constexpr (std::is_same_v<T, DenseLayer<double>>) {
            entry["weights"] = matrix_to_json(lay.weights);
            entry["bias"] = vector_to_json(lay.bias);
          } else if constexpr (std::is_same_v<T, Conv2dLayer<double>>) {
            entry["filter"] = matrix_to_json(lay.filter);
            entry["bias"] = lay.bias;
          } else if constexpr (std::is_same_v<T, BatchNormLayer<double>>) {
            entry["gamma"] = vector_to_json(lay.gamma);
            entry["beta"] = vector_to_json(lay.beta);
            entry["running_mean"] = vector_to_json(lay.running_mean);
            entry["running_var"] = vector_to_json(lay.running_var);
            entry["epsilon"] = lay.epsilon;
          }
        },
        layer);
    layers.push_back(std::move(entry));
  }
  return json{{"input_shape", shape_to_json(net.input_shape())}, {"layers", std::move(layers)}};
}

Network<double> network_from(const json& j) {
  try {
    std::vector<Layer<double>> layers;
    for (const auto& entry : j.at("layers")) {
      switch (parse_layer_kind(entry.at("kind").get<std::string>())) {
        case LayerKind::Dense:
          layers.emplace_back(DenseLayer<double>{matrix_from(entry.at("weights"), "weights"),
                                                 vector_from(entry.at("bias"), "bias")});
          break;
        case LayerKind::Conv2d:
          layers.emplace_back(Conv2dLayer<double>{matrix_from(entry.at("filter"), "filter"),
                                                  entry.value("bias", 0.0)});
          break;
        case LayerKind::BatchNorm:
          layers.emplace_back(BatchNormLayer<double>{
              vector_from(entry.at("gamma"), "gamma"), vector_from(entry.at("beta"), "beta"),
              vector_from(entry.at("running_mean"), "running_mean"),
              vector_from(entry.at("running_var"), "running_var"),
              entry.at("epsilon").get<double>()});
          break;
        case LayerKind::LeakyRelu:
          layers.emplace_back(LeakyReluLayer{});
          break;
      }
    }
    return Network<double>(shape_from(j.at("input_shape"), "input_shape"), std::move(layers));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid network description: ") + e.what());
  }
}

json to_json(const Architecture& arch) {
  json layers = json::array();
  for (const auto& d : arch.layers) {
    json entry{{"kind", to_string(d.kind)}};
    if (d.kind == LayerKind::Dense) entry["units"] = d.units;
    if (d.kind == LayerKind::Conv2d) entry["kernel"] = shape_to_json(d.kernel);
    layers.push_back(std::move(entry));
  }
  return json{{"input_shape", shape_to_json(arch.input_shape)}, {"layers", std::move(layers)}};
}

Architecture architecture_from(const json& j) {
  try {
    Architecture arch{shape_from(j.at("input_shape"), "input_shape"), {}};
    for (const auto& entry : j.at("layers")) {
      LayerDescriptor d;
      d.kind = parse_layer_kind(entry.at("kind").get<std::string>());
      if (d.kind == LayerKind::Dense) d.units = entry.at("units").get<Index>();
      if (d.kind == LayerKind::Conv2d) d.kernel = shape_from(entry.at("kernel"), "kernel");
      arch.layers.push_back(d);
    }
    return arch;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid architecture: ") + e.what());
  }
}

}  // namespace json_codec

std::string network_to_json(const Network<double>& net) {
  return json_codec::to_json(net).dump();
}

Network<double> network_from_json(std::string_view text) {
  return json_codec::network_from(json_codec::parse(text, "network"));
}

Network<double> load_network(const std::filesystem::path& path) {
  return network_from_json(read_file(path));
}

void save_network(const Network<double>& net, const std::filesystem::path& path) {
  write_file_atomic(path, network_to_json(net));
}

Architecture architecture_from_json(std::string_view text) {
  return json_codec::architecture_from(json_codec::parse(text, "architecture"));
}

std::string architecture_to_json(const Architecture& arch) {
  return json_codec::to_json(arch).dump();
}

}  // namespace actmon
