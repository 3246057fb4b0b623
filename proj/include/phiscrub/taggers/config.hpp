#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "phiscrub/error.hpp"
#include "phiscrub/numerics/optim.hpp"

namespace phiscrub::taggers {

using num::OptimizerKind;

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "nadam") return OptimizerKind::kNadam;
  throw InvalidArgument("unknown optimizer '" + s + "' (expected adam or nadam)");
}

struct BiLstmConfig {
  std::size_t word_dim = 300;
  std::size_t char_dim = 95;
  std::size_t char_filters = 32;
  std::size_t char_width = 3;
  std::size_t shape_dim = 8;
  std::size_t hidden = 200;  // per direction
  std::size_t layers = 2;
  double learning_rate = 0.001;
  OptimizerKind optimizer = OptimizerKind::kNadam;
  std::size_t epochs = 65;
  double forget_bias = 1.0;
  double dropout = 0.0;

  std::size_t representation_dim() const { return word_dim + char_filters + shape_dim; }

  void validate() const {
    if (!word_dim || !char_dim || !char_filters || !char_width || !shape_dim || !hidden || !layers || !epochs) {
      throw InvalidArgument("bilstm config: sizes must be positive");
    }
    if (char_width % 2 == 0) throw InvalidArgument("bilstm config: char_width must be odd");
    if (!(learning_rate > 0.0)) throw InvalidArgument("bilstm config: learning rate must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("bilstm config: dropout must be in [0, 1)");
  }
};

struct IdCnnConfig {
  std::size_t word_dim = 100;
  std::size_t shape_dim = 8;
  std::size_t layers = 3;
  std::vector<std::size_t> dilations{1, 2, 1};
  std::size_t width = 3;
  std::size_t filters = 400;
  std::size_t blocks = 1;
  std::size_t block_iterations = 2;
  double learning_rate = 0.0001;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::size_t epochs = 100;
  double dropout = 0.0;

  std::size_t representation_dim() const { return word_dim + shape_dim; }

  void validate() const {
    if (!word_dim || !shape_dim || !layers || !width || !filters || !blocks || !block_iterations || !epochs) {
      throw InvalidArgument("idcnn config: sizes must be positive");
    }
    if (dilations.size() != layers) throw InvalidArgument("idcnn config: need one dilation per layer");
    for (auto d : dilations) {
      if (d == 0) throw InvalidArgument("idcnn config: dilation must be positive");
    }
    if (width % 2 == 0) throw InvalidArgument("idcnn config: width must be odd");
    if (!(learning_rate > 0.0)) throw InvalidArgument("idcnn config: learning rate must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("idcnn config: dropout must be in [0, 1)");
  }
};

inline void to_json(nlohmann::json& j, const BiLstmConfig& c) {
  j = {{"word_dim", c.word_dim},         {"char_dim", c.char_dim},
       {"char_filters", c.char_filters}, {"char_width", c.char_width},
       {"shape_dim", c.shape_dim},       {"hidden", c.hidden},
       {"layers", c.layers},             {"learning_rate", c.learning_rate},
       {"optimizer", std::string(num::to_string(c.optimizer))},
       {"epochs", c.epochs},             {"forget_bias", c.forget_bias},
       {"dropout", c.dropout}};
}

inline void from_json(const nlohmann::json& j, BiLstmConfig& c) {
  c.word_dim = j.at("word_dim");
  c.char_dim = j.at("char_dim");
  c.char_filters = j.at("char_filters");
  c.char_width = j.at("char_width");
  c.shape_dim = j.at("shape_dim");
  c.hidden = j.at("hidden");
  c.layers = j.at("layers");
  c.learning_rate = j.at("learning_rate");
  c.optimizer = parse_optimizer(j.at("optimizer"));
  c.epochs = j.at("epochs");
  c.forget_bias = j.value("forget_bias", 1.0);
  c.dropout = j.value("dropout", 0.0);
}

inline void to_json(nlohmann::json& j, const IdCnnConfig& c) {
  j = {{"word_dim", c.word_dim},
       {"shape_dim", c.shape_dim},
       {"layers", c.layers},
       {"dilations", c.dilations},
       {"width", c.width},
       {"filters", c.filters},
       {"blocks", c.blocks},
       {"block_iterations", c.block_iterations},
       {"learning_rate", c.learning_rate},
       {"optimizer", std::string(num::to_string(c.optimizer))},
       {"epochs", c.epochs},
       {"dropout", c.dropout}};
}

inline void from_json(const nlohmann::json& j, IdCnnConfig& c) {
  c.word_dim = j.at("word_dim");
  c.shape_dim = j.at("shape_dim");
  c.layers = j.at("layers");
  c.dilations = j.at("dilations").get<std::vector<std::size_t>>();
  c.width = j.at("width");
  c.filters = j.at("filters");
  c.blocks = j.at("blocks");
  c.block_iterations = j.at("block_iterations");
  c.learning_rate = j.at("learning_rate");
  c.optimizer = parse_optimizer(j.at("optimizer"));
  c.epochs = j.at("epochs");
  c.dropout = j.value("dropout", 0.0);
}

}  // namespace phiscrub::taggers
