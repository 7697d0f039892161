#include "seqstate/encoders/serialize.hpp"

#include "seqstate/io.hpp"
#include "seqstate/numcore/bundle.hpp"

namespace seqstate::encoders {

using json = nlohmann::json;

namespace {

const char* method_name(seqmath::OdeMethod m) { return m == seqmath::OdeMethod::kRk4Fixed ? "rk4" : "dopri5"; }

seqmath::OdeMethod parse_method(const std::string& s) {
  if (s == "rk4" || s == "rk4_fixed") return seqmath::OdeMethod::kRk4Fixed;
  if (s == "dopri5") return seqmath::OdeMethod::kDopri5;
  throw ContractError("unknown ODE method '" + s + "'");
}

}  // namespace

json spec_to_json(const EncoderSpec& s) {
  return json{{"kind", kind_name(s.kind)},
              {"d_s", s.latent_dim},
              {"mode", mode_name(s.mode)},
              {"seed", s.seed},
              {"ode_rtol", s.ode_rtol},
              {"ode_atol", s.ode_atol},
              {"cde_method", method_name(s.cde_method)},
              {"cde_substeps", s.cde_substeps}};
}

EncoderSpec spec_from_json(const json& j) {
  EncoderSpec s;
  s.kind = parse_kind(j.at("kind").get<std::string>());
  s.latent_dim = j.at("d_s").get<Index>();
  s.mode = parse_mode(j.at("mode").get<std::string>());
  s.seed = j.value("seed", std::uint64_t{0});
  s.ode_rtol = j.value("ode_rtol", s.ode_rtol);
  s.ode_atol = j.value("ode_atol", s.ode_atol);
  if (j.contains("cde_method")) s.cde_method = parse_method(j.at("cde_method").get<std::string>());
  s.cde_substeps = j.value("cde_substeps", s.cde_substeps);
  return s;
}

json config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},       {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
              {"seed", c.seed},           {"lambda", c.lambda},               {"regularize", c.regularize},
              {"clip_norm", c.clip_norm}, {"inverse_weight", c.inverse_weight}, {"keep_best", c.keep_best}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.lambda = j.value("lambda", c.lambda);
  c.regularize = j.value("regularize", c.regularize);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.inverse_weight = j.value("inverse_weight", c.inverse_weight);
  c.keep_best = j.value("keep_best", c.keep_best);
  return c;
}

void save_encoder(const EncoderModel& model, const std::filesystem::path& dir, const json& extra) {
  std::filesystem::create_directories(dir);
  const numcore::Bundle bundle = numcore::bundle_from_params(model.arch_tag(), model.params());
  const std::string bytes = numcore::encode_bundle(bundle);
  write_file_atomic(dir / "encoder.bundle", bytes);
  json manifest = json::object();
  if (extra.is_object()) manifest.update(extra);
  manifest["format"] = "seqstate-encoder";
  manifest["version"] = 1;
  manifest["arch_tag"] = model.arch_tag();
  manifest["spec"] = spec_to_json(model.spec());
  manifest["parameter_count"] = model.parameter_count();
  manifest["bundle_fnv1a"] = fnv1a_hex(bytes);
  write_file_atomic(dir / "encoder.json", manifest.dump(2) + "\n");
}

LoadedEncoder load_encoder(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "encoder.json";
  const auto bundle_path = dir / "encoder.bundle";
  if (!std::filesystem::exists(manifest_path) || !std::filesystem::exists(bundle_path)) {
    throw DataError("no encoder found in " + dir.string());
  }
  LoadedEncoder out;
  try {
    out.manifest = json::parse(read_file(manifest_path));
    const std::string bytes = read_file(bundle_path);
    if (out.manifest.contains("bundle_fnv1a") && out.manifest["bundle_fnv1a"].get<std::string>() != fnv1a_hex(bytes)) {
      throw DataError("encoder bundle does not match its manifest digest");
    }
    out.model = build_encoder(spec_from_json(out.manifest.at("spec")));
    const numcore::Bundle bundle = numcore::decode_bundle(bytes);
    if (bundle.arch_tag != out.model->arch_tag()) {
      throw DataError("bundle tag '" + bundle.arch_tag + "' does not match manifest '" + out.model->arch_tag() + "'");
    }
    numcore::load_params(bundle, out.model->params());
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed encoder manifest: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("encoder bundle mismatch: ") + e.what());
  }
  return out;
}

}  // namespace seqstate::encoders
