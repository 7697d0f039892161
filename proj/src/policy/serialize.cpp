#include "seqstate/policy/serialize.hpp"

#include "seqstate/io.hpp"
#include "seqstate/numcore/bundle.hpp"

namespace seqstate::policy {

using json = nlohmann::json;

namespace {

std::string arch_tag(Index d, Index hidden, Index behavior_hidden) {
  return "policy/d" + std::to_string(d) + "/h" + std::to_string(hidden) + "/bc" + std::to_string(behavior_hidden);
}

ParamList all_params(const QPolicy& policy, const BcPolicy& behavior) {
  ParamList out = policy.params();
  out.insert(out.end(), behavior.params().begin(), behavior.params().end());
  return out;
}

}  // namespace

void save_policy(const QPolicy& policy, const BcPolicy& behavior, const std::filesystem::path& dir, const json& extra) {
  if (policy.latent_dim() != behavior.latent_dim()) throw ContractError("save_policy: networks disagree on latent width");
  std::filesystem::create_directories(dir);
  const std::string tag = arch_tag(policy.latent_dim(), policy.hidden(), behavior.hidden());
  const std::string bytes = numcore::encode_bundle(numcore::bundle_from_params(tag, all_params(policy, behavior)));
  write_file_atomic(dir / "policy.bundle", bytes);
  json manifest = json::object();
  if (extra.is_object()) manifest.update(extra);
  manifest["format"] = "seqstate-policy";
  manifest["version"] = 1;
  manifest["arch_tag"] = tag;
  manifest["latent_dim"] = policy.latent_dim();
  manifest["hidden"] = policy.hidden();
  manifest["behavior_hidden"] = behavior.hidden();
  manifest["tau"] = policy.tau();
  manifest["bundle_fnv1a"] = fnv1a_hex(bytes);
  write_file_atomic(dir / "policy.json", manifest.dump(2) + "\n");
}

LoadedPolicy load_policy(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "policy.json";
  const auto bundle_path = dir / "policy.bundle";
  if (!std::filesystem::exists(manifest_path) || !std::filesystem::exists(bundle_path)) {
    throw DataError("no policy found in " + dir.string());
  }
  LoadedPolicy out;
  try {
    out.manifest = json::parse(read_file(manifest_path));
    const std::string bytes = read_file(bundle_path);
    if (out.manifest.at("bundle_fnv1a").get<std::string>() != fnv1a_hex(bytes)) {
      throw DataError("policy bundle does not match its manifest digest");
    }
    const Index d = out.manifest.at("latent_dim").get<Index>();
    const Index h = out.manifest.at("hidden").get<Index>();
    const Index bh = out.manifest.at("behavior_hidden").get<Index>();
    out.policy = QPolicy(d, h, out.manifest.at("tau").get<double>(), 0);
    out.behavior = BcPolicy(d, bh, 0);
    const numcore::Bundle bundle = numcore::decode_bundle(bytes);
    if (bundle.arch_tag != arch_tag(d, h, bh)) throw DataError("policy bundle tag '" + bundle.arch_tag + "' does not match manifest");
    numcore::load_params(bundle, all_params(out.policy, out.behavior));
    out.policy.sync_target();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed policy manifest: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("policy bundle mismatch: ") + e.what());
  }
  return out;
}

}  // namespace seqstate::policy
