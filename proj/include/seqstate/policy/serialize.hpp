#pragma once

// A policy on disk: `policy.bundle` holding the Q, filter and behavior
// networks, and `policy.json` with their shapes, tau and anything the caller
// adds (encoder reference, gamma, epsilon, seed).

#include <filesystem>

#include "json.hpp"
#include "seqstate/policy/bcq.hpp"

namespace seqstate::policy {

void save_policy(const QPolicy& policy, const BcPolicy& behavior, const std::filesystem::path& dir,
                 const nlohmann::json& extra = {});

struct LoadedPolicy {
  QPolicy policy;
  BcPolicy behavior;
  nlohmann::json manifest;
};

// DataError on missing, corrupted or inconsistent files.
LoadedPolicy load_policy(const std::filesystem::path& dir);

}  // namespace seqstate::policy
