#pragma once

// Binary parameter checkpoints.
//
//   "BLRCKPT\0"  u32 version  u32 role-length role  i64 step
//   u32 config-length config-json
//   u32 count, then per parameter: u32 name-length name  u32 rank  i32 dims[rank]  f64 data[]
//
// Integers and doubles are little-endian; parameters appear in name order, so
// saving a loaded checkpoint reproduces the file byte for byte.

#include "blend/params.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace blend {

enum class Role { single_expert, base_R, expanded_H, incremental, generator_G, discriminator_D };

std::string to_string(Role r);
Role parse_role(const std::string& s);

struct ModelCheckpoint {
    Role role = Role::base_R;
    nlohmann::json config = nlohmann::json::object();
    long long step = 0;
    ParamSet params;
};

inline constexpr unsigned kCheckpointVersion = 1;

std::string serialize_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& file);
ModelCheckpoint load_checkpoint(const std::filesystem::path& file);

/// Throws invalid_checkpoint unless ckpt.role is one of `allowed`.
void require_role(const ModelCheckpoint& ckpt, std::initializer_list<Role> allowed, const std::string& what);

} // namespace blend
