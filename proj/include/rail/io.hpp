#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rail/discriminator.hpp"
#include "rail/envs.hpp"
#include "rail/policy.hpp"
#include "rail/trpo.hpp"

namespace rail {

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(const std::string& text);

inline constexpr int kTrajectoryFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;

struct TrajectoryFileHeader {
  int format_version = kTrajectoryFormatVersion;
  std::string env_id;
  int obs_dim = 0;
  int action_dim = 0;
  double gamma = 1.0;
  std::uint64_t generator_seed = 0;
  std::string policy_checkpoint_hash;
};

// Layout: "RAILTRJ1", u32 header length, JSON header, then per trajectory
// u64 seed, u32 length, (length+1)*obs_dim observations, length*action_dim
// actions, length true costs (all little-endian f64), and finally the
// SHA-256 of everything after the header.
void write_trajectories(const std::filesystem::path& path, const TrajectoryFileHeader& header,
                        const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> read_trajectories(const std::filesystem::path& path, TrajectoryFileHeader* header = nullptr);

enum class ModelKind { Policy, Discriminator, Baseline };
std::string to_string(ModelKind kind);

// Layout: "RAILCKP1", u32 manifest length, JSON manifest, payload of
// little-endian f64 in flat_params order. The manifest records the payload
// digest, which is verified on load.
struct Checkpoint {
  ModelKind kind = ModelKind::Policy;
  MlpSpec spec;
  ParamVector payload;
  std::string config_digest;
  std::string rng_state;
  nlohmann::json config;  // resolved run configuration
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);
// SHA-256 of the checkpoint file's bytes.
std::string file_digest(const std::filesystem::path& path);

// Payload conventions per kind.
Checkpoint policy_checkpoint(const GaussianPolicy& policy);
GaussianPolicy policy_from_checkpoint(const Checkpoint& ckpt, int expected_obs_dim, int expected_action_dim);
Checkpoint disc_checkpoint(const Discriminator& disc);
Discriminator disc_from_checkpoint(const Checkpoint& ckpt);
Checkpoint baseline_checkpoint(const ValueBaseline& baseline);

// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace rail
