#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "feddkc/data.hpp"
#include "feddkc/error.hpp"
#include "feddkc/metrics.hpp"
#include "feddkc/neural.hpp"
#include "feddkc/refinement.hpp"

namespace feddkc {

// Wire sizes used for communication accounting.
inline constexpr std::uint64_t kRealWireBytes = 8;
inline constexpr std::uint64_t kLabelWireBytes = 4;

// Client -> server message of one round.
struct Upload {
  Matrix features;         // H^k, N^k x feature_dim
  Matrix local_knowledge;  // z^k, N^k x C
  Labels labels;           // y^k

  std::size_t rows() const { return labels.size(); }
  std::uint64_t wire_bytes() const;
  // Throws DimensionMismatch unless all three parts have the same row count.
  void validate() const;
};

std::uint64_t downlink_bytes(const Matrix& global_knowledge);

struct ClientState {
  int id = 0;
  SplitModel model;
  Dataset data;
  Matrix global_knowledge;  // z^S, one logit row per local sample
  std::uint64_t batching_seed = 0;

  // Global knowledge starts at zeros, i.e. a uniform first distillation target.
  static ClientState create(int id, SplitModel model, Dataset data, std::uint64_t batching_seed);
};

struct ClientRoundResult {
  Upload upload;
  double local_loss = 0.0;
};

// Local distillation toward softmax(global_knowledge) and the local labels,
// followed by feature and knowledge extraction on the updated model.
ClientRoundResult client_round(ClientState& state, const TrainConfig& cfg, int round);

struct ServerState {
  ServerModel model;
  RefinementConfig refinement;
  std::map<int, Upload> uploads;
  std::uint64_t batching_seed = 0;
};

struct ClientServerReport {
  double server_loss = 0.0;
  std::vector<double> refined_peaks;
  std::vector<double> refined_entropies;
  // Rows whose refinement failed and fell back to softmax, by error.
  std::map<ErrorCode, std::size_t> fallbacks;
};

struct ServerRoundResult {
  std::map<int, Matrix> global_knowledge;
  std::map<int, ClientServerReport> reports;
};

using EventSink = std::function<void(const RefinementEvent&)>;

// Global distillation in ascending client id order: refine every uploaded
// knowledge row, distill the server predictor on (H^k, refined rows, y^k), then
// produce z^S for client k with the updated weights. Consumes the uploads.
ServerRoundResult server_round(ServerState& state, const TrainConfig& cfg, int round, const EventSink& sink = {});

struct ExperimentOptions {
  // Run the client phase on one thread per client.
  bool parallel_clients = false;
  EventSink event_sink;
};

struct ExperimentResult {
  MetricsLog log;
  // Set when training diverged; the log holds every completed round.
  std::optional<std::string> divergence;
};

// Synchronous rounds with a barrier between the client and server phases.
// Row 0 of the log is the untrained evaluation; every round evaluates each
// client model on `test`.
ExperimentResult run_experiment(std::vector<ClientState>& clients, ServerState& server, int rounds,
                                const TrainConfig& cfg, const Dataset& test, const ExperimentOptions& options = {});

}  // namespace feddkc
