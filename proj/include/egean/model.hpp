#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "egean/data.hpp"
#include "egean/optim.hpp"
#include "egean/tensor.hpp"

namespace egean {

enum class Task { Ctr, Cvr };

inline const char* task_name(Task t) { return t == Task::Ctr ? "ctr" : "cvr"; }

struct ModelConfig {
  std::size_t embed_dim = 5;
  std::size_t lora_rank = 2;
  std::size_t task_embed_dim = 8;  // EPNet task-ID / PPNet prior width
  std::vector<std::size_t> tower_hidden = {16, 8};
  std::vector<std::size_t> exposure_hidden = {16};
  std::vector<std::size_t> imputation_hidden = {8};
  double leaky_slope = 0.2;
  bool exposure_network_on = true;
  bool task_personalized_network_on = true;
  bool metric_learning_on = true;

  bool operator==(const ModelConfig&) const = default;
};

// Named parameter registry; iteration order is the sorted name order, which
// checkpointing and the parameter-diff tests rely on.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  const std::map<std::string, Tensor>& all() const { return params_; }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Tensor> params_;
};

// Two dense layers; hidden LeakyReLU, output 2*sigmoid so every gate value
// lies in (0, 2). Hidden width equals output width.
struct GateNU {
  Tensor w1, b1, w2, b2;
  double slope = 0.2;

  Tensor forward(Tape& tape, const Tensor& x) const;
};

struct DenseStack {
  std::vector<Tensor> weights;  // layer l: (w_l x w_{l+1})
  std::vector<Tensor> biases;
  Tensor head_w, head_b;  // final linear map to a single logit
};

struct ForwardOutputs {
  Tensor ctr_prob;    // (B x 1)
  Tensor cvr_prob;    // (B x 1)
  Tensor ctcvr_prob;  // elementwise ctr*cvr
  Tensor shared_embeddings;  // (B x e), lookup of the pretrained table
  Tensor cvr_embeddings;     // (B x e), CVR-personalized (O_ep) when the
                             // task-personalized network is on, else shared
};

// Parameter groups used by the cyclic finetuning schedule and by the
// ablation parameter-diff contract.
enum class ParamGroup { Pretrain, Propensity, Imputation, CvrPath };

// Shared embeddings pretrained on the exposure task, LoRA-adapted per task,
// personalized through EPNet/PPNet gates, feeding CTR and CVR towers. The
// imputation network used by the doubly robust training loop lives in the
// same parameter store under "imputation.*".
class EgeanModel {
 public:
  EgeanModel(DatasetSchema schema, ModelConfig config, std::uint64_t seed);

  // sigma(MLP(x_ui)) over the shared embeddings; (B x 1) probabilities.
  Tensor exposure_forward(Tape& tape, const IndexMatrix& raw_codes);

  // W + B*A for the task adapter. W contributes no gradient once frozen.
  Tensor effective_embedding(Tape& tape, Task task);

  // EPNet gate over concat(task embedding, stop_gradient(E)); width e,
  // values in (0, 2).
  Tensor epnet_gate(Tape& tape, Task task, const Tensor& embeddings);

  ForwardOutputs forward(Tape& tape, const IndexMatrix& raw_codes);

  // Nonnegative imputed errors from the detached shared embeddings; (B x 1).
  Tensor imputation_forward(Tape& tape, const IndexMatrix& raw_codes);

  void freeze_embeddings();
  bool embeddings_frozen() const;

  std::vector<Tensor> group_params(ParamGroup g);
  std::vector<std::string> group_param_names(ParamGroup g) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const ModelConfig& config() const { return config_; }
  const DatasetSchema& schema() const { return schema_; }
  std::size_t embedding_width() const { return width_; }

 private:
  DatasetSchema schema_;
  ModelConfig config_;
  std::size_t width_ = 0;  // field_count * embed_dim
  ParameterStore params_;

  GateNU epnet_gate_net_;
  std::map<Task, std::vector<GateNU>> ppnet_gates_;  // one per tower layer
  std::map<Task, DenseStack> towers_;
  DenseStack exposure_net_;
  DenseStack imputation_net_;

  Tensor dense_logit(Tape& tape, const DenseStack& net, const Tensor& input,
                     const std::vector<GateNU>* gates, const Tensor* gate_input) const;
  Tensor tower_probability(Tape& tape, Task task, const Tensor& input,
                           const Tensor* personalized) ;
  GateNU make_gate(const std::string& prefix, std::size_t in, std::size_t out,
                   std::uint64_t seed);
  DenseStack make_stack(const std::string& prefix, std::size_t in,
                        const std::vector<std::size_t>& hidden, std::uint64_t seed);
};

}  // namespace egean
