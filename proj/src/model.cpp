#include "egean/model.hpp"

#include <stdexcept>

namespace egean {

Tensor& ParameterStore::add(const std::string& name, Tensor t) {
  auto [it, inserted] = params_.emplace(name, std::move(t));
  if (!inserted) throw std::logic_error("ParameterStore: duplicate parameter " + name);
  return it->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParameterStore: missing " + name);
  return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParameterStore: missing " + name);
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(name);
  return out;
}

Tensor GateNU::forward(Tape& tape, const Tensor& x) const {
  Tensor h = tape.leaky_relu(tape.add_rowwise(tape.matmul(x, w1), b1), slope);
  return tape.mul_scalar(tape.sigmoid(tape.add_rowwise(tape.matmul(h, w2), b2)), 2.0);
}

namespace {

Tensor init_param(const std::string& name, std::vector<std::size_t> shape,
                  std::uint64_t seed) {
  Rng rng = Rng(seed).derive(name);
  return xavier_init(std::move(shape), rng, /*trainable=*/true);
}

}  // namespace

GateNU EgeanModel::make_gate(const std::string& prefix, std::size_t in, std::size_t out,
                             std::uint64_t seed) {
  GateNU g;
  g.slope = config_.leaky_slope;
  g.w1 = params_.add(prefix + ".l1.W", init_param(prefix + ".l1.W", {in, out}, seed));
  g.b1 = params_.add(prefix + ".l1.b", init_param(prefix + ".l1.b", {out}, seed));
  g.w2 = params_.add(prefix + ".l2.W", init_param(prefix + ".l2.W", {out, out}, seed));
  g.b2 = params_.add(prefix + ".l2.b", init_param(prefix + ".l2.b", {out}, seed));
  return g;
}

DenseStack EgeanModel::make_stack(const std::string& prefix, std::size_t in,
                                  const std::vector<std::size_t>& hidden,
                                  std::uint64_t seed) {
  DenseStack s;
  std::size_t w = in;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    s.weights.push_back(params_.add(base + ".W", init_param(base + ".W", {w, hidden[l]}, seed)));
    s.biases.push_back(params_.add(base + ".b", init_param(base + ".b", {hidden[l]}, seed)));
    w = hidden[l];
  }
  s.head_w = params_.add(prefix + ".head.W", init_param(prefix + ".head.W", {w, 1}, seed));
  s.head_b = params_.add(prefix + ".head.b", init_param(prefix + ".head.b", {1}, seed));
  return s;
}

EgeanModel::EgeanModel(DatasetSchema schema, ModelConfig config, std::uint64_t seed)
    : schema_(std::move(schema)), config_(std::move(config)) {
  if (schema_.field_count() == 0)
    throw std::invalid_argument("EgeanModel: schema has no fields");
  if (config_.tower_hidden.empty())
    throw std::invalid_argument("EgeanModel: towers need at least one layer");
  width_ = schema_.field_count() * config_.embed_dim;

  const std::size_t vocab = schema_.total_vocab();
  params_.add("embedding.W", init_param("embedding.W", {vocab, config_.embed_dim}, seed));

  if (config_.task_personalized_network_on) {
    const std::size_t r = config_.lora_rank;
    if (r == 0 || 2 * r > std::min(vocab, config_.embed_dim))
      throw std::invalid_argument(
          "EgeanModel: lora_rank must satisfy r <= min(vocab, embed_dim)/2");
    for (Task t : {Task::Ctr, Task::Cvr}) {
      const std::string base = std::string("lora.") + task_name(t);
      params_.add(base + ".A", init_param(base + ".A", {r, config_.embed_dim}, seed));
      // B starts at zero so the adapter is initially the identity update
      params_.add(base + ".B", Tensor::zeros({vocab, r}, /*trainable=*/true));
    }
    for (Task t : {Task::Ctr, Task::Cvr}) {
      const std::string name = std::string("epnet.task.") + task_name(t);
      params_.add(name, init_param(name, {1, config_.task_embed_dim}, seed));
      const std::string prior = std::string("ppnet.prior.") + task_name(t);
      params_.add(prior, init_param(prior, {1, config_.task_embed_dim}, seed));
    }
    epnet_gate_net_ = make_gate("epnet.gate", config_.task_embed_dim + width_, width_, seed);
  }

  for (Task t : {Task::Ctr, Task::Cvr}) {
    const std::string prefix = std::string("tower.") + task_name(t);
    towers_[t] = make_stack(prefix, width_, config_.tower_hidden, seed);
    if (config_.task_personalized_network_on) {
      std::vector<GateNU>& gates = ppnet_gates_[t];
      std::size_t w = width_;
      for (std::size_t l = 0; l < config_.tower_hidden.size(); ++l) {
        gates.push_back(make_gate(prefix + ".gate" + std::to_string(l),
                                  config_.task_embed_dim + width_, w, seed));
        w = config_.tower_hidden[l];
      }
    }
  }

  if (config_.exposure_network_on)
    exposure_net_ = make_stack("exposure", width_, config_.exposure_hidden, seed);
  imputation_net_ = make_stack("imputation", width_, config_.imputation_hidden, seed);
}

Tensor EgeanModel::dense_logit(Tape& tape, const DenseStack& net, const Tensor& input,
                               const std::vector<GateNU>* gates,
                               const Tensor* gate_input) const {
  Tensor h = input;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    if (gates) h = tape.mul((*gates)[l].forward(tape, *gate_input), h);
    h = tape.leaky_relu(tape.add_rowwise(tape.matmul(h, net.weights[l]), net.biases[l]),
                        config_.leaky_slope);
  }
  return tape.add_rowwise(tape.matmul(h, net.head_w), net.head_b);
}

Tensor EgeanModel::exposure_forward(Tape& tape, const IndexMatrix& raw_codes) {
  if (!config_.exposure_network_on)
    throw std::logic_error("exposure_forward: exposure network is disabled");
  if (raw_codes.cols != schema_.field_count())
    throw std::invalid_argument("exposure_forward: code width does not match schema");
  Tensor e = tape.lookup(params_.at("embedding.W"), offset_codes(schema_, raw_codes));
  return tape.sigmoid(dense_logit(tape, exposure_net_, e, nullptr, nullptr));
}

Tensor EgeanModel::effective_embedding(Tape& tape, Task task) {
  Tensor w = params_.at("embedding.W");
  if (!config_.task_personalized_network_on) return w;
  const std::string base = std::string("lora.") + task_name(task);
  Tensor delta = tape.matmul(params_.at(base + ".B"), params_.at(base + ".A"));
  return tape.add(delta, w);
}

Tensor EgeanModel::epnet_gate(Tape& tape, Task task, const Tensor& embeddings) {
  if (!config_.task_personalized_network_on)
    throw std::logic_error("epnet_gate: task-personalized network is disabled");
  Tensor task_emb = tape.broadcast_rows(
      params_.at(std::string("epnet.task.") + task_name(task)), embeddings.rows());
  Tensor gate_in = tape.concat_cols(task_emb, tape.stop_gradient(embeddings));
  return epnet_gate_net_.forward(tape, gate_in);
}

Tensor EgeanModel::tower_probability(Tape& tape, Task task, const Tensor& input,
                                     const Tensor* personalized) {
  const DenseStack& net = towers_.at(task);
  if (!config_.task_personalized_network_on)
    return tape.sigmoid(dense_logit(tape, net, input, nullptr, nullptr));
  // PPNet gates read concat(prior, stop_gradient(O_ep)) at every layer
  Tensor prior = tape.broadcast_rows(
      params_.at(std::string("ppnet.prior.") + task_name(task)), input.rows());
  Tensor gate_in = tape.concat_cols(prior, tape.stop_gradient(*personalized));
  return tape.sigmoid(dense_logit(tape, net, input, &ppnet_gates_.at(task), &gate_in));
}

ForwardOutputs EgeanModel::forward(Tape& tape, const IndexMatrix& raw_codes) {
  if (raw_codes.cols != schema_.field_count())
    throw std::invalid_argument("forward: code width does not match schema");
  const IndexMatrix idx = offset_codes(schema_, raw_codes);

  ForwardOutputs out;
  out.shared_embeddings = tape.lookup(params_.at("embedding.W"), idx);

  if (config_.task_personalized_network_on) {
    for (Task t : {Task::Ctr, Task::Cvr}) {
      Tensor e_task = tape.lookup(effective_embedding(tape, t), idx);
      Tensor o_ep = tape.mul(epnet_gate(tape, t, e_task), e_task);
      Tensor prob = tower_probability(tape, t, o_ep, &o_ep);
      if (t == Task::Ctr) {
        out.ctr_prob = prob;
      } else {
        out.cvr_prob = prob;
        out.cvr_embeddings = o_ep;
      }
    }
  } else {
    out.ctr_prob = tower_probability(tape, Task::Ctr, out.shared_embeddings, nullptr);
    out.cvr_prob = tower_probability(tape, Task::Cvr, out.shared_embeddings, nullptr);
    out.cvr_embeddings = out.shared_embeddings;
  }
  out.ctcvr_prob = tape.mul(out.ctr_prob, out.cvr_prob);
  return out;
}

Tensor EgeanModel::imputation_forward(Tape& tape, const IndexMatrix& raw_codes) {
  if (raw_codes.cols != schema_.field_count())
    throw std::invalid_argument("imputation_forward: code width does not match schema");
  Tensor e = tape.stop_gradient(
      tape.lookup(params_.at("embedding.W"), offset_codes(schema_, raw_codes)));
  return tape.softplus(dense_logit(tape, imputation_net_, e, nullptr, nullptr));
}

void EgeanModel::freeze_embeddings() { params_.at("embedding.W").set_trainable(false); }

bool EgeanModel::embeddings_frozen() const {
  return !params_.at("embedding.W").trainable();
}

std::vector<std::string> EgeanModel::group_param_names(ParamGroup g) const {
  std::vector<std::string> out;
  auto add_prefixed = [&](const std::string& prefix) {
    for (const auto& [name, t] : params_.all())
      if (name.rfind(prefix, 0) == 0) out.push_back(name);
  };
  switch (g) {
    case ParamGroup::Pretrain:
      if (config_.exposure_network_on) {
        out.push_back("embedding.W");
        add_prefixed("exposure.");
      }
      break;
    case ParamGroup::Propensity:
      add_prefixed("lora.ctr.");
      add_prefixed("tower.ctr.");
      add_prefixed("epnet.task.ctr");
      add_prefixed("ppnet.prior.ctr");
      break;
    case ParamGroup::Imputation:
      add_prefixed("imputation.");
      break;
    case ParamGroup::CvrPath:
      add_prefixed("lora.cvr.");
      add_prefixed("tower.cvr.");
      add_prefixed("epnet.task.cvr");
      add_prefixed("ppnet.prior.cvr");
      add_prefixed("epnet.gate.");
      break;
  }
  return out;
}

std::vector<Tensor> EgeanModel::group_params(ParamGroup g) {
  std::vector<Tensor> out;
  for (const std::string& name : group_param_names(g)) out.push_back(params_.at(name));
  return out;
}

}  // namespace egean
