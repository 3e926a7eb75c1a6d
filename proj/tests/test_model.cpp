#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "egean/checkpoint.hpp"
#include "egean/model.hpp"
#include "test_helpers.hpp"

using namespace egean;
using egean::testing::worst_grad_err;

namespace {

DatasetSchema small_schema() {
  DatasetSchema s;
  s.fields = {{"user_id", 6, FieldSide::User},
              {"item_id", 5, FieldSide::Item},
              {"xu_0", 3, FieldSide::User}};
  return s;
}

ModelConfig small_config() {
  ModelConfig mc;
  mc.embed_dim = 3;
  mc.lora_rank = 1;
  mc.task_embed_dim = 4;
  mc.tower_hidden = {5};
  mc.exposure_hidden = {4};
  mc.imputation_hidden = {3};
  return mc;
}

IndexMatrix random_codes(const DatasetSchema& schema, std::size_t rows, Rng& rng) {
  IndexMatrix idx;
  idx.rows = rows;
  idx.cols = schema.field_count();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = 0; f < schema.field_count(); ++f)
      idx.idx.push_back(rng.uniform_index(schema.fields[f].vocab));
  return idx;
}

// Singular values via one-sided Jacobi rotations; enough for the small
// rank oracle below.
std::vector<double> singular_values(std::size_t rows, std::size_t cols,
                                    std::vector<double> m) {
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < cols; ++i) {
      for (std::size_t j = i + 1; j < cols; ++j) {
        double a = 0, b = 0, c = 0;
        for (std::size_t r = 0; r < rows; ++r) {
          a += m[r * cols + i] * m[r * cols + i];
          b += m[r * cols + j] * m[r * cols + j];
          c += m[r * cols + i] * m[r * cols + j];
        }
        off += c * c;
        if (std::abs(c) < 1e-15) continue;
        const double zeta = (b - a) / (2.0 * c);
        const double t = (zeta >= 0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t r = 0; r < rows; ++r) {
          const double vi = m[r * cols + i], vj = m[r * cols + j];
          m[r * cols + i] = cs * vi - sn * vj;
          m[r * cols + j] = sn * vi + cs * vj;
        }
      }
    }
    if (off < 1e-30) break;
  }
  std::vector<double> sv(cols, 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += m[r * cols + j] * m[r * cols + j];
    sv[j] = std::sqrt(s);
  }
  std::sort(sv.rbegin(), sv.rend());
  return sv;
}

}  // namespace

TEST_CASE("exposure head with zeroed parameters outputs one half") {
  EgeanModel model(small_schema(), small_config(), 1);
  for (const auto& [name, t] : model.params().all()) {
    if (name.rfind("exposure.", 0) == 0) {
      Tensor p = t;
      for (double& v : p.values()) v = 0.0;
    }
  }
  Rng rng(2);
  IndexMatrix codes = random_codes(model.schema(), 4, rng);
  Tape tape;
  Tensor probs = model.exposure_forward(tape, codes);
  for (std::size_t i = 0; i < probs.numel(); ++i)
    CHECK(probs[i] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("exposure probabilities stay inside (0,1)") {
  EgeanModel model(small_schema(), small_config(), 3);
  Rng rng(4);
  IndexMatrix codes = random_codes(model.schema(), 32, rng);
  Tape tape;
  Tensor probs = model.exposure_forward(tape, codes);
  for (std::size_t i = 0; i < probs.numel(); ++i) {
    CHECK(probs[i] > 0.0);
    CHECK(probs[i] < 1.0);
  }
}

TEST_CASE("exposure cross-entropy decreases over 50 steps on separable data") {
  // positives pair users and items of equal parity; recombined negatives
  // break the parity correlation half the time
  DatasetSchema schema = small_schema();
  EgeanModel model(schema, small_config(), 5);
  AdamConfig ac;
  AdamOptimizer opt(model.group_params(ParamGroup::Pretrain), ac);

  Rng rng(6);
  IndexMatrix codes;
  codes.rows = 64;
  codes.cols = 3;
  std::vector<double> labels;
  for (std::size_t r = 0; r < 64; ++r) {
    const bool positive = r < 32;
    std::size_t u = rng.uniform_index(6);
    std::size_t i = positive ? (u % 2 + 2 * rng.uniform_index(2)) % 5
                             : (u % 2 + 1 + 2 * rng.uniform_index(2)) % 5;
    codes.idx.insert(codes.idx.end(), {u, i, u % 3});
    labels.push_back(positive ? 1.0 : 0.0);
  }
  Tensor label_t = Tensor::from_values({64, 1}, labels);

  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) {
    Tape tape;
    Tensor loss = tape.mean(tape.bce_elem(model.exposure_forward(tape, codes), label_t));
    losses.push_back(loss.item());
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
  }
  CHECK(losses.back() < losses.front());
}

TEST_CASE("lora adapter starts as the identity update") {
  EgeanModel model(small_schema(), small_config(), 7);
  Tape tape;
  Tensor w = model.params().at("embedding.W");
  Tensor eff = model.effective_embedding(tape, Task::Cvr);
  REQUIRE(eff.shape() == w.shape());
  for (std::size_t i = 0; i < w.numel(); ++i) CHECK(eff[i] == w[i]);
}

TEST_CASE("lora shape contract and rank bound") {
  SUBCASE("8x4 table with rank 2 factors") {
    DatasetSchema schema;
    schema.fields = {{"f", 8, FieldSide::User}};
    ModelConfig mc = small_config();
    mc.embed_dim = 4;
    mc.lora_rank = 2;
    EgeanModel model(schema, mc, 11);
    CHECK(model.params().at("lora.cvr.B").shape() == std::vector<std::size_t>{8, 2});
    CHECK(model.params().at("lora.cvr.A").shape() == std::vector<std::size_t>{2, 4});
    Tape tape;
    CHECK(model.effective_embedding(tape, Task::Cvr).shape() ==
          std::vector<std::size_t>{8, 4});

    // singular-value oracle: the update B*A has rank at most lora_rank
    Tensor b = model.params().at("lora.cvr.B");
    Rng rng(12);
    for (double& v : b.values()) v = rng.normal();
    Tape t2;
    Tensor delta = t2.matmul(model.params().at("lora.cvr.B"), model.params().at("lora.cvr.A"));
    std::vector<double> sv = singular_values(
        8, 4, std::vector<double>(delta.values().begin(), delta.values().end()));
    REQUIRE(sv.size() == 4);
    CHECK(sv[0] > 0.0);
    for (std::size_t k = mc.lora_rank; k < sv.size(); ++k)
      CHECK(sv[k] < 1e-10 * sv[0]);
  }
  SUBCASE("rank bound enforced at construction") {
    ModelConfig mc = small_config();
    mc.lora_rank = 2;  // 2*2 > min(vocab, embed_dim=3)
    CHECK_THROWS_AS(EgeanModel(small_schema(), mc, 0), std::invalid_argument);
  }
}

TEST_CASE("epnet gate: width, range and severed embedding path") {
  EgeanModel model(small_schema(), small_config(), 13);
  Rng rng(14);
  IndexMatrix codes = random_codes(model.schema(), 8, rng);

  auto gate_loss_value = [&] {
    Tape tape;
    Tensor e_task = tape.lookup(model.effective_embedding(tape, Task::Cvr),
                                offset_codes(model.schema(), codes));
    return tape.sum(model.epnet_gate(tape, Task::Cvr, e_task)).item();
  };

  Tape tape;
  Tensor e_task = tape.lookup(model.effective_embedding(tape, Task::Cvr),
                              offset_codes(model.schema(), codes));
  Tensor gate = model.epnet_gate(tape, Task::Cvr, e_task);
  CHECK(gate.rows() == 8);
  CHECK(gate.cols() == model.embedding_width());
  for (std::size_t i = 0; i < gate.numel(); ++i) {
    CHECK(gate[i] > 0.0);
    CHECK(gate[i] < 2.0);
  }

  for (const auto& [name, t] : model.params().all()) {
    Tensor p = t;
    p.zero_grad();
  }
  tape.backward(tape.sum(gate));

  // stop-gradient severs the embedding path: LoRA factors get nothing
  Tensor lora_a = model.params().at("lora.cvr.A");
  for (double g : lora_a.grad_or_zero()) CHECK(g == 0.0);
  Tensor lora_b = model.params().at("lora.cvr.B");
  for (double g : lora_b.grad_or_zero()) CHECK(g == 0.0);

  // the task-feature path stays alive and matches finite differences
  Tensor task_emb = model.params().at("epnet.task.cvr");
  CHECK(worst_grad_err({task_emb}, gate_loss_value) < 1e-4);
  double task_grad_norm = 0.0;
  for (double g : task_emb.grad_or_zero()) task_grad_norm += g * g;
  CHECK(task_grad_norm > 0.0);
}

TEST_CASE("elementwise embedding transform identities") {
  Tape tape;
  Tensor e = Tensor::from_values({1, 2}, {3.0, 4.0});
  CHECK(tape.mul(Tensor::from_values({1, 2}, {1.0, 1.0}), e)[1] == 4.0);
  CHECK(tape.mul(Tensor::from_values({1, 2}, {0.0, 0.0}), e)[0] == 0.0);
  Tensor gated = tape.mul(Tensor::from_values({1, 2}, {2.0, 0.5}), e);
  CHECK(gated[0] == 6.0);
  CHECK(gated[1] == 2.0);
}

TEST_CASE("unit ppnet gates reduce the tower to plain dense layers") {
  EgeanModel model(small_schema(), small_config(), 17);
  // zero the second gate layer: output becomes 2*sigmoid(0) = 1 exactly
  for (const auto& [name, t] : model.params().all()) {
    if (name.rfind("tower.cvr.gate", 0) == 0 && name.find(".l2.") != std::string::npos) {
      Tensor p = t;
      for (double& v : p.values()) v = 0.0;
    }
  }
  Rng rng(18);
  IndexMatrix codes = random_codes(model.schema(), 8, rng);
  Tape tape;
  ForwardOutputs out = model.forward(tape, codes);

  // reference: same LoRA embedding, same EPNet gate, gate-free dense layers
  Tape ref;
  Tensor e_task = ref.lookup(model.effective_embedding(ref, Task::Cvr),
                             offset_codes(model.schema(), codes));
  Tensor o_ep = ref.mul(model.epnet_gate(ref, Task::Cvr, e_task), e_task);
  Tensor h = o_ep;
  h = ref.leaky_relu(ref.add_rowwise(ref.matmul(h, model.params().at("tower.cvr.l0.W")),
                                     model.params().at("tower.cvr.l0.b")),
                     model.config().leaky_slope);
  Tensor logit = ref.add_rowwise(ref.matmul(h, model.params().at("tower.cvr.head.W")),
                                 model.params().at("tower.cvr.head.b"));
  Tensor expected = ref.sigmoid(logit);
  for (std::size_t i = 0; i < expected.numel(); ++i) CHECK(out.cvr_prob[i] == expected[i]);
}

TEST_CASE("disabling the personalized network matches a plain two-tower build") {
  const std::uint64_t seed = 21;
  ModelConfig off = small_config();
  off.task_personalized_network_on = false;
  EgeanModel model(small_schema(), off, seed);

  Rng rng(22);
  IndexMatrix codes = random_codes(model.schema(), 6, rng);
  Tape tape;
  ForwardOutputs out = model.forward(tape, codes);

  // reference tower rebuilt from the same per-parameter derived seeds
  auto init = [&](const std::string& name, std::vector<std::size_t> shape) {
    Rng r = Rng(seed).derive(name);
    return xavier_init(std::move(shape), r);
  };
  Tape ref;
  Tensor w = init("embedding.W", {model.schema().total_vocab(), off.embed_dim});
  Tensor e = ref.lookup(w, offset_codes(model.schema(), codes));
  Tensor h = ref.leaky_relu(
      ref.add_rowwise(ref.matmul(e, init("tower.cvr.l0.W",
                                         {model.embedding_width(), off.tower_hidden[0]})),
                      init("tower.cvr.l0.b", {off.tower_hidden[0]})),
      off.leaky_slope);
  Tensor logit = ref.add_rowwise(ref.matmul(h, init("tower.cvr.head.W", {off.tower_hidden[0], 1})),
                                 init("tower.cvr.head.b", {1}));
  Tensor expected = ref.sigmoid(logit);
  for (std::size_t i = 0; i < expected.numel(); ++i) CHECK(out.cvr_prob[i] == expected[i]);
  CHECK(out.cvr_embeddings.same_storage(out.shared_embeddings));
}

TEST_CASE("forward outputs: ranges, product head, shapes, determinism") {
  EgeanModel a(small_schema(), small_config(), 23);
  EgeanModel b(small_schema(), small_config(), 23);
  Rng rng(24);
  IndexMatrix codes = random_codes(a.schema(), 16, rng);

  Tape ta, tb;
  ForwardOutputs oa = a.forward(ta, codes);
  ForwardOutputs ob = b.forward(tb, codes);
  CHECK(oa.ctr_prob.rows() == 16);
  CHECK(oa.cvr_prob.rows() == 16);
  CHECK(oa.ctcvr_prob.rows() == 16);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(oa.ctr_prob[i] > 0.0);
    CHECK(oa.ctr_prob[i] < 1.0);
    CHECK(oa.cvr_prob[i] > 0.0);
    CHECK(oa.cvr_prob[i] < 1.0);
    CHECK(oa.ctcvr_prob[i] == oa.ctr_prob[i] * oa.cvr_prob[i]);
    CHECK(oa.ctcvr_prob[i] <= std::min(oa.ctr_prob[i], oa.cvr_prob[i]));
    CHECK(oa.ctr_prob[i] == ob.ctr_prob[i]);
    CHECK(oa.cvr_prob[i] == ob.cvr_prob[i]);
  }
}

// Finite differences measure the total derivative, including paths the
// stop-gradient contract deliberately severs (gate inputs, the imputation
// input). Each parameter is therefore checked along a loss whose paths to it
// are all live; the severing itself is asserted separately.
TEST_CASE("model gradients match finite differences along live paths") {
  EgeanModel model(small_schema(), small_config(), 29);
  Rng rng(30);
  IndexMatrix codes = random_codes(model.schema(), 5, rng);
  std::vector<double> click = {1, 0, 1, 0, 1};
  std::vector<double> conv = {1, 0, 0, 0, 1};
  Tensor click_t = Tensor::from_values({5, 1}, click);
  Tensor conv_t = Tensor::from_values({5, 1}, conv);

  // activate the adapters so their gradients are informative
  for (const char* name : {"lora.ctr.B", "lora.cvr.B"}) {
    Tensor b = model.params().at(name);
    for (double& v : b.values()) v = rng.uniform(-0.3, 0.3);
  }

  auto collect = [&](std::initializer_list<const char*> prefixes) {
    std::vector<Tensor> out;
    for (const auto& [name, t] : model.params().all())
      for (const char* prefix : prefixes)
        if (name.rfind(prefix, 0) == 0) {
          Tensor p = t;
          p.zero_grad();
          out.push_back(p);
        }
    return out;
  };

  SUBCASE("towers, ppnet gates and imputation through the task heads") {
    auto forward = [&] {
      Tape t;
      ForwardOutputs o = model.forward(t, codes);
      Tensor loss = t.add(t.mean(t.bce_elem(o.ctr_prob, click_t)),
                          t.mean(t.bce_elem(o.cvr_prob, conv_t)));
      return t.add(loss, t.mean(model.imputation_forward(t, codes)));
    };
    auto params = collect({"tower.", "ppnet.", "imputation."});
    {
      Tape t;
      ForwardOutputs o = model.forward(t, codes);
      Tensor loss = t.add(t.mean(t.bce_elem(o.ctr_prob, click_t)),
                          t.mean(t.bce_elem(o.cvr_prob, conv_t)));
      t.backward(t.add(loss, t.mean(model.imputation_forward(t, codes))));
    }
    CHECK(worst_grad_err(params, [&] { return forward().item(); }) < 1e-4);
  }

  SUBCASE("epnet gate network and task embeddings through the gated embedding") {
    auto forward = [&] {
      Tape t;
      Tensor e_task = t.lookup(model.effective_embedding(t, Task::Cvr),
                               offset_codes(model.schema(), codes));
      return t.sum(t.mul(model.epnet_gate(t, Task::Cvr, e_task), e_task));
    };
    auto params = collect({"epnet."});
    {
      Tape t;
      Tensor e_task = t.lookup(model.effective_embedding(t, Task::Cvr),
                               offset_codes(model.schema(), codes));
      t.backward(t.sum(t.mul(model.epnet_gate(t, Task::Cvr, e_task), e_task)));
    }
    CHECK(worst_grad_err(params, [&] { return forward().item(); }) < 1e-4);
  }

  SUBCASE("embedding table, exposure network and adapters through ungated paths") {
    auto forward = [&] {
      Tape t;
      Tensor exp_loss = t.mean(t.bce_elem(model.exposure_forward(t, codes), click_t));
      Tensor e_task = t.lookup(model.effective_embedding(t, Task::Cvr),
                               offset_codes(model.schema(), codes));
      return t.add(exp_loss, t.mean(e_task));
    };
    auto params = collect({"embedding.", "exposure.", "lora.cvr."});
    {
      Tape t;
      Tensor exp_loss = t.mean(t.bce_elem(model.exposure_forward(t, codes), click_t));
      Tensor e_task = t.lookup(model.effective_embedding(t, Task::Cvr),
                               offset_codes(model.schema(), codes));
      t.backward(t.add(exp_loss, t.mean(e_task)));
    }
    CHECK(worst_grad_err(params, [&] { return forward().item(); }) < 1e-4);
  }

  SUBCASE("whole graph at once with the personalized network disabled") {
    ModelConfig off = small_config();
    off.task_personalized_network_on = false;
    EgeanModel plain(small_schema(), off, 29);
    auto forward = [&] {
      Tape t;
      ForwardOutputs o = plain.forward(t, codes);
      return t.add(t.mean(t.bce_elem(o.ctr_prob, click_t)),
                   t.mean(t.bce_elem(o.cvr_prob, conv_t)));
    };
    std::vector<Tensor> params;
    for (const auto& [name, t] : plain.params().all())
      if (name.rfind("imputation.", 0) != 0 && name.rfind("exposure.", 0) != 0) {
        Tensor p = t;
        p.zero_grad();
        params.push_back(p);
      }
    {
      Tape t;
      ForwardOutputs o = plain.forward(t, codes);
      t.backward(t.add(t.mean(t.bce_elem(o.ctr_prob, click_t)),
                       t.mean(t.bce_elem(o.cvr_prob, conv_t))));
    }
    CHECK(worst_grad_err(params, [&] { return forward().item(); }) < 1e-4);
  }
}

TEST_CASE("parameter groups document each ablation flag") {
  DatasetSchema schema = small_schema();
  ModelConfig full = small_config();
  EgeanModel model(schema, full, 31);

  auto names = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
  };

  SUBCASE("full model groups") {
    auto pre = names(model.group_param_names(ParamGroup::Pretrain));
    CHECK(std::find(pre.begin(), pre.end(), "embedding.W") != pre.end());
    CHECK(std::count_if(pre.begin(), pre.end(), [](const std::string& n) {
            return n.rfind("exposure.", 0) == 0;
          }) == 4);

    auto ctr = names(model.group_param_names(ParamGroup::Propensity));
    for (const std::string& n : ctr)
      CHECK((n.rfind("lora.ctr.", 0) == 0 || n.rfind("tower.ctr.", 0) == 0 ||
             n.rfind("epnet.task.ctr", 0) == 0 || n.rfind("ppnet.prior.ctr", 0) == 0));

    auto cvr = names(model.group_param_names(ParamGroup::CvrPath));
    CHECK(std::count_if(cvr.begin(), cvr.end(), [](const std::string& n) {
            return n.rfind("epnet.gate.", 0) == 0;
          }) == 4);
    for (const std::string& n : cvr) CHECK(n.find("ctr") == std::string::npos);

    auto imp = names(model.group_param_names(ParamGroup::Imputation));
    for (const std::string& n : imp) CHECK(n.rfind("imputation.", 0) == 0);

    // no group touches the embedding table except pretraining
    for (const auto& group : {ParamGroup::Propensity, ParamGroup::Imputation,
                              ParamGroup::CvrPath}) {
      auto g = model.group_param_names(group);
      CHECK(std::find(g.begin(), g.end(), "embedding.W") == g.end());
    }
  }
  SUBCASE("exposure flag removes pretraining parameters") {
    ModelConfig mc = full;
    mc.exposure_network_on = false;
    EgeanModel off(schema, mc, 31);
    CHECK(off.group_param_names(ParamGroup::Pretrain).empty());
    CHECK_FALSE(off.params().contains("exposure.l0.W"));
  }
  SUBCASE("personalization flag removes adapters and gates") {
    ModelConfig mc = full;
    mc.task_personalized_network_on = false;
    EgeanModel off(schema, mc, 31);
    for (const std::string& n : off.params().names()) {
      CHECK(n.rfind("lora.", 0) != 0);
      CHECK(n.rfind("epnet.", 0) != 0);
      CHECK(n.rfind("ppnet.", 0) != 0);
      CHECK(n.find(".gate") == std::string::npos);
    }
  }
  SUBCASE("metric learning flag changes no parameters") {
    ModelConfig mc = full;
    mc.metric_learning_on = false;
    EgeanModel off(schema, mc, 31);
    CHECK(off.params().names() == model.params().names());
  }
}

TEST_CASE("freeze contract stops gradient flow into the table") {
  EgeanModel model(small_schema(), small_config(), 37);
  model.freeze_embeddings();
  CHECK(model.embeddings_frozen());
  Rng rng(38);
  IndexMatrix codes = random_codes(model.schema(), 4, rng);
  Tape tape;
  ForwardOutputs out = model.forward(tape, codes);
  tape.backward(tape.mean(out.cvr_prob));
  CHECK_FALSE(model.params().at("embedding.W").has_grad());
  // adapters still learn
  CHECK(model.params().at("lora.cvr.A").has_grad());
}

TEST_CASE("checkpoint round trip preserves everything") {
  const char* path = "model_roundtrip.ckpt";
  EgeanModel model(small_schema(), small_config(), 41);
  model.freeze_embeddings();
  save_checkpoint(path, model);
  EgeanModel loaded = load_checkpoint(path);

  CHECK(loaded.config() == model.config());
  CHECK(loaded.embeddings_frozen());
  CHECK(loaded.params().names() == model.params().names());
  for (const auto& [name, t] : model.params().all()) {
    const Tensor& lt = loaded.params().at(name);
    REQUIRE(lt.shape() == t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(lt[i] == t[i]);
  }

  Rng rng(42);
  IndexMatrix codes = random_codes(model.schema(), 6, rng);
  Tape t1, t2;
  ForwardOutputs a = model.forward(t1, codes);
  ForwardOutputs b = loaded.forward(t2, codes);
  for (std::size_t i = 0; i < a.cvr_prob.numel(); ++i) CHECK(a.cvr_prob[i] == b.cvr_prob[i]);
  std::remove(path);

  std::ofstream bad("bad_header.ckpt");
  bad << "NOT-A-CHECKPOINT\n0\n";
  bad.close();
  CHECK_THROWS_AS(load_checkpoint("bad_header.ckpt"), std::runtime_error);
  std::remove("bad_header.ckpt");
}
