#include "egean/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "egean/optim.hpp"
#include "egean/rng.hpp"
#include "egean/synthetic.hpp"

namespace egean {

std::string cvr_estimator_name(CvrEstimatorKind k) {
  switch (k) {
    case CvrEstimatorKind::Pvdr: return "pvdr";
    case CvrEstimatorKind::Naive: return "naive";
    case CvrEstimatorKind::Dr: return "dr";
  }
  throw std::logic_error("cvr_estimator_name: unknown kind");
}

CvrEstimatorKind cvr_estimator_from_name(const std::string& name) {
  if (name == "pvdr") return CvrEstimatorKind::Pvdr;
  if (name == "naive") return CvrEstimatorKind::Naive;
  if (name == "dr") return CvrEstimatorKind::Dr;
  throw std::invalid_argument("unknown cvr estimator: " + name);
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("TrainConfig: lambda must lie in [0, 1]");
  for (double w : {w_ctr, w_cvr, w_imp, alpha_mmd, gamma_steady})
    if (w < 0.0) throw std::invalid_argument("TrainConfig: loss weights must be nonnegative");
  if (learning_rate <= 0.0)
    throw std::invalid_argument("TrainConfig: learning rate must be positive");
}

// ---------------------------------------------------------------------------
// truth sidecar

void save_truth_sidecar(const std::string& path, const TruthSidecar& truth) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_truth_sidecar: cannot open " + path);
  out << "pair_id,p_true,q_true,r_true\n";
  char buf[160];
  for (std::size_t i = 0; i < truth.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%g\n", i, truth.p_true[i],
                  truth.q_true[i], truth.r_true[i]);
    out << buf;
  }
}

TruthSidecar load_truth_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_truth_sidecar: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("pair_id,", 0) != 0)
    throw std::runtime_error("load_truth_sidecar: bad header in " + path);
  TruthSidecar t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t id = 0;
    double p = 0, q = 0, r = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf", &id, &p, &q, &r) != 4)
      throw std::runtime_error("load_truth_sidecar: malformed line '" + line + "'");
    t.p_true.push_back(p);
    t.q_true.push_back(q);
    t.r_true.push_back(r);
  }
  return t;
}

// ---------------------------------------------------------------------------
// helpers

namespace {

std::vector<std::size_t> clicked_rows(const Batch& b) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b.click[i] != 0.0) out.push_back(i);
  return out;
}

Tensor column_tensor(const std::vector<double>& v) {
  return Tensor::from_values({v.size(), 1}, v);
}

double floored(double p, ClampCounter& clamp) {
  if (p < kPropensityFloor) {
    clamp.events += 1;
    return kPropensityFloor;
  }
  return p;
}

SampleMatrix to_sample_matrix(const Tensor& t) {
  SampleMatrix m;
  m.n = t.rows();
  m.d = t.cols();
  m.values.assign(t.values().begin(), t.values().end());
  return m;
}

void check_finite(double v, const char* what, std::size_t epoch, std::size_t batch,
                  std::uint64_t clamp_events) {
  if (std::isfinite(v)) return;
  std::ostringstream msg;
  msg << "non-finite " << what << " at epoch " << epoch << ", batch " << batch
      << " (clamp events so far: " << clamp_events << ")";
  throw NumericAbortError(msg.str());
}

}  // namespace

std::vector<Batch> make_sequential_batches(const std::vector<InteractionRecord>& records,
                                           std::size_t batch_size) {
  std::vector<Batch> out;
  if (records.empty()) return out;
  const std::size_t f_count = records.front().codes.size();
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, records.size() - start);
    Batch b;
    b.codes.rows = count;
    b.codes.cols = f_count;
    b.codes.idx.resize(count * f_count);
    b.click.resize(count);
    b.conversion.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
      const InteractionRecord& r = records[start + k];
      for (std::size_t f = 0; f < f_count; ++f) b.codes.idx[k * f_count + f] = r.codes[f];
      b.click[k] = r.click;
      b.conversion[k] = r.conversion;
    }
    out.push_back(std::move(b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// stage 1: exposure pretraining

PretrainReport pretrain_exposure(EgeanModel& model, const Dataset& data,
                                 const TrainConfig& config) {
  config.validate();
  if (!model.config().exposure_network_on)
    throw std::logic_error("pretrain_exposure: exposure network is disabled");

  AdamConfig ac;
  ac.learning_rate = config.learning_rate;
  ac.weight_decay = config.weight_decay;
  AdamOptimizer opt(model.group_params(ParamGroup::Pretrain), ac);

  PretrainReport report;
  const Rng base(config.seed);
  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    const std::uint64_t shuffle_seed = base.derive("pretrain-shuffle").derive(epoch).seed();
    Rng neg_rng = base.derive("pretrain-negatives").derive(epoch);
    double loss_sum = 0.0;
    std::size_t batch_count = 0;
    for (const Batch& batch : make_batches(data.records, config.batch_size, shuffle_seed)) {
      if (batch.size() < 2) continue;
      ExposureBatch exp = in_batch_negatives(data.schema, batch, neg_rng);
      report.skipped_negatives += exp.skipped_collisions;
      Tape tape;
      Tensor probs = model.exposure_forward(tape, exp.codes);
      Tensor labels = column_tensor(exp.exposure);
      Tensor loss = tape.mean(tape.bce_elem(probs, labels));
      check_finite(loss.item(), "exposure loss", epoch, batch_count, 0);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      loss_sum += loss.item();
      batch_count += 1;
    }
    report.epoch_loss.push_back(batch_count ? loss_sum / double(batch_count) : 0.0);
  }
  model.freeze_embeddings();
  return report;
}

// ---------------------------------------------------------------------------
// stage 2: cyclic multi-task finetuning

namespace {

struct SnapshotInputs {
  Batch batch;  // deterministic leading slice of the dataset
};

struct Snapshot {
  double ctr_loss = 0.0;
  double cvr_loss = 0.0;
  double imputation_loss = 0.0;
  double mmd2 = 0.0;
  double residual = 0.0;
};

// One gradient-free pass over the metric subset. The MMD uses the default
// kernel (median-heuristic bandwidth over the pooled snapshot samples).
Snapshot take_snapshot(EgeanModel& model, const SnapshotInputs& in, const TrainConfig& cfg,
                       ClampCounter& clamp) {
  Snapshot s;
  Tape tape;
  const Batch& b = in.batch;
  ForwardOutputs out = model.forward(tape, b.codes);
  Tensor e_hat_t = model.imputation_forward(tape, b.codes);

  EstimatorBatch eb;
  eb.o = b.click;
  eb.p_hat.resize(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) eb.p_hat[i] = floored(out.ctr_prob[i], clamp);
  eb.r = b.conversion;
  eb.r_mask.assign(b.size(), 0);
  for (std::size_t i = 0; i < b.size(); ++i) eb.r_mask[i] = b.click[i] != 0.0 ? 1 : 0;
  eb.r_hat.resize(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) eb.r_hat[i] = out.cvr_prob[i];
  eb.e_hat.resize(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) eb.e_hat[i] = e_hat_t[i];
  eb.compute_errors();

  double ce = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) ce += ce_delta(b.click[i], out.ctr_prob[i]);
  s.ctr_loss = ce / double(b.size());
  s.imputation_loss = imputation_training_loss(eb, &clamp);
  s.residual = steady_state_residual(eb, cfg.lambda, &clamp);

  const std::vector<std::size_t> clicked = clicked_rows(b);
  if (!clicked.empty()) {
    switch (cfg.cvr_estimator) {
      case CvrEstimatorKind::Pvdr: s.cvr_loss = pvdr_loss(eb, cfg.lambda, &clamp); break;
      case CvrEstimatorKind::Naive: s.cvr_loss = naive_loss(eb, &clamp); break;
      case CvrEstimatorKind::Dr: s.cvr_loss = dr_loss(eb, &clamp); break;
    }
    SampleMatrix set1;
    set1.n = clicked.size();
    set1.d = out.cvr_embeddings.cols();
    set1.values.reserve(set1.n * set1.d);
    for (std::size_t row : clicked) {
      auto vals = out.cvr_embeddings.values();
      set1.values.insert(set1.values.end(), vals.begin() + row * set1.d,
                         vals.begin() + (row + 1) * set1.d);
    }
    SampleMatrix set2 = to_sample_matrix(out.shared_embeddings);
    s.mmd2 = mmd2(set1, set2, KernelSpec::rbf_median());
  }
  return s;
}

}  // namespace

MetricsReport finetune_multitask(EgeanModel& model, const Dataset& data,
                                 const TrainConfig& config) {
  config.validate();
  model.freeze_embeddings();  // W never moves in stage 2

  AdamConfig ac;
  ac.learning_rate = config.learning_rate;
  ac.weight_decay = config.weight_decay;
  AdamOptimizer opt_ctr(model.group_params(ParamGroup::Propensity), ac);
  AdamOptimizer opt_imp(model.group_params(ParamGroup::Imputation), ac);
  AdamOptimizer opt_cvr(model.group_params(ParamGroup::CvrPath), ac);

  MetricsReport report;
  report.seed = config.seed;
  report.config_hash = config_hash(model.config(), config);
  ClampCounter clamp;

  SnapshotInputs snap_in;
  {
    const std::size_t cap = std::min(config.metric_sample_cap, data.records.size());
    std::vector<InteractionRecord> head(data.records.begin(), data.records.begin() + cap);
    auto batches = make_sequential_batches(head, cap);
    snap_in.batch = batches.at(0);
  }

  {
    Snapshot s0 = take_snapshot(model, snap_in, config, clamp);
    report.epochs.push_back({0, s0.ctr_loss, s0.cvr_loss, s0.imputation_loss, s0.mmd2,
                             s0.residual, clamp.events});
  }

  const Rng base(config.seed);
  const bool mmd_on = model.config().metric_learning_on && config.alpha_mmd > 0.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::uint64_t shuffle_seed =
        base.derive("finetune-shuffle").derive(epoch).seed();
    double ctr_acc = 0.0, cvr_acc = 0.0, imp_acc = 0.0, mmd_acc = 0.0;
    std::size_t batches_seen = 0, cvr_batches = 0;

    for (const Batch& batch : make_batches(data.records, config.batch_size, shuffle_seed)) {
      const std::vector<std::size_t> clicked = clicked_rows(batch);
      const Tensor click_t = column_tensor(batch.click);
      const std::size_t n = batch.size();

      // --- step 1: CTR/propensity parameters -------------------------------
      {
        Tape tape;
        ForwardOutputs out = model.forward(tape, batch.codes);
        Tensor ce = tape.mean(tape.bce_elem(out.ctr_prob, click_t));
        Tensor loss = tape.mul_scalar(ce, config.w_ctr);
        if (config.gamma_steady > 0.0) {
          Tensor e_hat = tape.stop_gradient(model.imputation_forward(tape, batch.codes));
          double e_hat_sum = 0.0;
          std::vector<double> o_e_hat(n);
          for (std::size_t i = 0; i < n; ++i) {
            e_hat_sum += e_hat[i];
            o_e_hat[i] = batch.click[i] * e_hat[i];
          }
          // lambda + (1-lambda)*mean(o/p) - sum(o*e_hat/p)/sum(e_hat)
          Tensor a = tape.mul_scalar(tape.sum(tape.div(click_t, out.ctr_prob)), 1.0 / double(n));
          Tensor bratio = tape.mul_scalar(
              tape.sum(tape.div(column_tensor(o_e_hat), out.ctr_prob)), 1.0 / e_hat_sum);
          Tensor res = tape.sub(
              tape.add_scalar(tape.mul_scalar(a, 1.0 - config.lambda), config.lambda), bratio);
          loss = tape.add(loss, tape.mul_scalar(tape.mul(res, res), config.gamma_steady));
        }
        check_finite(loss.item(), "propensity loss", epoch, batches_seen, clamp.events);
        ctr_acc += ce.item();
        opt_ctr.zero_grad();
        tape.backward(loss);
        opt_ctr.step();
      }

      // --- step 2: imputation parameters -----------------------------------
      if (!clicked.empty()) {
        Tape tape;
        ForwardOutputs out = model.forward(tape, batch.codes);
        Tensor e_hat = model.imputation_forward(tape, batch.codes);
        std::vector<double> weights(n, 0.0);  // o / (p_hat * |D|)
        std::vector<double> e_target(n, 0.0);
        for (std::size_t i : clicked) {
          weights[i] = 1.0 / (floored(out.ctr_prob[i], clamp) * double(n));
          e_target[i] = ce_delta(batch.conversion[i], out.cvr_prob[i]);
        }
        Tensor diff = tape.sub(e_hat, column_tensor(e_target));
        Tensor loss_raw = tape.sum(tape.mul(tape.mul(diff, diff), column_tensor(weights)));
        Tensor loss = tape.mul_scalar(loss_raw, config.w_imp);
        check_finite(loss.item(), "imputation loss", epoch, batches_seen, clamp.events);
        imp_acc += loss_raw.item();
        opt_imp.zero_grad();
        tape.backward(loss);
        opt_imp.step();
      }

      // --- step 3: CVR tower / LoRA / gates ---------------------------------
      if (!clicked.empty()) {
        Tape tape;
        ForwardOutputs out = model.forward(tape, batch.codes);
        std::vector<double> inv_p(clicked.size());
        for (std::size_t k = 0; k < clicked.size(); ++k)
          inv_p[k] = 1.0 / floored(out.ctr_prob[clicked[k]], clamp);

        std::vector<double> conv_clicked(clicked.size());
        for (std::size_t k = 0; k < clicked.size(); ++k)
          conv_clicked[k] = batch.conversion[clicked[k]];
        Tensor e_live =
            tape.bce_elem(tape.select_rows(out.cvr_prob, clicked), column_tensor(conv_clicked));

        Tensor cvr_loss;
        switch (config.cvr_estimator) {
          case CvrEstimatorKind::Pvdr: {
            const double inv_p_sum = std::accumulate(inv_p.begin(), inv_p.end(), 0.0);
            const double denom =
                config.lambda * double(n) + (1.0 - config.lambda) * inv_p_sum;
            cvr_loss = tape.mul_scalar(tape.sum(tape.mul(e_live, column_tensor(inv_p))),
                                       1.0 / denom);
            break;
          }
          case CvrEstimatorKind::Naive:
            cvr_loss = tape.mean(e_live);
            break;
          case CvrEstimatorKind::Dr: {
            Tensor e_hat = model.imputation_forward(tape, batch.codes);
            double e_hat_mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) e_hat_mean += e_hat[i];
            e_hat_mean /= double(n);
            std::vector<double> e_hat_clicked(clicked.size());
            for (std::size_t k = 0; k < clicked.size(); ++k)
              e_hat_clicked[k] = e_hat[clicked[k]];
            Tensor corr = tape.sum(tape.mul(tape.sub(e_live, column_tensor(e_hat_clicked)),
                                            column_tensor(inv_p)));
            cvr_loss = tape.add_scalar(tape.mul_scalar(corr, 1.0 / double(n)), e_hat_mean);
            break;
          }
        }

        Tensor loss = tape.mul_scalar(cvr_loss, config.w_cvr);
        double batch_mmd = 0.0;
        if (mmd_on) {
          Tensor set1 = tape.select_rows(out.cvr_embeddings, clicked);
          const double bw =
              median_heuristic_bandwidth(to_sample_matrix(set1),
                                         to_sample_matrix(out.shared_embeddings));
          Tensor mmd_t = tape.mmd2_rbf(set1, out.shared_embeddings, bw);
          batch_mmd = mmd_t.item();
          loss = tape.add(loss, tape.mul_scalar(mmd_t, config.alpha_mmd));
        }
        check_finite(loss.item(), "cvr loss", epoch, batches_seen, clamp.events);
        cvr_acc += cvr_loss.item();
        mmd_acc += batch_mmd;
        cvr_batches += 1;
        opt_cvr.zero_grad();
        tape.backward(loss);
        opt_cvr.step();
      }

      batches_seen += 1;
    }

    Snapshot s = take_snapshot(model, snap_in, config, clamp);
    EpochTrace trace;
    trace.epoch = epoch;
    trace.ctr_loss = batches_seen ? ctr_acc / double(batches_seen) : 0.0;
    trace.cvr_loss = cvr_batches ? cvr_acc / double(cvr_batches) : 0.0;
    trace.imputation_loss = cvr_batches ? imp_acc / double(cvr_batches) : 0.0;
    trace.mmd2 = s.mmd2;
    trace.steady_state_residual = s.residual;
    trace.clamp_events = clamp.events;
    report.epochs.push_back(trace);
  }

  report.clamp_events = clamp.events;
  return report;
}

// ---------------------------------------------------------------------------
// evaluation

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("auc: scores/labels size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // average ranks over tie groups (1-based)
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (double(i + 1) + double(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  std::size_t positives = 0;
  double pos_rank_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] > 0.5) {
      positives += 1;
      pos_rank_sum += rank[k];
    }
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0)
    throw std::domain_error("auc: undefined with a single class");
  return (pos_rank_sum - double(positives) * double(positives + 1) / 2.0) /
         (double(positives) * double(negatives));
}

void evaluate_into(MetricsReport& report, EgeanModel& model, const Dataset& data,
                   const TruthSidecar* truth, std::size_t batch_size) {
  if (truth && truth->size() != data.records.size())
    throw std::invalid_argument("evaluate: truth sidecar size does not match dataset");
  std::vector<double> ctr, cvr, ctcvr;
  ctr.reserve(data.records.size());
  cvr.reserve(data.records.size());
  ctcvr.reserve(data.records.size());
  for (const Batch& b : make_sequential_batches(data.records, batch_size)) {
    Tape tape;
    ForwardOutputs out = model.forward(tape, b.codes);
    for (std::size_t i = 0; i < b.size(); ++i) {
      ctr.push_back(out.ctr_prob[i]);
      cvr.push_back(out.cvr_prob[i]);
      ctcvr.push_back(out.ctcvr_prob[i]);
    }
  }

  if (truth) {
    report.cvr_auc = auc(cvr, truth->r_true);
    report.cvr_auc_space = "full";
  } else {
    std::vector<double> clicked_scores, clicked_labels;
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      if (data.records[i].click) {
        clicked_scores.push_back(cvr[i]);
        clicked_labels.push_back(data.records[i].conversion);
      }
    }
    report.cvr_auc = auc(clicked_scores, clicked_labels);
    report.cvr_auc_space = "click";
  }
  std::vector<double> conv_labels(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i)
    conv_labels[i] = data.records[i].conversion;
  report.ctcvr_auc = auc(ctcvr, conv_labels);
  report.auc_computed = true;
}

MetricsReport evaluate(EgeanModel& model, const Dataset& data, const TruthSidecar* truth,
                       std::size_t batch_size) {
  MetricsReport report;
  evaluate_into(report, model, data, truth, batch_size);
  return report;
}

void export_embeddings(EgeanModel& model, const Dataset& data, const std::string& path,
                       std::size_t batch_size) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_embeddings: cannot open " + path);
  const std::size_t width = model.embedding_width();
  out << "variant,sample_id,click";
  for (std::size_t c = 0; c < width; ++c) out << ",e" << c;
  out << '\n';

  std::vector<std::vector<double>> shared, personalized;
  for (const Batch& b : make_sequential_batches(data.records, batch_size)) {
    Tape tape;
    ForwardOutputs o = model.forward(tape, b.codes);
    for (std::size_t i = 0; i < b.size(); ++i) {
      shared.emplace_back(o.shared_embeddings.values().begin() + i * width,
                          o.shared_embeddings.values().begin() + (i + 1) * width);
      personalized.emplace_back(o.cvr_embeddings.values().begin() + i * width,
                                o.cvr_embeddings.values().begin() + (i + 1) * width);
    }
  }
  char buf[64];
  auto write_rows = [&](const char* variant, const std::vector<std::vector<double>>& rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out << variant << ',' << i << ',' << int(data.records[i].click);
      for (double v : rows[i]) {
        std::snprintf(buf, sizeof(buf), ",%.17g", v);
        out << buf;
      }
      out << '\n';
    }
  };
  write_rows("shared", shared);
  write_rows("cvr", personalized);
}

// ---------------------------------------------------------------------------
// reports

std::string config_hash(const ModelConfig& mc, const TrainConfig& tc) {
  std::ostringstream s;
  s << "embed_dim=" << mc.embed_dim << ";lora_rank=" << mc.lora_rank
    << ";task_embed_dim=" << mc.task_embed_dim << ";leaky_slope=" << mc.leaky_slope
    << ";en=" << mc.exposure_network_on << ";tpn=" << mc.task_personalized_network_on
    << ";ml=" << mc.metric_learning_on << ";tower=";
  for (std::size_t h : mc.tower_hidden) s << h << '-';
  s << ";exposure=";
  for (std::size_t h : mc.exposure_hidden) s << h << '-';
  s << ";imputation=";
  for (std::size_t h : mc.imputation_hidden) s << h << '-';
  s << ";pretrain_epochs=" << tc.pretrain_epochs << ";epochs=" << tc.epochs
    << ";batch=" << tc.batch_size << ";lr=" << tc.learning_rate
    << ";wd=" << tc.weight_decay << ";lambda=" << tc.lambda << ";w_ctr=" << tc.w_ctr
    << ";w_cvr=" << tc.w_cvr << ";w_imp=" << tc.w_imp << ";alpha_mmd=" << tc.alpha_mmd
    << ";gamma=" << tc.gamma_steady << ";est=" << cvr_estimator_name(tc.cvr_estimator)
    << ";seed=" << tc.seed << ";cap=" << tc.metric_sample_cap;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(s.str())));
  return buf;
}

void write_metrics_json(const std::string& path, const MetricsReport& report) {
  nlohmann::json j;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  j["clamp_events"] = report.clamp_events;
  if (report.auc_computed) {
    j["cvr_auc"] = report.cvr_auc;
    j["cvr_auc_space"] = report.cvr_auc_space;
    j["ctcvr_auc"] = report.ctcvr_auc;
  }
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochTrace& t : report.epochs) {
    nlohmann::json e;
    e["epoch"] = t.epoch;
    e["ctr_loss"] = t.ctr_loss;
    e["cvr_loss"] = t.cvr_loss;
    e["imputation_loss"] = t.imputation_loss;
    e["mmd2"] = t.mmd2;
    e["steady_state_residual"] = t.steady_state_residual;
    e["clamp_events"] = t.clamp_events;
    epochs.push_back(e);
  }
  j["epochs"] = epochs;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_json: cannot open " + path);
  out << j.dump(2) << '\n';
}

void write_trace_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  out << "epoch,ctr_loss,cvr_loss,imputation_loss,mmd2,steady_state_residual,clamp_events\n";
  char buf[320];
  for (const EpochTrace& t : report.epochs) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%llu\n", t.epoch,
                  t.ctr_loss, t.cvr_loss, t.imputation_loss, t.mmd2,
                  t.steady_state_residual,
                  static_cast<unsigned long long>(t.clamp_events));
    out << buf;
  }
}

}  // namespace egean
