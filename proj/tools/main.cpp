// Command-line front end: corpus generation, training, prediction, score
// decoding, evaluation and inspection, each reachable headlessly. Exit codes:
// 0 success, 1 runtime error, 2 usage error.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "formtree/arbor.hpp"
#include "formtree/checkpoint.hpp"
#include "formtree/corpus.hpp"
#include "formtree/kernels.hpp"
#include "formtree/metrics.hpp"
#include "formtree/model.hpp"
#include "formtree/trainer.hpp"

namespace {

using namespace formtree;
using ojson = nlohmann::ordered_json;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

ojson read_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  return ojson::parse(f);
}

// Payload to --out (pretty) or stdout; --json compacts stdout to one line.
void emit_json(const ojson& payload, const std::string& out_path, bool as_json) {
  if (out_path.empty()) {
    std::printf("%s\n", payload.dump(as_json ? -1 : 1).c_str());
    return;
  }
  write_text(out_path, payload.dump(1) + "\n");
  if (as_json)
    std::printf("%s\n", ojson{{"out", out_path}}.dump().c_str());
  else
    std::printf("wrote %s\n", out_path.c_str());
}

template <typename T>
ojson nested(const std::vector<T>& flat, int rows, int cols) {
  ojson out = ojson::array();
  for (int i = 0; i < rows; ++i) {
    ojson row = ojson::array();
    for (int j = 0; j < cols; ++j) row.push_back(flat[static_cast<std::size_t>(i) * cols + j]);
    out.push_back(std::move(row));
  }
  return out;
}

// Workers pull indices from a shared counter and write only their own output
// slot, so results are index-deterministic regardless of scheduling.
template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  jobs = std::min(std::max(jobs, 1), std::max(n, 1));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n && !failed.load(); i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard<std::mutex> g(err_mu);
          if (!err) err = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  for (std::thread& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

std::string dot_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char ch : s) {
    if (ch == '\n') {
      out += "\\n";
      continue;
    }
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out;
}

std::string type_name(const doc::RelationLabelSet& labels, int t) {
  return t >= 0 && t < labels.size() ? labels.name(t) : "?";
}

ojson forest_json(const doc::Document& d, const doc::Forest& f,
                  const doc::RelationLabelSet& labels) {
  const doc::UnifiedLabels ul = doc::labels_from_forest(d, f, labels);
  ojson out;
  out["doc_id"] = d.doc_id;
  out["n"] = d.n_units();
  out["labels"] = {{"parent", ul.parent}, {"rel_type", ul.rel_type}};
  ojson trees = ojson::array();
  for (const doc::HierTree& t : f.trees) {
    ojson nodes = ojson::array();
    for (const doc::HierNode& nd : t.nodes)
      nodes.push_back({{"role", nd.field.role},
                       {"members", nd.field.member_units},
                       {"head", nd.field.head_unit},
                       {"parent", nd.parent},
                       {"rel_type", type_name(labels, nd.rel_type)},
                       {"children", nd.children}});
    trees.push_back(
        {{"kind", doc::tree_kind(t)}, {"malformed", t.malformed}, {"nodes", std::move(nodes)}});
  }
  out["trees"] = std::move(trees);
  return out;
}

std::string forest_dot(const doc::Document& d, const doc::Forest& f,
                       const doc::RelationLabelSet& labels) {
  std::string out = "digraph \"" + dot_escape(d.doc_id) + "\" {\n";
  out += "  rankdir=TB;\n  node [shape=box];\n";
  for (std::size_t ti = 0; ti < f.trees.size(); ++ti) {
    const doc::HierTree& t = f.trees[ti];
    const auto id = [&](int ni) { return "t" + std::to_string(ti) + "_n" + std::to_string(ni); };
    for (std::size_t ni = 0; ni < t.nodes.size(); ++ni) {
      const doc::HierNode& nd = t.nodes[ni];
      std::string text;
      for (const int u : nd.field.member_units) {
        if (!text.empty()) text += ' ';
        text += d.units.at(u).text;
      }
      out += "  " + id(static_cast<int>(ni)) + " [label=\"" +
             dot_escape(nd.field.role + ": " + text) + "\"];\n";
    }
    for (std::size_t ni = 0; ni < t.nodes.size(); ++ni) {
      const doc::HierNode& nd = t.nodes[ni];
      if (nd.parent < 0) continue;
      out += "  " + id(nd.parent) + " -> " + id(static_cast<int>(ni)) + " [label=\"" +
             dot_escape(type_name(labels, nd.rel_type)) + "\"];\n";
    }
  }
  out += "}\n";
  return out;
}

// Checkpoint metadata round trip: train writes the model shape, schema and
// dtype next to the tensors so inference needs no dimension flags.
nlohmann::json model_meta(const nn::ModelConfig& m, const std::vector<std::string>& schema,
                          DType dt) {
  nlohmann::json j;
  j["format"] = "formtree-checkpoint";
  j["dtype"] = dtype_name(dt);
  j["schema"] = schema;
  j["model"] = {{"enc",
                 {{"d_model", m.enc.d_model},
                  {"n_layers", m.enc.n_layers},
                  {"n_heads", m.enc.n_heads},
                  {"d_ffn", m.enc.d_ffn},
                  {"vocab", m.enc.vocab},
                  {"text_dim", m.enc.text_dim},
                  {"kind_dim", m.enc.kind_dim},
                  {"pos_hidden", m.enc.pos_hidden}}},
                {"prop", {{"hidden", m.prop.hidden}, {"k", m.prop.k}}},
                {"dec",
                 {{"n_layers", m.dec.n_layers},
                  {"n_heads", m.dec.n_heads},
                  {"d_ffn", m.dec.d_ffn},
                  {"level_dim", m.dec.level_dim},
                  {"l_max", m.dec.l_max},
                  {"refine_hidden", m.dec.refine_hidden}}}};
  return j;
}

nn::ModelConfig model_from_meta(const nlohmann::json& j) {
  nn::ModelConfig m;
  const nlohmann::json& e = j.at("enc");
  m.enc.d_model = e.at("d_model").get<int>();
  m.enc.n_layers = e.at("n_layers").get<int>();
  m.enc.n_heads = e.at("n_heads").get<int>();
  m.enc.d_ffn = e.at("d_ffn").get<int>();
  m.enc.vocab = e.at("vocab").get<int>();
  m.enc.text_dim = e.at("text_dim").get<int>();
  m.enc.kind_dim = e.at("kind_dim").get<int>();
  m.enc.pos_hidden = e.at("pos_hidden").get<int>();
  const nlohmann::json& p = j.at("prop");
  m.prop.hidden = p.at("hidden").get<int>();
  m.prop.k = p.at("k").get<int>();
  const nlohmann::json& d = j.at("dec");
  m.dec.n_layers = d.at("n_layers").get<int>();
  m.dec.n_heads = d.at("n_heads").get<int>();
  m.dec.d_ffn = d.at("d_ffn").get<int>();
  m.dec.level_dim = d.at("level_dim").get<int>();
  m.dec.l_max = d.at("l_max").get<int>();
  m.dec.refine_hidden = d.at("refine_hidden").get<int>();
  return m;
}

struct LoadedModel {
  nn::ParamStore ps;
  nn::ModelConfig cfg;
  doc::RelationLabelSet labels;
  DType dtype = DType::F32;
};

LoadedModel load_model(const std::string& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  if (!ck.meta.contains("model") || !ck.meta.contains("schema"))
    throw std::runtime_error(path + ": no model metadata; expected a checkpoint written by "
                                    "`formtree train`");
  LoadedModel m;
  m.cfg = model_from_meta(ck.meta.at("model"));
  m.labels = doc::RelationLabelSet::from_names(
      ck.meta.at("schema").get<std::vector<std::string>>());
  m.dtype = dtype_from_name(ck.meta.value("dtype", "f32"));
  {
    const auto bad = nn::validate_model_config(m.cfg);
    if (!bad.empty()) throw std::runtime_error(path + ": invalid model metadata: " + bad.front());
  }
  nn::init_model_params(m.ps, m.cfg, m.labels.size(), m.dtype, 0);
  nn::load_into(m.ps, ck);
  return m;
}

// Predictions reuse the corpus JSON layout but are never assembled strictly:
// eval downgrades malformed predictions instead of rejecting the file.
struct PredictionsFile {
  doc::RelationLabelSet schema;
  std::vector<doc::Document> docs;
  std::vector<doc::UnifiedLabels> labels;
};

PredictionsFile load_predictions(const std::string& path) {
  const ojson root = read_json(path);
  if (!root.contains("schema")) throw std::runtime_error(path + ": missing schema");
  PredictionsFile out;
  out.schema = doc::RelationLabelSet::from_names(root["schema"].get<std::vector<std::string>>());
  std::size_t idx = 0;
  for (const ojson& d : root.value("documents", ojson::array())) {
    const std::string where = path + ": documents[" + std::to_string(idx) + "]";
    doc::Document dd;
    dd.doc_id = d.value("doc_id", "");
    dd.page_width = d.value("page_width", 0.0);
    dd.page_height = d.value("page_height", 0.0);
    for (const ojson& ju : d.value("units", ojson::array())) {
      doc::BasicUnit u;
      u.id = ju.at("id").get<int>();
      u.kind = doc::unit_kind_from_name(ju.at("kind").get<std::string>());
      const auto bb = ju.at("bbox").get<std::vector<double>>();
      if (bb.size() != 4) throw std::runtime_error(where + ": bbox needs 4 numbers");
      u.bbox = {bb[0], bb[1], bb[2], bb[3]};
      u.text = ju.value("text", "");
      dd.units.push_back(std::move(u));
    }
    {
      const auto bad = doc::validate_document(dd);
      if (!bad.empty()) throw std::runtime_error(where + ": " + bad.front());
    }
    const ojson& lbl = d.at("labels");
    doc::UnifiedLabels ul;
    ul.parent = lbl.at("parent").get<std::vector<int>>();
    ul.rel_type = lbl.at("rel_type").get<std::vector<int>>();
    {
      const auto bad = doc::validate_labels(dd.n_units(), ul, out.schema);
      if (!bad.empty()) throw std::runtime_error(where + ".labels: " + bad.front());
    }
    out.docs.push_back(std::move(dd));
    out.labels.push_back(std::move(ul));
    ++idx;
  }
  return out;
}

void add_match(metrics::MatchReport& dst, const metrics::MatchReport& src) {
  dst.micro.tp += src.micro.tp;
  dst.micro.fp += src.micro.fp;
  dst.micro.fn += src.micro.fn;
  for (const auto& [k, v] : src.per_class) {
    metrics::ClassScore& c = dst.per_class[k];
    c.tp += v.tp;
    c.fp += v.fp;
    c.fn += v.fn;
  }
}

// Counts merge exactly; TEDS means recombine weighted by GT tree counts.
metrics::CorpusReport merge_reports(const std::vector<metrics::CorpusReport>& parts) {
  metrics::CorpusReport out;
  std::map<std::string, double> teds_sum;
  double mean_sum = 0;
  int total_trees = 0;
  for (const metrics::CorpusReport& p : parts) {
    out.n_docs += p.n_docs;
    add_match(out.field, p.field);
    add_match(out.tree, p.tree);
    int part_trees = 0;
    for (const auto& [k, cnt] : p.gt_trees_by_kind) {
      out.gt_trees_by_kind[k] += cnt;
      const auto it = p.teds_by_kind.find(k);
      teds_sum[k] += (it == p.teds_by_kind.end() ? 0.0 : it->second) * cnt;
      part_trees += cnt;
    }
    mean_sum += p.mean_teds * part_trees;
    total_trees += part_trees;
  }
  for (const auto& [k, s] : teds_sum) {
    const int cnt = out.gt_trees_by_kind.at(k);
    out.teds_by_kind[k] = cnt ? s / cnt : 0.0;
  }
  out.mean_teds = total_trees ? mean_sum / total_trees : 0.0;
  return out;
}

// ---------- subcommands ----------

struct GenOpts {
  corpus::GenConfig cfg;
  std::string out;
};

int run_gen(const GenOpts& o, bool as_json) {
  const corpus::Corpus c = corpus::generate_corpus(o.cfg);
  corpus::save_corpus(c, o.out);
  const corpus::CorpusStats s = corpus::compute_stats(c);
  if (as_json) {
    const ojson j{{"out", o.out},
                  {"documents", s.n_docs},
                  {"units", s.n_units},
                  {"trees", s.n_trees},
                  {"trees_by_kind", s.trees_by_kind}};
    std::printf("%s\n", j.dump().c_str());
  } else {
    std::printf("%-14s %6d\n", "documents", s.n_docs);
    std::printf("%-14s %6d\n", "units", s.n_units);
    std::printf("%-14s %6d\n", "trees", s.n_trees);
    for (const auto& [k, v] : s.trees_by_kind) std::printf("  %-12s %6d\n", k.c_str(), v);
    std::printf("wrote %s\n", o.out.c_str());
  }
  return 0;
}

struct TrainOpts {
  nn::TrainConfig cfg;
  std::string corpus, out, metrics;
  bool f64 = false;
};

int run_train(const TrainOpts& o, bool as_json) {
  const corpus::Corpus c = corpus::load_corpus(o.corpus);
  nn::TrainConfig cfg = o.cfg;
  cfg.dtype = o.f64 ? DType::F64 : DType::F32;
  std::ofstream metrics;
  if (!o.metrics.empty()) {
    metrics.open(o.metrics, std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot write " + o.metrics);
  }
  {
    // fail on an unwritable checkpoint path before the run, not after
    std::ofstream probe(o.out, std::ios::binary | std::ios::app);
    if (!probe) throw std::runtime_error("cannot write " + o.out);
  }
  const auto on_epoch = [&](const nn::EpochRecord& r) {
    const std::string line = nn::record_json(r);
    if (metrics.is_open()) metrics << line << "\n" << std::flush;
    if (as_json)
      std::printf("%s\n", line.c_str());
    else
      std::printf("epoch %d/%d  loss %.4f  f1_field %.3f  f1_tree %.3f  teds_kvp %.3f  "
                  "teds_cg %.3f  coverage %.3f\n",
                  r.epoch, cfg.epochs, r.loss, r.f1_field, r.f1_tree, r.teds_kvp, r.teds_cg,
                  r.proposal_coverage);
    std::fflush(stdout);
  };
  const nn::TrainResult res = nn::train(c, cfg, on_epoch);
  nlohmann::json meta = model_meta(cfg.model, c.schema.names(), cfg.dtype);
  meta["seed"] = cfg.seed;
  meta["epochs"] = cfg.epochs;
  nn::save_checkpoint(o.out, res.params, meta);
  if (as_json)
    std::printf("%s\n", ojson{{"checkpoint", o.out}, {"tensors", res.params.size()}}.dump().c_str());
  else
    std::printf("wrote %s (%zu tensors)\n", o.out.c_str(), res.params.size());
  return 0;
}

struct PredictOpts {
  std::string ckpt, corpus, out, dot_dir;
  std::string stage = "refined";
  int jobs = 1;
};

int run_predict(const PredictOpts& o, bool as_json) {
  const LoadedModel m = load_model(o.ckpt);
  const corpus::Corpus c = corpus::load_corpus(o.corpus);
  const bool refined = o.stage == "refined";
  const int n = static_cast<int>(c.docs.size());
  corpus::Corpus pred;
  pred.schema = m.labels;
  pred.docs.resize(n);
  parallel_for(n, o.jobs, [&](int i) {
    corpus::LabeledDoc& ld = pred.docs[i];
    ld.doc = c.docs[i].doc;
    ld.gt = nn::predict(ld.doc, m.ps, m.cfg, m.labels, refined);
    ld.labels = doc::labels_from_forest(ld.doc, ld.gt, m.labels);
  });
  corpus::save_corpus(pred, o.out);
  int dots = 0;
  if (!o.dot_dir.empty()) {
    std::filesystem::create_directories(o.dot_dir);
    for (const corpus::LabeledDoc& ld : pred.docs) {
      const std::filesystem::path p =
          std::filesystem::path(o.dot_dir) / (ld.doc.doc_id + ".dot");
      write_text(p.string(), forest_dot(ld.doc, ld.gt, m.labels));
      ++dots;
    }
  }
  if (as_json) {
    ojson j{{"out", o.out}, {"documents", n}, {"stage", o.stage}};
    if (!o.dot_dir.empty()) j["dot_files"] = dots;
    std::printf("%s\n", j.dump().c_str());
  } else {
    std::printf("predicted %d documents (%s stage) -> %s\n", n, o.stage.c_str(), o.out.c_str());
    if (dots) std::printf("wrote %d dot files under %s\n", dots, o.dot_dir.c_str());
  }
  return 0;
}

struct EvalOpts {
  std::string pred, gt;
  int jobs = 1;
};

int run_eval(const EvalOpts& o, bool as_json) {
  const corpus::Corpus gt = corpus::load_corpus(o.gt);
  const PredictionsFile pred = load_predictions(o.pred);

  // prediction type ids remap into the GT schema by name so forests compare
  std::vector<int> remap(pred.schema.size());
  for (int t = 0; t < pred.schema.size(); ++t) {
    remap[t] = gt.schema.find(pred.schema.name(t));
    if (remap[t] < 0)
      throw std::runtime_error(o.pred + ": relation type \"" + pred.schema.name(t) +
                               "\" is not in the ground-truth schema");
  }

  std::map<std::string, int> pred_by_id;
  for (int i = 0; i < static_cast<int>(pred.docs.size()); ++i)
    if (!pred_by_id.emplace(pred.docs[i].doc_id, i).second)
      throw std::runtime_error(o.pred + ": duplicate doc_id " + pred.docs[i].doc_id);
  const int n = static_cast<int>(gt.docs.size());
  if (static_cast<int>(pred.docs.size()) != n)
    throw std::runtime_error(o.pred + " has " + std::to_string(pred.docs.size()) +
                             " documents but " + o.gt + " has " + std::to_string(n));

  std::vector<doc::Forest> pf(n), gf(n);
  std::vector<doc::Document> docs(n);
  for (int i = 0; i < n; ++i) {
    const std::string& id = gt.docs[i].doc.doc_id;
    const auto it = pred_by_id.find(id);
    if (it == pred_by_id.end())
      throw std::runtime_error(o.pred + ": no prediction for document " + id);
    const int pi = it->second;
    if (pred.docs[pi].n_units() != gt.docs[i].doc.n_units())
      throw std::runtime_error(o.pred + ": document " + id + " has " +
                               std::to_string(pred.docs[pi].n_units()) + " units, expected " +
                               std::to_string(gt.docs[i].doc.n_units()));
    doc::UnifiedLabels ul = pred.labels[pi];
    for (int& t : ul.rel_type) t = remap[t];
    try {
      pf[i] = doc::forest_from_labels(gt.docs[i].doc, ul, gt.schema, doc::AssembleMode::Tolerant);
    } catch (const std::exception& ex) {
      throw std::runtime_error(o.pred + ": document " + id + ": " + ex.what());
    }
    gf[i] = gt.docs[i].gt;
    docs[i] = gt.docs[i].doc;
  }

  metrics::CorpusReport rep;
  if (o.jobs <= 1) {
    rep = metrics::corpus_eval(pf, gf, docs);
  } else {
    std::vector<metrics::CorpusReport> parts(n);
    parallel_for(n, o.jobs, [&](int i) {
      parts[i] = metrics::corpus_eval({pf[i]}, {gf[i]}, {docs[i]});
    });
    rep = merge_reports(parts);
  }
  if (as_json)
    std::printf("%s\n", metrics::report_json(rep).c_str());
  else
    std::fputs(metrics::report_table(rep).c_str(), stdout);
  return 0;
}

struct DecodeOpts {
  std::string corpus, scores, out, dot;
  int doc = 0;
  bool oracle = false;
  std::string mode = "logprob";
};

doc::ScoredRelationGraph read_scores(const std::string& path, int n, int n_types) {
  const ojson root = read_json(path);
  const auto R = root.at("R").get<std::vector<std::vector<double>>>();
  const auto C = root.at("C").get<std::vector<std::vector<int>>>();
  if (static_cast<int>(R.size()) != n || static_cast<int>(C.size()) != n)
    throw std::runtime_error(path + ": R has " + std::to_string(R.size()) + " rows, C " +
                             std::to_string(C.size()) + "; the document has " + std::to_string(n) +
                             " units");
  doc::ScoredRelationGraph g;
  g.n = n;
  g.r.resize(static_cast<std::size_t>(n) * n);
  g.c.resize(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(R[i].size()) != n || static_cast<int>(C[i].size()) != n)
      throw std::runtime_error(path + ": row " + std::to_string(i) + " is ragged");
    for (int j = 0; j < n; ++j) {
      if (C[i][j] < 0 || C[i][j] >= n_types)
        throw std::runtime_error(path + ": C[" + std::to_string(i) + "][" + std::to_string(j) +
                                 "] = " + std::to_string(C[i][j]) + " outside the label set");
      g.at_r(i, j) = R[i][j];
      g.at_c(i, j) = C[i][j];
    }
  }
  return g;
}

int run_decode(const DecodeOpts& o, bool as_json) {
  const corpus::Corpus c = corpus::load_corpus(o.corpus);
  if (o.doc < 0 || o.doc >= static_cast<int>(c.docs.size()))
    throw std::runtime_error("--doc " + std::to_string(o.doc) + " out of range; " + o.corpus +
                             " has " + std::to_string(c.docs.size()) + " documents");
  const corpus::LabeledDoc& ld = c.docs[o.doc];
  const doc::ScoredRelationGraph g =
      o.oracle ? doc::one_hot_scores(ld.labels, c.schema)
               : read_scores(o.scores, ld.doc.n_units(), c.schema.size());
  const arbor::WeightMode mode =
      o.mode == "prob" ? arbor::WeightMode::Prob : arbor::WeightMode::LogProb;
  const doc::Forest f = arbor::decode(ld.doc, g, c.schema, mode);
  if (!o.dot.empty()) write_text(o.dot, forest_dot(ld.doc, f, c.schema));
  emit_json(forest_json(ld.doc, f, c.schema), o.out, as_json);
  return 0;
}

struct InspectOpts {
  std::string corpus, ckpt, out;
  int doc = 0;
};

int run_inspect(const InspectOpts& o, bool as_json) {
  const LoadedModel m = load_model(o.ckpt);
  const corpus::Corpus c = corpus::load_corpus(o.corpus);
  if (o.doc < 0 || o.doc >= static_cast<int>(c.docs.size()))
    throw std::runtime_error("--doc " + std::to_string(o.doc) + " out of range; " + o.corpus +
                             " has " + std::to_string(c.docs.size()) + " documents");
  const doc::Document& d = c.docs[o.doc].doc;
  const nn::DocumentScores sc = nn::score_document(d, m.ps, m.cfg, m.labels);
  nn::Tape t(m.dtype);
  nn::ParamBinder pb(t, m.ps);
  const nn::ModelOutput fw = nn::model_forward(t, pb, d, m.cfg, m.labels.size());
  const int n = fw.n;
  const int np = n * fw.k;
  ojson out;
  out["doc_id"] = d.doc_id;
  out["n"] = n;
  out["k"] = fw.k;
  out["R"] = nested(sc.proposal.r, n, n);
  out["C"] = nested(sc.proposal.c, n, n);
  out["refined_R"] = nested(sc.refined.r, n, n);
  out["refined_C"] = nested(sc.refined.c, n, n);
  ojson props = ojson::array();
  for (const nn::RelationProposal& pr : fw.proposals)
    props.push_back(
        {{"child", pr.child}, {"parent", pr.parent}, {"score", pr.score}, {"rank", pr.rank}});
  out["proposals"] = std::move(props);
  out["unit_level"] = fw.levels.unit_level;
  out["proposal_level"] = fw.levels.proposal_level;
  out["self_mask"] = nested(fw.masks.self_mask, np, np);
  out["cross_mask"] = nested(fw.masks.cross_mask, np, n);
  emit_json(out, o.out, as_json);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"form-structure extraction: relation prediction over a unified label space",
               "formtree"};
  app.require_subcommand(0, 1);
  bool as_json = false;
  std::string kernel;
  app.add_flag("--json", as_json, "machine-parseable stdout");
  app.add_option("--kernels", kernel, "force a kernel backend")
      ->check(CLI::IsMember({"scalar", "avx2", "neon"}));
  app.set_config("--config", "", "key=value config file; command-line flags win");

  GenOpts go;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic labeled corpus");
  gen->fallthrough();
  gen->add_option("--out", go.out, "corpus JSON path")->required();
  gen->add_option("--docs,--n-docs", go.cfg.n_docs, "number of documents")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  gen->add_option("--seed", go.cfg.seed, "generator seed")->capture_default_str();
  gen->add_option("--units-min", go.cfg.units_min, "units per document, low")
      ->capture_default_str();
  gen->add_option("--units-max", go.cfg.units_max, "units per document, high")
      ->capture_default_str();
  gen->add_option("--kvps-min", go.cfg.kvps_min, "top-level KVPs, low")->capture_default_str();
  gen->add_option("--kvps-max", go.cfg.kvps_max, "top-level KVPs, high")->capture_default_str();
  gen->add_option("--cgs-min", go.cfg.cgs_min, "top-level choice groups, low")
      ->capture_default_str();
  gen->add_option("--cgs-max", go.cfg.cgs_max, "top-level choice groups, high")
      ->capture_default_str();
  gen->add_option("--entities-min", go.cfg.entities_min, "entities, low")->capture_default_str();
  gen->add_option("--entities-max", go.cfg.entities_max, "entities, high")->capture_default_str();
  gen->add_option("--texts-min", go.cfg.texts_min, "free text blocks, low")
      ->capture_default_str();
  gen->add_option("--texts-max", go.cfg.texts_max, "free text blocks, high")
      ->capture_default_str();
  gen->add_option("--p-nest", go.cfg.p_nest, "nesting probability")->capture_default_str();
  gen->add_option("--max-depth", go.cfg.max_depth, "max nesting depth")->capture_default_str();
  gen->add_option("--jitter", go.cfg.jitter, "bbox jitter in px")->capture_default_str();
  gen->add_option("--page-width", go.cfg.page_width, "page width in px")->capture_default_str();
  gen->add_option("--page-height", go.cfg.page_height, "page height in px")
      ->capture_default_str();
  gen->add_option("--entity-roles", go.cfg.entity_roles, "entity role names")
      ->capture_default_str();
  gen->add_option("--retry-bound", go.cfg.retry_bound, "layout retries per document")
      ->capture_default_str();

  TrainOpts to;
  to.cfg.adam.lr = 1e-3;  // desk-scale from-scratch default; the library default 2e-5 suits fine-tuning schedules
  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  train->fallthrough();
  train->add_option("--corpus", to.corpus, "training corpus JSON")->required();
  train->add_option("--out", to.out, "checkpoint path")->required();
  train->add_option("--metrics", to.metrics, "JSONL per-epoch metrics path");
  train->add_option("--epochs", to.cfg.epochs, "training epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--lr", to.cfg.adam.lr, "peak learning rate")->capture_default_str();
  train->add_option("--weight-decay", to.cfg.adam.weight_decay, "decoupled weight decay")
      ->capture_default_str();
  train->add_option("--warmup-epochs", to.cfg.warmup_epochs, "linear LR warmup span")
      ->capture_default_str();
  train->add_option("--accum", to.cfg.accum, "documents per optimizer step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--ohem-pos", to.cfg.ohem_pos, "hard positives kept per document")
      ->capture_default_str();
  train->add_option("--ohem-neg", to.cfg.ohem_neg, "hard negatives kept per document")
      ->capture_default_str();
  train->add_option("--eval-fraction", to.cfg.eval_fraction,
                    "held-out tail fraction; 0 scores the training split")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  train->add_option("--seed", to.cfg.seed, "shuffle and init seed")->capture_default_str();
  train->add_flag("--f64", to.f64, "train in 64-bit");
  train->add_option("--d-model", to.cfg.model.enc.d_model, "embedding width")
      ->capture_default_str();
  train->add_option("--enc-layers", to.cfg.model.enc.n_layers, "encoder layers")
      ->capture_default_str();
  train->add_option("--enc-heads", to.cfg.model.enc.n_heads, "encoder heads")
      ->capture_default_str();
  train->add_option("--enc-ffn", to.cfg.model.enc.d_ffn, "encoder FFN width")
      ->capture_default_str();
  train->add_option("--vocab", to.cfg.model.enc.vocab, "hashed token rows")
      ->capture_default_str();
  train->add_option("--text-dim", to.cfg.model.enc.text_dim, "text embedding width")
      ->capture_default_str();
  train->add_option("--kind-dim", to.cfg.model.enc.kind_dim, "unit-kind embedding width")
      ->capture_default_str();
  train->add_option("--pos-hidden", to.cfg.model.enc.pos_hidden, "bbox MLP width")
      ->capture_default_str();
  train->add_option("--prop-hidden", to.cfg.model.prop.hidden, "proposer MLP width")
      ->capture_default_str();
  train->add_option("--topk", to.cfg.model.prop.k, "proposals per child")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--dec-layers", to.cfg.model.dec.n_layers, "decoder layers")
      ->capture_default_str();
  train->add_option("--dec-heads", to.cfg.model.dec.n_heads, "decoder heads")
      ->capture_default_str();
  train->add_option("--dec-ffn", to.cfg.model.dec.d_ffn, "decoder FFN width")
      ->capture_default_str();
  train->add_option("--level-dim", to.cfg.model.dec.level_dim, "tree level embedding width")
      ->capture_default_str();
  train->add_option("--l-max", to.cfg.model.dec.l_max, "level clamp depth")
      ->capture_default_str();
  train->add_option("--refine-hidden", to.cfg.model.dec.refine_hidden, "refinement MLP width")
      ->capture_default_str();

  PredictOpts po;
  CLI::App* predict = app.add_subcommand("predict", "decode forests with a trained model");
  predict->fallthrough();
  predict->add_option("--ckpt", po.ckpt, "checkpoint path")->required();
  predict->add_option("--corpus", po.corpus, "documents to predict on")->required();
  predict->add_option("--out", po.out, "predictions JSON (corpus layout, predicted labels)")
      ->required();
  predict->add_option("--stage", po.stage, "decode the proposal or refined graph")
      ->check(CLI::IsMember({"proposal", "refined"}))
      ->capture_default_str();
  predict->add_option("--dot", po.dot_dir, "directory for per-document Graphviz files");
  predict->add_option("--jobs", po.jobs, "parallel document workers")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  EvalOpts eo;
  CLI::App* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->fallthrough();
  eval->add_option("--pred", eo.pred, "predictions JSON")->required();
  eval->add_option("--gt", eo.gt, "ground-truth corpus JSON")->required();
  eval->add_option("--jobs", eo.jobs, "parallel document workers")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  DecodeOpts dopts;
  CLI::App* decode = app.add_subcommand("decode", "model-free decoding of a score matrix");
  decode->fallthrough();
  decode->add_option("--corpus", dopts.corpus, "corpus supplying the document")->required();
  decode->add_option("--doc", dopts.doc, "document index")->capture_default_str();
  CLI::Option* oracle =
      decode->add_flag("--oracle", dopts.oracle, "one-hot scores from the document's labels");
  CLI::Option* scores = decode->add_option(
      "--scores", dopts.scores, "scores JSON {\"R\":[[...]],\"C\":[[...]]} (inspect layout)");
  oracle->excludes(scores);
  scores->excludes(oracle);
  decode->add_option("--out", dopts.out, "forest JSON path (stdout when omitted)");
  decode->add_option("--dot", dopts.dot, "Graphviz DOT path");
  decode->add_option("--mode", dopts.mode, "arborescence weight domain")
      ->check(CLI::IsMember({"logprob", "prob"}))
      ->capture_default_str();
  decode->callback([&dopts] {
    if (!dopts.oracle && dopts.scores.empty()) throw CLI::RequiredError("--oracle or --scores");
  });

  InspectOpts io;
  CLI::App* inspect =
      app.add_subcommand("inspect", "dump scores, proposals, masks and levels for one document");
  inspect->fallthrough();
  inspect->add_option("--corpus", io.corpus, "corpus supplying the document")->required();
  inspect->add_option("--ckpt", io.ckpt, "checkpoint path")->required();
  inspect->add_option("--doc", io.doc, "document index")->capture_default_str();
  inspect->add_option("--out", io.out, "JSON path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!kernel.empty()) kernels::set_active(kernel);
    if (gen->parsed()) return run_gen(go, as_json);
    if (train->parsed()) return run_train(to, as_json);
    if (predict->parsed()) return run_predict(po, as_json);
    if (eval->parsed()) return run_eval(eo, as_json);
    if (decode->parsed()) return run_decode(dopts, as_json);
    if (inspect->parsed()) return run_inspect(io, as_json);
    std::printf("formtree (kernels: %s)\n\n%s", kernels::active().name, app.help().c_str());
    return 0;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "formtree: %s\n", ex.what());
    return 1;
  }
}
