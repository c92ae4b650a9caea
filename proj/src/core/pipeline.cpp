#include "modalign/pipeline.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "modalign/error.hpp"
#include "modalign/io.hpp"
#include "modalign/random.hpp"

namespace modalign {

namespace fs = std::filesystem;

namespace {

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    fail(e.code(), "stage '" + name + "': " + e.what());
  } catch (const fs::filesystem_error& e) {
    fail(ErrorCode::Io, "stage '" + name + "': " + e.what());
  }
}

std::string category_name(std::size_t g, std::size_t count) {
  const int width = count <= 1 ? 1 : static_cast<int>(std::to_string(count - 1).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "class_%0*zu", width, g);
  return buf;
}

void add_scaled(std::vector<double>& acc, std::span<const double> v, double scale = 1.0) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * v[i];
}

nlohmann::ordered_json train_config_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["temperature"] = c.temperature;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["optimizer"] = c.optimizer == Optimizer::Adam ? "adam" : "sgd";
  j["symmetric_loss"] = c.symmetric_loss;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.temperature = j.value("temperature", c.temperature);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  const std::string opt = j.value("optimizer", std::string("adam"));
  if (opt == "adam") {
    c.optimizer = Optimizer::Adam;
  } else if (opt == "sgd") {
    c.optimizer = Optimizer::Sgd;
  } else {
    fail(ErrorCode::Format, "optimizer must be adam or sgd");
  }
  c.symmetric_loss = j.value("symmetric_loss", c.symmetric_loss);
  c.validate();
  return c;
}

void write_text(const fs::path& root, const fs::path& rel, std::string_view text,
                std::vector<fs::path>& outputs) {
  write_file_atomic(root / rel, text);
  outputs.push_back(rel);
}

}  // namespace

// ---------------------------------------------------------------- synthetic

void SyntheticSpec::validate() const {
  if (categories < 1 || modalities < 1 || samples_per_class_per_modality < 1 || dim < 1 ||
      descriptions_per_class < 1 || aspects_per_class < 1 || templates_per_class < 1) {
    fail(ErrorCode::InvalidArgument, "synthetic spec counts must all be >= 1");
  }
  for (double v : {class_separation, modality_offset, noise_sigma, aspect_spread}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail(ErrorCode::InvalidArgument, "synthetic spec magnitudes must be finite and >= 0");
    }
  }
}

std::string modality_name(std::size_t index) {
  static const char* kNames[] = {"image", "event", "audio", "point", "thermal", "video"};
  if (index < std::size(kNames)) return kNames[index];
  return "modality" + std::to_string(index);
}

SyntheticBundle generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t dim = spec.dim;
  const double noise_sd = spec.noise_sigma / std::sqrt(static_cast<double>(dim));

  auto scaled_unit = [&](Rng& rng, double scale) {
    auto v = random_unit_vector(rng, dim);
    for (double& x : v) x *= scale;
    return v;
  };
  auto noisy = [&](Rng& rng, std::vector<double> base) {
    add_scaled(base, gaussian_vector(rng, dim, noise_sd));
    return base;
  };
  auto unit = [](std::vector<double> v) {
    normalize_in_place(v);
    return v;
  };

  std::vector<std::vector<double>> class_centers;
  {
    Rng rng(derive_seed(spec.seed, "class-centers"));
    for (std::size_t g = 0; g < spec.categories; ++g) {
      class_centers.push_back(scaled_unit(rng, spec.class_separation));
    }
  }
  std::vector<std::vector<std::vector<double>>> aspects(spec.categories);
  {
    Rng rng(derive_seed(spec.seed, "aspects"));
    for (auto& per_class : aspects) {
      for (std::size_t a = 0; a < spec.aspects_per_class; ++a) {
        per_class.push_back(scaled_unit(rng, spec.aspect_spread));
      }
    }
  }
  // Class center plus one aspect chosen at random.
  auto class_point = [&](Rng& rng, std::size_t g) {
    std::uniform_int_distribution<std::size_t> pick(0, spec.aspects_per_class - 1);
    auto p = class_centers[g];
    add_scaled(p, aspects[g][pick(rng)]);
    return p;
  };

  SyntheticBundle bundle;
  std::vector<std::string> names;
  for (std::size_t g = 0; g < spec.categories; ++g) names.push_back(category_name(g, spec.categories));

  for (std::size_t g = 0; g < spec.categories; ++g) {
    Rng rng(derive_seed(spec.seed, "llm-descriptions", g));
    for (std::size_t n = 0; n < spec.descriptions_per_class; ++n) {
      KnowledgeRecord rec;
      rec.id = names[g] + "/llm/" + std::to_string(n);
      rec.category = names[g];
      rec.description = "synthetic description " + std::to_string(n) + " of " + names[g];
      rec.source = Source::LlmCategory;
      rec.generator = "synthetic";
      bundle.records.push_back(std::move(rec));
      bundle.text_embeddings.append_row(unit(noisy(rng, class_point(rng, g))));
    }
  }

  {
    Rng rng(derive_seed(spec.seed, "prompts"));
    for (std::size_t g = 0; g < spec.categories; ++g) {
      bundle.prompts.append_row(unit(noisy(rng, class_centers[g])), names[g]);
    }
  }
  for (std::size_t g = 0; g < spec.categories; ++g) {
    Rng rng(derive_seed(spec.seed, "templates", g));
    for (std::size_t t = 0; t < spec.templates_per_class; ++t) {
      bundle.templates.append_row(unit(noisy(rng, class_centers[g])), names[g]);
    }
  }

  for (std::size_t m = 0; m < spec.modalities; ++m) {
    SyntheticModality mod;
    mod.name = modality_name(m);
    Rng offset_rng(derive_seed(spec.seed, "modality-offset", m));
    const auto offset = scaled_unit(offset_rng, spec.modality_offset);
    Rng rng(derive_seed(spec.seed, "samples", m));
    for (const bool is_train : {true, false}) {
      ModalitySplit& split = is_train ? mod.train : mod.test;
      for (std::size_t g = 0; g < spec.categories; ++g) {
        for (std::size_t i = 0; i < spec.samples_per_class_per_modality; ++i) {
          const auto latent = noisy(rng, class_point(rng, g));
          auto view = noisy(rng, latent);
          add_scaled(view, offset);
          const std::string id =
              mod.name + (is_train ? "/train/" : "/test/") + names[g] + "/" + std::to_string(i);
          split.visual.append_row(unit(std::move(view)), id);
          split.categories.push_back(names[g]);
          if (is_train) {
            KnowledgeRecord rec;
            rec.id = id;
            rec.category = names[g];
            rec.description = "synthetic " + mod.name + " sample " + std::to_string(i) + " of " +
                              names[g];
            rec.source = Source::MllmData;
            rec.generator = "synthetic";
            bundle.records.push_back(std::move(rec));
            bundle.text_embeddings.append_row(unit(noisy(rng, latent)));
          }
        }
      }
    }
    bundle.modalities.push_back(std::move(mod));
  }
  return bundle;
}

void write_bundle(const SyntheticBundle& bundle, const fs::path& dir, const TrainConfig& train,
                  std::size_t k) {
  fs::create_directories(dir);
  write_file_atomic(dir / "records.jsonl", records_to_jsonl(bundle.records));
  write_ubem_file(dir / "text.ubem", bundle.text_embeddings);
  write_ubem_file(dir / "prompts.ubem", bundle.prompts);
  write_ubem_file(dir / "templates.ubem", bundle.templates);

  nlohmann::ordered_json config;
  config["kb"] = {{"records", "records.jsonl"}, {"embeddings", "text.ubem"}};
  config["prompts"] = "prompts.ubem";
  config["templates"] = "templates.ubem";
  config["k"] = k;
  config["source_filter"] = "both";
  config["train"] = train_config_json(train);
  config["recall_ks"] = {1, 5, 10, 20};
  auto& mods = config["modalities"] = nlohmann::ordered_json::array();
  for (const auto& mod : bundle.modalities) {
    write_ubem_file(dir / (mod.name + "_train.ubem"), mod.train.visual);
    write_file_atomic(dir / (mod.name + "_pairs.jsonl"), pairs_to_jsonl(mod.train.visual.labels()));
    write_ubem_file(dir / (mod.name + "_test.ubem"), mod.test.visual);
    std::vector<LabelEntry> labels;
    for (std::size_t r = 0; r < mod.test.visual.rows(); ++r) {
      labels.push_back({mod.test.visual.label(r), mod.test.categories[r]});
    }
    write_file_atomic(dir / (mod.name + "_test_labels.jsonl"), labels_to_jsonl(labels));
    nlohmann::ordered_json entry;
    entry["name"] = mod.name;
    entry["train_visual"] = mod.name + "_train.ubem";
    entry["pairs"] = mod.name + "_pairs.jsonl";
    entry["test_visual"] = mod.name + "_test.ubem";
    entry["test_labels"] = mod.name + "_test_labels.jsonl";
    mods.push_back(std::move(entry));
  }
  write_file_atomic(dir / "pipeline.json", config.dump(2) + "\n");
}

// -------------------------------------------------------------- diagnostics

AlignmentDiagnostics diagnostics(const std::vector<LabeledEmbeddings>& modalities) {
  if (modalities.size() < 2) {
    fail(ErrorCode::InsufficientSamples, "diagnostics need at least two modalities");
  }
  const std::size_t dim = modalities.front().embeddings->dim();
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    const auto& mod = modalities[m];
    if (mod.embeddings->dim() != dim) {
      fail(ErrorCode::DimensionMismatch, "modalities must share one embedding dimension");
    }
    if (mod.categories->size() != mod.embeddings->rows()) {
      fail(ErrorCode::CountMismatch, "each embedding row needs a category");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& c : *mod.categories) ++counts[c];
    for (const auto& [category, n] : counts) {
      if (n < 2) {
        fail(ErrorCode::InsufficientSamples, "modality " + std::to_string(m) + " has " +
                                                 std::to_string(n) + " sample(s) of '" + category +
                                                 "'");
      }
    }
  }

  AlignmentDiagnostics d;
  double same_sum = 0.0;
  double cross_sum = 0.0;
  for (std::size_t a = 0; a < modalities.size(); ++a) {
    const auto& ea = *modalities[a].embeddings;
    const auto& ca = *modalities[a].categories;
    for (std::size_t b = a; b < modalities.size(); ++b) {
      const auto& eb = *modalities[b].embeddings;
      const auto& cb = *modalities[b].categories;
      for (std::size_t i = 0; i < ea.rows(); ++i) {
        for (std::size_t j = (a == b ? i + 1 : 0); j < eb.rows(); ++j) {
          if (ca[i] != cb[j]) continue;
          const double c = cosine(ea.row(i), eb.row(j));
          if (a == b) {
            same_sum += c;
            ++d.same_modal_pairs;
          } else {
            cross_sum += c;
            ++d.cross_modal_pairs;
          }
        }
      }
    }
  }
  if (d.cross_modal_pairs == 0 || d.same_modal_pairs == 0) {
    fail(ErrorCode::InsufficientSamples, "no same-class pairs across modalities");
  }
  d.intra_class_same_modal_cosine = same_sum / static_cast<double>(d.same_modal_pairs);
  d.intra_class_cross_modal_cosine = cross_sum / static_cast<double>(d.cross_modal_pairs);
  d.modality_gap = d.intra_class_same_modal_cosine - d.intra_class_cross_modal_cosine;
  return d;
}

nlohmann::ordered_json to_json(const AlignmentDiagnostics& d) {
  nlohmann::ordered_json j;
  j["kind"] = "alignment_diagnostics";
  j["note"] =
      "modality_gap = mean same-modality minus mean cross-modality cosine over same-class pairs; "
      "a desk-scale quantification chosen by this tool";
  j["intra_class_cross_modal_cosine"] = d.intra_class_cross_modal_cosine;
  j["intra_class_same_modal_cosine"] = d.intra_class_same_modal_cosine;
  j["modality_gap"] = d.modality_gap;
  j["cross_modal_pairs"] = d.cross_modal_pairs;
  j["same_modal_pairs"] = d.same_modal_pairs;
  return j;
}

DenseMatrix pca_2d(const std::vector<const EmbeddingMatrix*>& blocks) {
  std::size_t rows = 0;
  const std::size_t dim = blocks.empty() ? 0 : blocks.front()->dim();
  for (const auto* b : blocks) {
    if (b->dim() != dim) fail(ErrorCode::DimensionMismatch, "projection blocks differ in dim");
    rows += b->rows();
  }
  if (rows == 0 || dim == 0) fail(ErrorCode::InsufficientSamples, "nothing to project");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  Eigen::Index r = 0;
  for (const auto* b : blocks) {
    for (std::size_t i = 0; i < b->rows(); ++i, ++r) {
      auto row = b->row(i);
      for (std::size_t c = 0; c < dim; ++c) x(r, static_cast<Eigen::Index>(c)) = row[c];
    }
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(rows);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);

  DenseMatrix out{rows, 2, std::vector<double>(rows * 2, 0.0)};
  const Eigen::Index n = solver.eigenvectors().cols();
  for (Eigen::Index comp = 0; comp < std::min<Eigen::Index>(2, n); ++comp) {
    Eigen::VectorXd v = solver.eigenvectors().col(n - 1 - comp);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0) v = -v;  // fixed sign for reproducible output
    const Eigen::VectorXd proj = x * v;
    for (std::size_t i = 0; i < rows; ++i) {
      out.at(i, static_cast<std::size_t>(comp)) = proj(static_cast<Eigen::Index>(i));
    }
  }
  return out;
}

// ----------------------------------------------------------------- pipeline

PipelineConfig PipelineConfig::load(const fs::path& path) {
  return run_stage("config", [&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Format, path.string() + ": " + e.what());
    }
    const fs::path base = path.parent_path();
    auto resolve = [&](const nlohmann::json& v) {
      fs::path p = v.get<std::string>();
      return p.is_absolute() ? p : base / p;
    };
    PipelineConfig c;
    try {
      c.kb_records = resolve(j.at("kb").at("records"));
      c.kb_embeddings = resolve(j.at("kb").at("embeddings"));
      c.prompts = resolve(j.at("prompts"));
      if (j.contains("templates") && !j["templates"].is_null()) c.templates = resolve(j["templates"]);
      c.k = j.value("k", kDefaultCenterSize);
      const std::string filter = j.value("source_filter", std::string("both"));
      if (filter != "both") {
        c.source_filter = parse_source(filter);
        if (!c.source_filter) fail(ErrorCode::Format, "source_filter must be both|llm_category|mllm_data");
      }
      if (j.contains("train")) c.train = train_config_from_json(j["train"]);
      if (j.contains("recall_ks")) c.recall_ks = j["recall_ks"].get<std::vector<std::size_t>>();
      c.dump_projection = j.value("dump_projection", false);
      for (const auto& m : j.at("modalities")) {
        c.modalities.push_back({m.at("name").get<std::string>(), resolve(m.at("train_visual")),
                                resolve(m.at("pairs")), resolve(m.at("test_visual")),
                                resolve(m.at("test_labels"))});
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Format, path.string() + ": " + e.what());
    }
    return c;
  });
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["k"] = k;
  j["source_filter"] = source_filter ? std::string(source_name(*source_filter)) : "both";
  j["train"] = train_config_json(train);
  j["recall_ks"] = recall_ks;
  auto& mods = j["modalities"] = nlohmann::ordered_json::array();
  for (const auto& m : modalities) mods.push_back(m.name);
  return j;
}

void PipelineConfig::validate() const {
  run_stage("config", [&] {
    std::vector<fs::path> inputs{kb_records, kb_embeddings, prompts};
    if (templates) inputs.push_back(*templates);
    for (const auto& m : modalities) {
      inputs.insert(inputs.end(), {m.train_visual, m.pairs, m.test_visual, m.test_labels});
    }
    for (const auto& p : inputs) {
      if (!fs::is_regular_file(p)) fail(ErrorCode::Io, "missing input file " + p.string());
    }
    if (modalities.empty()) fail(ErrorCode::InvalidArgument, "no modalities configured");
    std::set<std::string> names;
    for (const auto& m : modalities) {
      if (m.name.empty() || !names.insert(m.name).second) {
        fail(ErrorCode::InvalidArgument, "modality names must be unique and non-empty");
      }
    }
    if (k < 1) fail(ErrorCode::InvalidArgument, "k must be >= 1");
    if (recall_ks.empty() || !std::is_sorted(recall_ks.begin(), recall_ks.end()) ||
        recall_ks.front() == 0) {
      fail(ErrorCode::InvalidArgument, "recall_ks must be ascending and >= 1");
    }
    train.validate();

    const auto text_dim = read_ubem_header(kb_embeddings).dim;
    if (read_ubem_header(prompts).dim != text_dim) {
      fail(ErrorCode::DimensionMismatch, "prompt embeddings do not match the KB dimension");
    }
    if (templates && read_ubem_header(*templates).dim != text_dim) {
      fail(ErrorCode::DimensionMismatch, "template embeddings do not match the KB dimension");
    }
    for (const auto& m : modalities) {
      if (read_ubem_header(m.train_visual).dim != read_ubem_header(m.test_visual).dim) {
        fail(ErrorCode::DimensionMismatch, "modality '" + m.name + "' train/test dims differ");
      }
    }
  });
}

PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& out_dir) {
  config.validate();
  PipelineResult result;
  auto& outputs = result.outputs;

  const KnowledgeBase kb = run_stage("kb build", [&] {
    auto kb = KnowledgeBase::build(config.kb_records, config.kb_embeddings);
    kb.save(out_dir / "kb");
    return kb;
  });
  outputs.push_back(fs::path("kb") / KnowledgeBase::kRecordsFile);
  outputs.push_back(fs::path("kb") / KnowledgeBase::kEmbeddingsFile);

  const CenterSet centers = run_stage("centers localize", [&] {
    auto prompts = prompt_embeddings_from_matrix(read_ubem_file(config.prompts));
    auto set = localize(kb, prompts, config.k, config.source_filter);
    write_center_set(out_dir / "centers.centers", set);
    return set;
  });
  outputs.push_back("centers.centers");

  const PromptSets prompt_sets = run_stage("prompt sets", [&] {
    return config.templates ? prompt_sets_from_matrix(read_ubem_file(*config.templates))
                            : prompt_sets_from_centers(centers);
  });

  struct LoadedModality {
    std::string name;
    EmbeddingMatrix test_raw;
    EmbeddingMatrix test_adapted;
    std::vector<std::string> test_categories;
  };
  std::vector<LoadedModality> loaded;

  for (const auto& m : config.modalities) {
    LoadedModality lm;
    lm.name = m.name;
    run_stage("train[" + m.name + "]", [&] {
      const auto train_visual = read_ubem_file(m.train_visual);
      const auto ids = read_pairs_jsonl(m.pairs);
      const auto pairs = make_training_pairs(kb, train_visual, ids);
      TrainConfig cfg = config.train;
      cfg.seed = derive_seed(config.train.seed, "train:" + m.name);
      auto trained = train(pairs, kb, cfg);
      trained.adapter.modality = m.name;
      const fs::path rel = fs::path("adapters") / (m.name + ".adapter");
      write_adapter(out_dir / rel, trained.adapter);
      outputs.push_back(rel);

      nlohmann::ordered_json report;
      report["kind"] = "training";
      report["modality"] = m.name;
      report["pairs"] = pairs.size();
      report["config"] = train_config_json(cfg);
      report["loss_history"] = trained.loss_history;
      write_text(out_dir, fs::path("reports") / ("train_" + m.name + ".json"), dump_report(report),
                 outputs);
      result.loss_history[m.name] = trained.loss_history;

      lm.test_raw = read_ubem_file(m.test_visual);
      lm.test_categories = categories_for_rows(lm.test_raw, read_labels_jsonl(m.test_labels));
      lm.test_adapted = apply(trained.adapter, lm.test_raw);
    });
    loaded.push_back(std::move(lm));
  }

  run_stage("eval zeroshot", [&] {
    for (const auto& lm : loaded) {
      for (const bool post : {false, true}) {
        const auto& queries = post ? lm.test_adapted : lm.test_raw;
        if (queries.dim() != centers.dim()) continue;  // raw space differs from text space
        const std::string phase = post ? "post" : "pre";
        const EvalReport reports[] = {
            evaluate_classification(queries, lm.test_categories, centers),
            evaluate_classification(queries, lm.test_categories, prompt_sets)};
        for (const auto& r : reports) {
          const std::string mode(scoring_mode_name(r.mode));
          auto j = to_json(r);
          j["modality"] = lm.name;
          j["phase"] = phase;
          write_text(out_dir, fs::path("reports") / ("zeroshot_" + lm.name + "_" + mode + "_" + phase + ".json"),
                     dump_report(j), outputs);
          result.accuracy[lm.name + "/" + mode + "/" + phase] = r.top1_accuracy;
        }
      }
    }
  });

  if (loaded.size() >= 2) {
    run_stage("eval retrieval", [&] {
      const auto& a = loaded[0];
      const auto& b = loaded[1];
      const auto a_to_b =
          class_level_relevance(a.test_raw.labels(), a.test_categories, b.test_raw.labels(),
                                b.test_categories);
      const auto b_to_a =
          class_level_relevance(b.test_raw.labels(), b.test_categories, a.test_raw.labels(),
                                a.test_categories);
      for (const bool post : {false, true}) {
        const auto& qa = post ? a.test_adapted : a.test_raw;
        const auto& qb = post ? b.test_adapted : b.test_raw;
        if (qa.dim() != qb.dim()) continue;
        const std::string phase = post ? "post" : "pre";
        const auto forward =
            evaluate_retrieval(qa, qb, a_to_b, config.recall_ks, RetrievalDirection::AToB);
        const auto backward =
            evaluate_retrieval(qb, qa, b_to_a, config.recall_ks, RetrievalDirection::BToA);
        nlohmann::ordered_json j;
        j["kind"] = "cross_modal_retrieval";
        j["phase"] = phase;
        j["modality_a"] = a.name;
        j["modality_b"] = b.name;
        j["relevance"] = "class_level";
        j["a_to_b"] = to_json(forward);
        j["b_to_a"] = to_json(backward);
        write_text(out_dir, fs::path("reports") / ("retrieval_" + phase + ".json"), dump_report(j),
                   outputs);
        (post ? result.retrieval_after : result.retrieval_before) = forward;
      }
    });

    run_stage("diagnostics", [&] {
      for (const bool post : {false, true}) {
        std::vector<LabeledEmbeddings> mods;
        for (const auto& lm : loaded) {
          mods.push_back({post ? &lm.test_adapted : &lm.test_raw, &lm.test_categories});
        }
        const bool same_dim = std::all_of(mods.begin(), mods.end(), [&](const LabeledEmbeddings& m) {
          return m.embeddings->dim() == mods.front().embeddings->dim();
        });
        if (!same_dim) continue;
        const auto d = diagnostics(mods);
        (post ? result.diagnostics_after : result.diagnostics_before) = d;
        write_text(out_dir, fs::path("reports") / (std::string("diagnostics_") + (post ? "post" : "pre") + ".json"),
                   dump_report(to_json(d)), outputs);
      }
    });
  }

  if (config.dump_projection) {
    run_stage("projection", [&] {
      for (const bool post : {false, true}) {
        std::vector<const EmbeddingMatrix*> blocks;
        for (const auto& lm : loaded) blocks.push_back(post ? &lm.test_adapted : &lm.test_raw);
        const bool same_dim = std::all_of(blocks.begin(), blocks.end(), [&](const EmbeddingMatrix* b) {
          return b->dim() == blocks.front()->dim();
        });
        if (!same_dim) continue;
        const auto coords = pca_2d(blocks);
        std::string csv = "modality,id,category,x,y\n";
        std::size_t row = 0;
        for (const auto& lm : loaded) {
          for (std::size_t i = 0; i < lm.test_raw.rows(); ++i, ++row) {
            char buf[96];
            std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", coords.at(row, 0), coords.at(row, 1));
            csv += lm.name + "," + lm.test_raw.label(i) + "," + lm.test_categories[i] + buf;
          }
        }
        write_text(out_dir, std::string("projection_") + (post ? "post" : "pre") + ".csv", csv, outputs);
      }
    });
  }

  run_stage("manifest", [&] {
    nlohmann::ordered_json manifest;
    manifest["tool"] = "modalign";
    manifest["version"] = kVersion;
    auto settings = config.to_json();
    nlohmann::ordered_json inputs;
    auto hash_input = [&](const std::string& role, const fs::path& p) {
      inputs[role] = {{"file", p.filename().string()}, {"fnv1a64", hex64(fnv1a64(read_file(p)))}};
    };
    hash_input("kb_records", config.kb_records);
    hash_input("kb_embeddings", config.kb_embeddings);
    hash_input("prompts", config.prompts);
    if (config.templates) hash_input("templates", *config.templates);
    for (const auto& m : config.modalities) {
      hash_input(m.name + ".train_visual", m.train_visual);
      hash_input(m.name + ".pairs", m.pairs);
      hash_input(m.name + ".test_visual", m.test_visual);
      hash_input(m.name + ".test_labels", m.test_labels);
    }
    manifest["config_hash"] = hex64(fnv1a64(settings.dump() + inputs.dump()));
    manifest["config"] = std::move(settings);
    manifest["inputs"] = std::move(inputs);
    auto& outs = manifest["outputs"] = nlohmann::ordered_json::array();
    for (const auto& rel : outputs) {
      outs.push_back({{"path", rel.generic_string()},
                      {"fnv1a64", hex64(fnv1a64(read_file(out_dir / rel)))}});
    }
    write_file_atomic(out_dir / "manifest.json", dump_report(manifest));
  });
  outputs.push_back("manifest.json");
  return result;
}

}  // namespace modalign
