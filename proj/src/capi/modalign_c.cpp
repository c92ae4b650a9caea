#include "modalign/modalign.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <new>
#include <string>

#include "modalign/adapter.hpp"
#include "modalign/centers.hpp"
#include "modalign/datasets.hpp"
#include "modalign/error.hpp"
#include "modalign/eval.hpp"
#include "modalign/io.hpp"
#include "modalign/knowledge_base.hpp"
#include "modalign/pipeline.hpp"

struct ma_matrix {
  modalign::EmbeddingMatrix m;
};
struct ma_kb {
  modalign::KnowledgeBase kb;
};
struct ma_centers {
  modalign::CenterSet set;
};
struct ma_adapter {
  modalign::LinearAdapter adapter;
};

namespace {

thread_local std::string g_last_error;

ma_status to_status(modalign::ErrorCode code) {
  // ErrorCode and ma_status share ordering; the enum values start at 1.
  return static_cast<ma_status>(static_cast<int>(code) + 1);
}

template <typename Fn>
ma_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MA_OK;
  } catch (const modalign::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MA_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return MA_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MA_ERR_INTERNAL;
  }
}

ma_status null_argument(const char* name) {
  g_last_error = std::string("null argument: ") + name;
  return MA_ERR_NULL_ARGUMENT;
}

#define MA_REQUIRE(p) \
  if ((p) == nullptr) return null_argument(#p)

char* copy_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::optional<modalign::Source> to_filter(ma_source_filter f) {
  switch (f) {
    case MA_SOURCE_BOTH:
      return std::nullopt;
    case MA_SOURCE_LLM_CATEGORY:
      return modalign::Source::LlmCategory;
    case MA_SOURCE_MLLM_DATA:
      return modalign::Source::MllmData;
  }
  modalign::fail(modalign::ErrorCode::InvalidArgument, "unknown source filter");
}

modalign::TrainConfig to_config(const ma_train_config& c) {
  modalign::TrainConfig out;
  out.temperature = c.temperature;
  out.learning_rate = c.learning_rate;
  out.batch_size = c.batch_size;
  out.epochs = c.epochs;
  out.seed = c.seed;
  out.optimizer = c.optimizer == MA_OPTIMIZER_SGD ? modalign::Optimizer::Sgd
                                                  : modalign::Optimizer::Adam;
  out.symmetric_loss = c.symmetric_loss != 0;
  out.validate();
  return out;
}

ma_train_config from_config(const modalign::TrainConfig& c) {
  ma_train_config out{};
  out.temperature = c.temperature;
  out.learning_rate = c.learning_rate;
  out.batch_size = c.batch_size;
  out.epochs = c.epochs;
  out.seed = c.seed;
  out.optimizer = c.optimizer == modalign::Optimizer::Sgd ? MA_OPTIMIZER_SGD : MA_OPTIMIZER_ADAM;
  out.symmetric_loss = c.symmetric_loss ? 1 : 0;
  return out;
}

nlohmann::ordered_json center_summary(const modalign::CenterSet& set) {
  nlohmann::ordered_json j;
  j["kind"] = "center_set";
  j["k"] = set.k;
  j["dim"] = set.centers.empty() ? 0 : set.dim();
  auto& cats = j["categories"] = nlohmann::ordered_json::object();
  for (const auto& [name, c] : set.centers) {
    nlohmann::ordered_json entry;
    entry["members"] = c.size();
    entry["best_score"] = c.member_scores.empty() ? 0.0 : c.member_scores.front();
    entry["worst_score"] = c.member_scores.empty() ? 0.0 : c.member_scores.back();
    cats[name] = std::move(entry);
  }
  j["warnings"] = set.warnings;
  return j;
}

}  // namespace

extern "C" {

const char* ma_version(void) { return modalign::kVersion; }

const char* ma_last_error(void) { return g_last_error.c_str(); }

const char* ma_status_name(ma_status status) {
  switch (status) {
    case MA_OK:
      return "Ok";
    case MA_ERR_NULL_ARGUMENT:
      return "NullArgument";
    case MA_ERR_INTERNAL:
      return "Internal";
    default:
      break;
  }
  const int code = static_cast<int>(status) - 1;
  if (code >= 0 && code <= static_cast<int>(modalign::ErrorCode::Numerical)) {
    return modalign::error_code_name(static_cast<modalign::ErrorCode>(code)).data();
  }
  return "Unknown";
}

void ma_string_free(char* s) { std::free(s); }

ma_status ma_matrix_create(size_t rows, size_t dim, const double* data, ma_matrix** out) {
  MA_REQUIRE(out);
  if (rows * dim > 0) MA_REQUIRE(data);
  return guarded([&] {
    std::vector<double> values(data, data + rows * dim);
    *out = new ma_matrix{modalign::EmbeddingMatrix(rows, dim, std::move(values))};
  });
}

ma_status ma_matrix_read(const char* path, ma_matrix** out) {
  MA_REQUIRE(path);
  MA_REQUIRE(out);
  return guarded([&] { *out = new ma_matrix{modalign::read_ubem_file(path)}; });
}

ma_status ma_matrix_write(const ma_matrix* m, const char* path) {
  MA_REQUIRE(m);
  MA_REQUIRE(path);
  return guarded([&] { modalign::write_ubem_file(path, m->m); });
}

size_t ma_matrix_rows(const ma_matrix* m) { return m ? m->m.rows() : 0; }
size_t ma_matrix_dim(const ma_matrix* m) { return m ? m->m.dim() : 0; }
const double* ma_matrix_data(const ma_matrix* m) { return m ? m->m.data().data() : nullptr; }

const char* ma_matrix_label(const ma_matrix* m, size_t row) {
  if (m == nullptr || !m->m.has_labels() || row >= m->m.rows()) return nullptr;
  return m->m.label(row).c_str();
}

ma_status ma_matrix_set_labels(ma_matrix* m, const char* const* labels, size_t count) {
  MA_REQUIRE(m);
  if (count > 0) MA_REQUIRE(labels);
  return guarded([&] {
    std::vector<std::string> out;
    for (size_t i = 0; i < count; ++i) {
      if (labels[i] == nullptr) modalign::fail(modalign::ErrorCode::InvalidArgument, "null label");
      out.emplace_back(labels[i]);
    }
    m->m.set_labels(std::move(out));
  });
}

void ma_matrix_free(ma_matrix* m) { delete m; }

ma_status ma_kb_build(const char* records_path, const char* embeddings_path, ma_kb** out) {
  MA_REQUIRE(records_path);
  MA_REQUIRE(embeddings_path);
  MA_REQUIRE(out);
  return guarded(
      [&] { *out = new ma_kb{modalign::KnowledgeBase::build(records_path, embeddings_path)}; });
}

ma_status ma_kb_load(const char* dir, ma_kb** out) {
  MA_REQUIRE(dir);
  MA_REQUIRE(out);
  return guarded([&] { *out = new ma_kb{modalign::KnowledgeBase::load(dir)}; });
}

ma_status ma_kb_save(const ma_kb* kb, const char* dir) {
  MA_REQUIRE(kb);
  MA_REQUIRE(dir);
  return guarded([&] { kb->kb.save(dir); });
}

size_t ma_kb_size(const ma_kb* kb) { return kb ? kb->kb.size() : 0; }
size_t ma_kb_dim(const ma_kb* kb) { return kb ? kb->kb.dim() : 0; }

ma_status ma_kb_stats_json(const ma_kb* kb, char** out_json) {
  MA_REQUIRE(kb);
  MA_REQUIRE(out_json);
  return guarded([&] {
    const auto stats = kb->kb.stats();
    auto counts = [](const std::map<modalign::Source, std::size_t>& m) {
      nlohmann::ordered_json j;
      for (auto s : {modalign::Source::LlmCategory, modalign::Source::MllmData}) {
        auto it = m.find(s);
        j[std::string(modalign::source_name(s))] = it == m.end() ? 0 : it->second;
      }
      return j;
    };
    nlohmann::ordered_json j;
    j["kind"] = "kb_stats";
    j["records"] = stats.records;
    j["dim"] = stats.dim;
    j["per_source"] = counts(stats.per_source);
    auto& cats = j["per_category"] = nlohmann::ordered_json::object();
    for (const auto& [category, per] : stats.per_category) cats[category] = counts(per);
    *out_json = copy_string(modalign::dump_report(j));
  });
}

void ma_kb_free(ma_kb* kb) { delete kb; }

ma_status ma_centers_localize(const ma_kb* kb, const ma_matrix* prompts, size_t k,
                              ma_source_filter filter, ma_centers** out) {
  MA_REQUIRE(kb);
  MA_REQUIRE(prompts);
  MA_REQUIRE(out);
  return guarded([&] {
    const auto p = modalign::prompt_embeddings_from_matrix(prompts->m);
    *out = new ma_centers{modalign::localize(kb->kb, p, k, to_filter(filter))};
  });
}

ma_status ma_centers_sweep(const ma_kb* kb, const ma_matrix* prompts, const size_t* ks,
                           size_t k_count, ma_source_filter filter, const char* out_dir,
                           char** out_json) {
  MA_REQUIRE(kb);
  MA_REQUIRE(prompts);
  MA_REQUIRE(ks);
  MA_REQUIRE(out_dir);
  return guarded([&] {
    const auto p = modalign::prompt_embeddings_from_matrix(prompts->m);
    const std::vector<std::size_t> k_values(ks, ks + k_count);
    const auto sets = modalign::sweep_k(kb->kb, p, k_values, to_filter(filter));
    nlohmann::ordered_json j;
    j["kind"] = "center_sweep";
    auto& entries = j["sweep"] = nlohmann::ordered_json::array();
    for (const auto& [k, set] : sets) {
      const std::string file = "centers_k" + std::to_string(k) + ".centers";
      modalign::write_center_set(std::filesystem::path(out_dir) / file, set);
      nlohmann::ordered_json entry;
      entry["k"] = k;
      entry["file"] = file;
      entry["summary"] = center_summary(set);
      entries.push_back(std::move(entry));
    }
    if (out_json != nullptr) *out_json = copy_string(modalign::dump_report(j));
  });
}

ma_status ma_centers_read(const char* path, ma_centers** out) {
  MA_REQUIRE(path);
  MA_REQUIRE(out);
  return guarded([&] { *out = new ma_centers{modalign::read_center_set(path)}; });
}

ma_status ma_centers_write(const ma_centers* centers, const char* path) {
  MA_REQUIRE(centers);
  MA_REQUIRE(path);
  return guarded([&] { modalign::write_center_set(path, centers->set); });
}

ma_status ma_centers_summary_json(const ma_centers* centers, char** out_json) {
  MA_REQUIRE(centers);
  MA_REQUIRE(out_json);
  return guarded([&] { *out_json = copy_string(modalign::dump_report(center_summary(centers->set))); });
}

void ma_centers_free(ma_centers* centers) { delete centers; }

void ma_train_config_default(ma_train_config* config) {
  if (config != nullptr) *config = from_config(modalign::TrainConfig{});
}

ma_status ma_train_config_load(const char* path, ma_train_config* config) {
  MA_REQUIRE(path);
  MA_REQUIRE(config);
  return guarded([&] { *config = from_config(modalign::TrainConfig::load(path)); });
}

ma_status ma_train(const ma_kb* kb, const ma_matrix* visual, const char* pairs_path,
                   const char* modality, const ma_train_config* config, ma_adapter** out_adapter,
                   char** out_report_json) {
  MA_REQUIRE(kb);
  MA_REQUIRE(visual);
  MA_REQUIRE(config);
  MA_REQUIRE(out_adapter);
  return guarded([&] {
    const auto cfg = to_config(*config);
    std::vector<std::string> ids;
    if (pairs_path != nullptr) ids = modalign::read_pairs_jsonl(pairs_path);
    const auto pairs = modalign::make_training_pairs(kb->kb, visual->m, ids);
    auto result = modalign::train(pairs, kb->kb, cfg);
    result.adapter.modality = modality ? modality : "";
    if (out_report_json != nullptr) {
      nlohmann::ordered_json j;
      j["kind"] = "training";
      j["modality"] = result.adapter.modality;
      j["pairs"] = pairs.size();
      j["epochs"] = cfg.epochs;
      j["loss_history"] = result.loss_history;
      *out_report_json = copy_string(modalign::dump_report(j));
    }
    *out_adapter = new ma_adapter{std::move(result.adapter)};
  });
}

ma_status ma_adapter_read(const char* path, ma_adapter** out) {
  MA_REQUIRE(path);
  MA_REQUIRE(out);
  return guarded([&] { *out = new ma_adapter{modalign::read_adapter(path)}; });
}

ma_status ma_adapter_write(const ma_adapter* adapter, const char* path) {
  MA_REQUIRE(adapter);
  MA_REQUIRE(path);
  return guarded([&] { modalign::write_adapter(path, adapter->adapter); });
}

ma_status ma_adapter_apply(const ma_adapter* adapter, const ma_matrix* visual, ma_matrix** out) {
  MA_REQUIRE(adapter);
  MA_REQUIRE(visual);
  MA_REQUIRE(out);
  return guarded([&] { *out = new ma_matrix{modalign::apply(adapter->adapter, visual->m)}; });
}

void ma_adapter_free(ma_adapter* adapter) { delete adapter; }

ma_status ma_gradcheck(size_t dim, size_t batch, uint64_t seed, const ma_train_config* config,
                       double* out_max_rel_error, int* out_pass) {
  MA_REQUIRE(out_max_rel_error);
  MA_REQUIRE(out_pass);
  return guarded([&] {
    const auto cfg = config ? to_config(*config) : modalign::TrainConfig{};
    const auto report = modalign::gradient_check_random(dim, dim, batch, seed, cfg);
    *out_max_rel_error = report.max_rel_error;
    *out_pass = report.pass ? 1 : 0;
  });
}

ma_status ma_eval_zeroshot(const ma_centers* centers, const ma_matrix* queries,
                           const char* labels_path, ma_scoring_mode mode,
                           const ma_matrix* templates, char** out_report_json) {
  MA_REQUIRE(centers);
  MA_REQUIRE(queries);
  MA_REQUIRE(labels_path);
  MA_REQUIRE(out_report_json);
  return guarded([&] {
    const auto categories =
        modalign::categories_for_rows(queries->m, modalign::read_labels_jsonl(labels_path));
    modalign::EvalReport report;
    if (mode == MA_MODE_CENTER_MAX) {
      report = modalign::evaluate_classification(queries->m, categories, centers->set);
    } else if (mode == MA_MODE_PROMPT_MEAN) {
      const auto sets = templates ? modalign::prompt_sets_from_matrix(templates->m)
                                  : modalign::prompt_sets_from_centers(centers->set);
      report = modalign::evaluate_classification(queries->m, categories, sets);
    } else {
      modalign::fail(modalign::ErrorCode::InvalidArgument, "unknown scoring mode");
    }
    *out_report_json = copy_string(modalign::dump_report(modalign::to_json(report)));
  });
}

ma_status ma_eval_retrieval(const ma_matrix* queries, const ma_matrix* gallery,
                            const char* relevance_path, const size_t* ks, size_t k_count,
                            char** out_report_json) {
  MA_REQUIRE(queries);
  MA_REQUIRE(gallery);
  MA_REQUIRE(relevance_path);
  MA_REQUIRE(out_report_json);
  return guarded([&] {
    std::vector<std::size_t> k_values(std::begin(modalign::kDefaultRecallKs),
                                      std::end(modalign::kDefaultRecallKs));
    if (ks != nullptr) k_values.assign(ks, ks + k_count);
    const auto relevance = modalign::read_relevance_jsonl(relevance_path);
    const auto report = modalign::evaluate_retrieval(queries->m, gallery->m, relevance, k_values,
                                                    modalign::RetrievalDirection::AToB);
    *out_report_json = copy_string(modalign::dump_report(modalign::to_json(report)));
  });
}

void ma_synth_spec_default(ma_synth_spec* spec) {
  if (spec == nullptr) return;
  const modalign::SyntheticSpec d;
  *spec = ma_synth_spec{d.categories,       d.modalities,        d.samples_per_class_per_modality,
                        d.dim,              d.class_separation,  d.modality_offset,
                        d.noise_sigma,      d.descriptions_per_class, d.seed,
                        d.aspects_per_class, d.aspect_spread,    d.templates_per_class};
}

ma_status ma_synth_generate(const ma_synth_spec* spec, const ma_train_config* config, size_t k,
                            const char* out_dir) {
  MA_REQUIRE(spec);
  MA_REQUIRE(out_dir);
  return guarded([&] {
    modalign::SyntheticSpec s;
    s.categories = spec->categories;
    s.modalities = spec->modalities;
    s.samples_per_class_per_modality = spec->samples_per_class_per_modality;
    s.dim = spec->dim;
    s.class_separation = spec->class_separation;
    s.modality_offset = spec->modality_offset;
    s.noise_sigma = spec->noise_sigma;
    s.descriptions_per_class = spec->descriptions_per_class;
    s.seed = spec->seed;
    s.aspects_per_class = spec->aspects_per_class;
    s.aspect_spread = spec->aspect_spread;
    s.templates_per_class = spec->templates_per_class;
    const auto cfg = config ? to_config(*config) : modalign::TrainConfig{};
    modalign::write_bundle(modalign::generate_synthetic(s), out_dir, cfg, k);
  });
}

ma_status ma_pipeline_run(const char* config_path, const char* out_dir, int dump_projection,
                          char** out_summary_json) {
  MA_REQUIRE(config_path);
  MA_REQUIRE(out_dir);
  return guarded([&] {
    auto config = modalign::PipelineConfig::load(config_path);
    if (dump_projection >= 0) config.dump_projection = dump_projection != 0;
    const auto result = modalign::run_pipeline(config, out_dir);
    if (out_summary_json != nullptr) {
      nlohmann::ordered_json j;
      j["kind"] = "pipeline_summary";
      j["accuracy"] = result.accuracy;
      if (result.retrieval_before && result.retrieval_after) {
        j["retrieval_before"] = modalign::to_json(*result.retrieval_before);
        j["retrieval_after"] = modalign::to_json(*result.retrieval_after);
        j["modality_gap_before"] = result.diagnostics_before.modality_gap;
        j["modality_gap_after"] = result.diagnostics_after.modality_gap;
      }
      auto& outs = j["outputs"] = nlohmann::ordered_json::array();
      for (const auto& p : result.outputs) outs.push_back(p.generic_string());
      *out_summary_json = copy_string(modalign::dump_report(j));
    }
  });
}

ma_status ma_diagnostics(const ma_matrix* const* matrices, const char* const* labels_paths,
                         size_t count, char** out_report_json) {
  MA_REQUIRE(matrices);
  MA_REQUIRE(labels_paths);
  MA_REQUIRE(out_report_json);
  return guarded([&] {
    std::vector<std::vector<std::string>> categories;
    categories.reserve(count);
    for (size_t i = 0; i < count; ++i) {
      if (matrices[i] == nullptr || labels_paths[i] == nullptr) {
        modalign::fail(modalign::ErrorCode::InvalidArgument, "null modality entry");
      }
      categories.push_back(modalign::categories_for_rows(
          matrices[i]->m, modalign::read_labels_jsonl(labels_paths[i])));
    }
    std::vector<modalign::LabeledEmbeddings> mods;
    for (size_t i = 0; i < count; ++i) mods.push_back({&matrices[i]->m, &categories[i]});
    *out_report_json = copy_string(modalign::dump_report(modalign::to_json(modalign::diagnostics(mods))));
  });
}

}  // extern "C"
