// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "exit_codes.hpp"
#include "modalign/modalign.h"

namespace {

using namespace modalign_cli;


struct Failure {
  ma_status status;
};

void check(ma_status s) {
  if (s != MA_OK) throw Failure{s};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Matrix = std::unique_ptr<ma_matrix, Deleter<ma_matrix, ma_matrix_free>>;
using Kb = std::unique_ptr<ma_kb, Deleter<ma_kb, ma_kb_free>>;
using Centers = std::unique_ptr<ma_centers, Deleter<ma_centers, ma_centers_free>>;
using Adapter = std::unique_ptr<ma_adapter, Deleter<ma_adapter, ma_adapter_free>>;

std::string take(char* s) {
  std::string out = s ? s : "";
  ma_string_free(s);
  return out;
}

Matrix read_matrix(const std::string& path) {
  ma_matrix* m = nullptr;
  check(ma_matrix_read(path.c_str(), &m));
  return Matrix(m);
}

Matrix maybe_adapt(Matrix m, const std::string& adapter_path) {
  if (adapter_path.empty()) return m;
  ma_adapter* a = nullptr;
  check(ma_adapter_read(adapter_path.c_str(), &a));
  Adapter adapter(a);
  ma_matrix* out = nullptr;
  check(ma_adapter_apply(adapter.get(), m.get(), &out));
  return Matrix(out);
}

void emit(const std::string& json, const std::string& report_path) {
  if (report_path.empty()) {
    std::cout << json;
    return;
  }
  const std::string tmp = report_path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << json;
    if (!out) {
      std::cerr << "error: cannot write " << report_path << "\n";
      throw Failure{MA_ERR_IO};
    }
  }
  if (std::rename(tmp.c_str(), report_path.c_str()) != 0) {
    std::cerr << "error: cannot write " << report_path << "\n";
    throw Failure{MA_ERR_IO};
  }
}

ma_source_filter parse_filter(const std::string& s) {
  if (s == "llm_category") return MA_SOURCE_LLM_CATEGORY;
  if (s == "mllm_data") return MA_SOURCE_MLLM_DATA;
  return MA_SOURCE_BOTH;
}

const std::vector<std::string> kFilterNames{"both", "llm_category", "mllm_data"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modalign: modality-agnostic alignment over precomputed embeddings"};
  app.set_version_flag("--version", std::string(ma_version()));
  app.require_subcommand(1);

  std::function<void()> action;

  // kb
  auto* kb = app.add_subcommand("kb", "Knowledge-base construction and inspection");
  kb->require_subcommand(1);
  std::string kb_records, kb_embeddings, kb_out, kb_dir;
  auto* kb_build = kb->add_subcommand("build", "Build a knowledge base from records + embeddings");
  kb_build->add_option("--records", kb_records, "Records JSONL")->required();
  kb_build->add_option("--embeddings", kb_embeddings, "Parallel UBEM file")->required();
  kb_build->add_option("--out", kb_out, "Output directory")->required();
  kb_build->callback([&] {
    action = [&] {
      ma_kb* k = nullptr;
      check(ma_kb_build(kb_records.c_str(), kb_embeddings.c_str(), &k));
      Kb handle(k);
      check(ma_kb_save(handle.get(), kb_out.c_str()));
      std::cout << "kb: " << ma_kb_size(handle.get()) << " records, dim " << ma_kb_dim(handle.get())
                << " -> " << kb_out << "\n";
    };
  });
  auto* kb_stats = kb->add_subcommand("stats", "Print record counts per category and source");
  kb_stats->add_option("--kb", kb_dir, "Knowledge-base directory")->required();
  kb_stats->callback([&] {
    action = [&] {
      ma_kb* k = nullptr;
      check(ma_kb_load(kb_dir.c_str(), &k));
      Kb handle(k);
      char* json = nullptr;
      check(ma_kb_stats_json(handle.get(), &json));
      std::cout << take(json);
    };
  });

  // centers
  auto* centers = app.add_subcommand("centers", "Embedding-center localization");
  centers->require_subcommand(1);
  std::string c_kb, c_prompts, c_out, c_source = "both";
  std::size_t c_k = 50;
  std::vector<std::size_t> c_ks{10, 25, 50, 100};
  auto add_center_common = [&](CLI::App* sub) {
    sub->add_option("--kb", c_kb, "Knowledge-base directory")->required();
    sub->add_option("--prompts", c_prompts, "Basic-prompt UBEM, rows labelled by category")
        ->required();
    sub->add_option("--source", c_source, "Source filter")->check(CLI::IsMember(kFilterNames));
  };
  auto* c_localize = centers->add_subcommand("localize", "Top-k descriptions per category");
  add_center_common(c_localize);
  c_localize->add_option("--k", c_k, "Center size")->check(CLI::PositiveNumber);
  c_localize->add_option("--out", c_out, "Center-set file")->required();
  c_localize->callback([&] {
    action = [&] {
      ma_kb* k = nullptr;
      check(ma_kb_load(c_kb.c_str(), &k));
      Kb handle(k);
      auto prompts = read_matrix(c_prompts);
      ma_centers* set = nullptr;
      check(ma_centers_localize(handle.get(), prompts.get(), c_k, parse_filter(c_source), &set));
      Centers cs(set);
      check(ma_centers_write(cs.get(), c_out.c_str()));
      char* json = nullptr;
      check(ma_centers_summary_json(cs.get(), &json));
      std::cout << take(json);
    };
  });
  auto* c_sweep = centers->add_subcommand("sweep", "Localize for several k (prefix-consistent)");
  add_center_common(c_sweep);
  c_sweep->add_option("--ks", c_ks, "Center sizes")->delimiter(',')->check(CLI::PositiveNumber);
  c_sweep->add_option("--out", c_out, "Output directory")->required();
  c_sweep->callback([&] {
    action = [&] {
      ma_kb* k = nullptr;
      check(ma_kb_load(c_kb.c_str(), &k));
      Kb handle(k);
      auto prompts = read_matrix(c_prompts);
      char* json = nullptr;
      check(ma_centers_sweep(handle.get(), prompts.get(), c_ks.data(), c_ks.size(),
                             parse_filter(c_source), c_out.c_str(), &json));
      std::cout << take(json);
    };
  });

  // train
  auto* train = app.add_subcommand("train", "Train a linear adapter for one modality");
  std::string t_kb, t_pairs, t_visual, t_modality, t_config, t_out, t_report;
  std::optional<std::uint64_t> t_seed;
  train->add_option("--kb", t_kb, "Knowledge-base directory")->required();
  train->add_option("--pairs", t_pairs, "Pairs JSONL (sample ids)")->required();
  train->add_option("--visual", t_visual, "Visual UBEM, rows labelled by sample id")
      ->required()
      ;
  train->add_option("--modality", t_modality, "Modality name")->required();
  train->add_option("--config", t_config, "Training config (key = value)");
  train->add_option("--seed", t_seed, "Override the config seed");
  train->add_option("--out", t_out, "Adapter file")->required();
  train->add_option("--report", t_report, "Training report JSON (stdout if omitted)");
  train->callback([&] {
    action = [&] {
      ma_train_config cfg;
      ma_train_config_default(&cfg);
      if (!t_config.empty()) check(ma_train_config_load(t_config.c_str(), &cfg));
      if (t_seed) cfg.seed = *t_seed;
      ma_kb* k = nullptr;
      check(ma_kb_load(t_kb.c_str(), &k));
      Kb handle(k);
      auto visual = read_matrix(t_visual);
      ma_adapter* a = nullptr;
      char* json = nullptr;
      check(ma_train(handle.get(), visual.get(), t_pairs.c_str(), t_modality.c_str(), &cfg, &a, &json));
      Adapter adapter(a);
      const std::string report = take(json);
      check(ma_adapter_write(adapter.get(), t_out.c_str()));
      emit(report, t_report);
    };
  });

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradient");
  std::size_t g_dim = 8, g_batch = 4;
  std::uint64_t g_seed = 0;
  double g_temperature = 0.07;
  bool g_symmetric = false;
  gradcheck->add_option("--dim", g_dim, "Embedding dimension")->check(CLI::PositiveNumber);
  gradcheck->add_option("--batch", g_batch, "Batch size")->check(CLI::Range(2, 1 << 20));
  gradcheck->add_option("--seed", g_seed, "Seed");
  gradcheck->add_option("--temperature", g_temperature, "Softmax temperature");
  gradcheck->add_flag("--symmetric", g_symmetric, "Include the text-to-visual term");
  gradcheck->callback([&] {
    action = [&] {
      ma_train_config cfg;
      ma_train_config_default(&cfg);
      cfg.temperature = g_temperature;
      cfg.symmetric_loss = g_symmetric ? 1 : 0;
      double err = 0.0;
      int pass = 0;
      check(ma_gradcheck(g_dim, g_batch, g_seed, &cfg, &err, &pass));
      std::printf("gradcheck dim=%zu batch=%zu seed=%llu max_rel_error=%.3e %s\n", g_dim, g_batch,
                  static_cast<unsigned long long>(g_seed), err, pass ? "PASS" : "FAIL");
      if (!pass) throw Failure{MA_ERR_NUMERICAL};
    };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Zero-shot classification and retrieval metrics");
  eval->require_subcommand(1);
  std::string e_centers, e_queries, e_labels, e_mode = "center_max", e_templates, e_adapter,
                                                e_report, e_gallery, e_relevance, e_gallery_adapter;
  std::vector<std::size_t> e_ks{1, 5, 10, 20};
  auto* zeroshot = eval->add_subcommand("zeroshot", "Zero-shot top-1 accuracy");
  zeroshot->add_option("--centers", e_centers, "Center-set file")->required();
  zeroshot->add_option("--queries", e_queries, "Query UBEM, rows labelled by id")->required();
  zeroshot->add_option("--labels", e_labels, "Labels JSONL")->required();
  zeroshot->add_option("--mode", e_mode, "Scoring mode")
      ->check(CLI::IsMember({"center_max", "prompt_mean"}));
  zeroshot->add_option("--templates", e_templates, "Prompt-template UBEM for prompt_mean")
      ;
  zeroshot->add_option("--adapter", e_adapter, "Adapter applied to queries first");
  zeroshot->add_option("--report", e_report, "Report JSON (stdout if omitted)");
  zeroshot->callback([&] {
    action = [&] {
      ma_centers* c = nullptr;
      check(ma_centers_read(e_centers.c_str(), &c));
      Centers cs(c);
      auto queries = maybe_adapt(read_matrix(e_queries), e_adapter);
      Matrix templates;
      if (!e_templates.empty()) templates = read_matrix(e_templates);
      char* json = nullptr;
      check(ma_eval_zeroshot(cs.get(), queries.get(), e_labels.c_str(),
                             e_mode == "center_max" ? MA_MODE_CENTER_MAX : MA_MODE_PROMPT_MEAN,
                             templates.get(), &json));
      emit(take(json), e_report);
    };
  });
  auto* retrieval = eval->add_subcommand("retrieval", "Recall@k of query-to-gallery ranking");
  retrieval->add_option("--queries", e_queries, "Query UBEM")->required();
  retrieval->add_option("--gallery", e_gallery, "Gallery UBEM")->required();
  retrieval->add_option("--relevance", e_relevance, "Relevance JSONL")->required();
  retrieval->add_option("--ks", e_ks, "Recall cutoffs")->delimiter(',')->check(CLI::PositiveNumber);
  retrieval->add_option("--query-adapter", e_adapter, "Adapter applied to queries");
  retrieval->add_option("--gallery-adapter", e_gallery_adapter, "Adapter applied to gallery")
      ;
  retrieval->add_option("--report", e_report, "Report JSON (stdout if omitted)");
  retrieval->callback([&] {
    action = [&] {
      auto queries = maybe_adapt(read_matrix(e_queries), e_adapter);
      auto gallery = maybe_adapt(read_matrix(e_gallery), e_gallery_adapter);
      char* json = nullptr;
      check(ma_eval_retrieval(queries.get(), gallery.get(), e_relevance.c_str(), e_ks.data(),
                              e_ks.size(), &json));
      emit(take(json), e_report);
    };
  });

  // synth
  auto* synth = app.add_subcommand("synth", "Synthetic desk-scale data");
  synth->require_subcommand(1);
  ma_synth_spec spec;
  ma_synth_spec_default(&spec);
  std::string s_out;
  std::size_t s_k = 50;
  auto* generate = synth->add_subcommand("generate", "Write a synthetic bundle and pipeline.json");
  generate->add_option("--out", s_out, "Output directory")->required();
  generate->add_option("--categories", spec.categories)->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--modalities", spec.modalities)->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--samples", spec.samples_per_class_per_modality,
                       "Samples per class per modality per split")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  generate->add_option("--dim", spec.dim)->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--separation", spec.class_separation)->capture_default_str();
  generate->add_option("--modality-offset", spec.modality_offset)->capture_default_str();
  generate->add_option("--noise", spec.noise_sigma)->capture_default_str();
  generate->add_option("--descriptions", spec.descriptions_per_class, "Descriptions per class")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  generate->add_option("--aspects", spec.aspects_per_class)->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--aspect-spread", spec.aspect_spread)->capture_default_str();
  generate->add_option("--templates", spec.templates_per_class)->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--seed", spec.seed)->capture_default_str();
  generate->add_option("--k", s_k, "Center size written to pipeline.json")->check(CLI::PositiveNumber);
  generate->callback([&] {
    action = [&] {
      check(ma_synth_generate(&spec, nullptr, s_k, s_out.c_str()));
      std::cout << "synthetic bundle -> " << s_out << "\n";
    };
  });

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "End-to-end run");
  pipeline->require_subcommand(1);
  std::string p_config, p_out;
  bool p_projection = false;
  auto* run = pipeline->add_subcommand("run", "kb -> centers -> train -> eval -> diagnostics");
  run->add_option("--config", p_config, "Pipeline JSON config")->required();
  run->add_option("--out", p_out, "Run directory")->required();
  run->add_flag("--dump-projection", p_projection, "Write 2-D PCA coordinates as CSV");
  run->callback([&] {
    action = [&] {
      char* json = nullptr;
      check(ma_pipeline_run(p_config.c_str(), p_out.c_str(), p_projection ? 1 : -1, &json));
      std::cout << take(json);
    };
  });

  // diagnostics
  auto* diag = app.add_subcommand("diagnostics", "Same- vs cross-modality intra-class cosine");
  std::vector<std::string> d_embeddings, d_labels, d_adapters;
  std::string d_report;
  diag->add_option("--embeddings", d_embeddings, "One UBEM per modality")
      ->required()
      ->delimiter(',')
      ;
  diag->add_option("--labels", d_labels, "One labels JSONL per modality")
      ->required()
      ->delimiter(',')
      ;
  diag->add_option("--adapters", d_adapters, "Optional adapter per modality")->delimiter(',');
  diag->add_option("--report", d_report, "Report JSON (stdout if omitted)");
  diag->callback([&] {
    action = [&] {
      if (d_embeddings.size() != d_labels.size() ||
          (!d_adapters.empty() && d_adapters.size() != d_embeddings.size())) {
        std::cerr << "error: --embeddings, --labels and --adapters need one entry per modality\n";
        throw Failure{MA_ERR_INVALID_ARGUMENT};
      }
      std::vector<Matrix> owned;
      std::vector<const ma_matrix*> mats;
      std::vector<const char*> labels;
      for (std::size_t i = 0; i < d_embeddings.size(); ++i) {
        owned.push_back(maybe_adapt(read_matrix(d_embeddings[i]), d_adapters.empty() ? "" : d_adapters[i]));
        mats.push_back(owned.back().get());
        labels.push_back(d_labels[i].c_str());
      }
      char* json = nullptr;
      check(ma_diagnostics(mats.data(), labels.data(), mats.size(), &json));
      emit(take(json), d_report);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const Failure& f) {
    if (f.status != MA_OK && *ma_last_error() != '\0') {
      std::cerr << "error [" << ma_status_name(f.status) << "]: " << ma_last_error() << "\n";
    }
    return exit_code_for(f.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
