/*
 * Copyright 2026 The DMKCM Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dmkcm/api/cli.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dmkcm/api/service.hpp"
#include "dmkcm/api/session.hpp"
#include "dmkcm/ckg/ckg.hpp"
#include "dmkcm/eval/metrics.hpp"
#include "dmkcm/pipeline/model.hpp"
#include "dmkcm/training/trainer.hpp"
#include "dmkcm/vkb/vkb.hpp"

namespace dmkcm::api {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "knowledge.manifest";

struct KnowledgePaths {
  std::string vkb;
  std::string ckg;
};

// Fills unset --vkb/--ckg from the manifest written next to a checkpoint.
KnowledgePaths resolve_knowledge(const fs::path& checkpoint, KnowledgePaths given) {
  if (!given.vkb.empty() && !given.ckg.empty()) return given;
  const auto manifest = checkpoint.parent_path() / kManifest;
  if (!fs::exists(manifest)) {
    throw std::runtime_error("--vkb and --ckg are required (no " + manifest.string() + ")");
  }
  auto kv = neural::parse_key_values(neural::read_text_file(manifest));
  if (given.vkb.empty()) given.vkb = kv.count("vkb") ? kv.at("vkb") : "";
  if (given.ckg.empty()) given.ckg = kv.count("ckg") ? kv.at("ckg") : "";
  if (given.vkb.empty() || given.ckg.empty()) {
    throw std::runtime_error(manifest.string() + " does not name both knowledge stores");
  }
  return given;
}

pipeline::DialogueModel load_model(const std::string& checkpoint, const KnowledgePaths& given) {
  auto paths = resolve_knowledge(checkpoint, given);
  auto stores = pipeline::KnowledgeStores::load(paths.vkb, paths.ckg);
  return pipeline::DialogueModel::load(checkpoint, stores);
}

int build_vkb(const std::string& stories, const std::string& stopwords, const std::string& out_dir,
              std::ostream& out) {
  auto words = stopwords.empty() ? corpus::StopwordSet() : corpus::StopwordSet::load(stopwords);
  auto index = vkb::VkbIndex::build_from_file(stories, words);
  fs::create_directories(out_dir);
  index.save(fs::path(out_dir) / "vkb.bin");
  std::size_t links = 0;
  for (vkb::DocId d = 0; d < index.size(); ++d) links += index.links(d).size();
  out << "indexed " << index.size() << " stories, " << links << " title links -> "
      << (fs::path(out_dir) / "vkb.bin").string() << '\n';
  return 0;
}

int build_ckg(const std::string& triples, const std::string& out_dir, std::ostream& out) {
  auto graph = ckg::load_graph(triples);
  fs::create_directories(out_dir);
  graph.save_tsv(fs::path(out_dir) / "graph.tsv");
  out << "loaded " << graph.edge_count() << " edges over " << graph.concepts().size()
      << " concepts and " << graph.relations().size() << " relations -> "
      << (fs::path(out_dir) / "graph.tsv").string() << '\n';
  return 0;
}

int train(const std::string& data, const KnowledgePaths& paths, const std::string& config_path,
          const std::string& out_dir, std::size_t steps_override, std::size_t window,
          std::ostream& out) {
  neural::ModelConfig model_config;
  training::TrainConfig train_config;
  if (!config_path.empty()) {
    auto kv = neural::parse_key_values(neural::read_text_file(config_path));
    auto rest = model_config.apply(train_config.apply(kv));
    rest.erase("vocab_size");
    rest.erase("num_relations");
    if (!rest.empty()) throw neural::ConfigError("unknown config key " + rest.begin()->first);
  }
  if (steps_override > 0) train_config.max_steps = steps_override;
  if (window > 0) model_config.context_window = window;
  auto stores = pipeline::KnowledgeStores::load(paths.vkb, paths.ckg);
  auto conversations = corpus::read_conversations(data);
  corpus::LoadOptions load{model_config.context_window, train_config.include_persona};
  std::vector<corpus::DialogueUnit> units;
  for (const auto& c : conversations) {
    auto u = corpus::make_units(c, load);
    units.insert(units.end(), u.begin(), u.end());
  }
  auto vocab = pipeline::build_vocab(conversations, *stores, train_config.min_count,
                                     train_config.include_persona);
  auto model = pipeline::DialogueModel::initialize(model_config, vocab, stores, train_config.seed);
  out << "units=" << units.size() << " vocab=" << vocab.size()
      << " parameters=" << model.params().scalar_count() << '\n';
  training::Trainer trainer(model, units, train_config);
  fs::create_directories(out_dir);
  std::vector<training::StepRecord> records;
  trainer.run([&](const training::StepRecord& r) {
    records.push_back(r);
    if (r.step == 1 || r.step % 100 == 0) {
      char line[128];
      std::snprintf(line, sizeof line, "step %zu loss %.4f ppl %.3f lr %.6f\n", r.step, r.loss,
                    r.ppl, r.lr);
      out << line << std::flush;
    }
    if (train_config.checkpoint_every > 0 && r.step % train_config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "step-%06zu", r.step);
      trainer.save_state(fs::path(out_dir) / name);
    }
  });
  trainer.save_state(out_dir);
  training::write_loss_csv(fs::path(out_dir) / "loss.csv", records);
  std::ofstream(fs::path(out_dir) / kManifest, std::ios::trunc)
      << "vkb=" << fs::absolute(paths.vkb).string() << "\nckg=" << fs::absolute(paths.ckg).string()
      << '\n';
  out << "checkpoint -> " << (fs::path(out_dir) / "model.ckpt").string() << '\n';
  return 0;
}

int evaluate(const std::string& checkpoint, const std::string& data, const KnowledgePaths& paths,
             const std::string& report_path, std::size_t top_k, std::ostream& out) {
  auto model = load_model(checkpoint, paths);
  auto units = corpus::load_dialogues(data, {model.config().context_window, false});
  pipeline::DecodeSettings settings;
  settings.top_k = top_k;
  auto report = eval::run_eval(model, units, settings);
  if (!report_path.empty()) eval::write_report(report_path, report);
  auto j = report.to_json();
  j.erase("predictions");
  out << j.dump(2) << '\n';
  return 0;
}

int chat(const std::string& checkpoint, const KnowledgePaths& paths, bool json, std::istream& in,
         std::ostream& out) {
  auto model = std::make_shared<const pipeline::DialogueModel>(load_model(checkpoint, paths));
  SessionManager sessions(model);
  auto id = sessions.create();
  out << "chat session " << id << " (empty line or /quit to exit)\n";
  std::string line;
  while (out << "> " << std::flush, std::getline(in, line)) {
    if (line.empty() || line == "/quit") break;
    try {
      auto reply = sessions.post_utterance(id, line);
      out << "bot: " << reply.result.response << '\n';
      if (json) {
        out << pipeline::to_json(reply.result.trace).dump() << '\n';
      } else {
        out << pipeline::summarize(reply.result.trace);
      }
    } catch (const ApiError& e) {
      out << "error: " << e.what() << '\n';
    }
  }
  return 0;
}

int serve(const std::string& checkpoint, const KnowledgePaths& paths, const std::string& host,
          int port, std::ostream& out) {
  std::shared_ptr<const pipeline::DialogueModel> model;
  try {
    model = std::make_shared<const pipeline::DialogueModel>(load_model(checkpoint, paths));
  } catch (const std::exception& e) {
    out << "model not loaded: " << e.what() << " (session routes will answer 503)\n";
  }
  SessionManager sessions(model);
  Service service(sessions);
  httplib::Server server;
  service.mount(server);
  out << "listening on http://" << host << ':' << port << "/v1\n" << std::flush;
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host);
  return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
                 std::ostream& err) {
  CLI::App app{"DMKCM knowledge-grounded dialogue generator", "dmkcm"};
  app.require_subcommand(1);

  std::string stories, stopwords, vkb_out;
  auto* c_vkb = app.add_subcommand("build-vkb", "Index a story corpus as the virtual KB");
  c_vkb->add_option("--stories", stories, "Stories JSONL")->required();
  c_vkb->add_option("--stopwords", stopwords, "Stopword list (one per line)");
  c_vkb->add_option("--out", vkb_out, "Output directory")->required();

  std::string triples, ckg_out;
  auto* c_ckg = app.add_subcommand("build-ckg", "Load and normalise a triples TSV");
  c_ckg->add_option("--triples", triples, "head<TAB>relation<TAB>tail[<TAB>weight]")->required();
  c_ckg->add_option("--out", ckg_out, "Output directory")->required();

  std::string data, config, train_out;
  KnowledgePaths train_paths;
  std::size_t steps = 0, window = 0;
  auto* c_train = app.add_subcommand("train", "Train a model on dialogue units");
  c_train->add_option("--data", data, "Dialogue JSONL")->required();
  c_train->add_option("--vkb", train_paths.vkb, "Directory from build-vkb")->required();
  c_train->add_option("--ckg", train_paths.ckg, "Directory from build-ckg")->required();
  c_train->add_option("--config", config, "key=value model and training config")->required();
  c_train->add_option("--out", train_out, "Output directory")->required();
  c_train->add_option("--steps", steps, "Override max_steps");
  c_train->add_option("--window", window, "Context turns before the user utterance (default from config)");

  std::string checkpoint, eval_data, report;
  KnowledgePaths eval_paths;
  std::size_t top_k = 0;
  auto* c_eval = app.add_subcommand("eval", "Decode units and report PPL, BLEU and Distinct");
  c_eval->add_option("--checkpoint", checkpoint, "model.ckpt from train")->required();
  c_eval->add_option("--data", eval_data, "Dialogue JSONL")->required();
  c_eval->add_option("--vkb", eval_paths.vkb, "Override the VKB directory");
  c_eval->add_option("--ckg", eval_paths.ckg, "Override the CKG directory");
  c_eval->add_option("--report", report, "Write the report JSON here");
  c_eval->add_option("--top-k", top_k, "Top-k sampling (0 = greedy)");

  std::string chat_ckpt;
  KnowledgePaths chat_paths;
  bool chat_json = false;
  auto* c_chat = app.add_subcommand("chat", "Terminal chat printing trace summaries");
  c_chat->add_option("--checkpoint", chat_ckpt, "model.ckpt from train")->required();
  c_chat->add_option("--vkb", chat_paths.vkb, "Override the VKB directory");
  c_chat->add_option("--ckg", chat_paths.ckg, "Override the CKG directory");
  c_chat->add_flag("--json", chat_json, "Print full trace JSON per turn");

  std::string serve_ckpt, host = "127.0.0.1";
  KnowledgePaths serve_paths;
  int port = 8080;
  auto* c_serve = app.add_subcommand("serve", "HTTP/JSON chat service under /v1");
  c_serve->add_option("--checkpoint", serve_ckpt, "model.ckpt from train")->required();
  c_serve->add_option("--vkb", serve_paths.vkb, "Override the VKB directory");
  c_serve->add_option("--ckg", serve_paths.ckg, "Override the CKG directory");
  c_serve->add_option("--host", host, "Bind address");
  c_serve->add_option("--port", port, "Port");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "dmkcm: " << e.what() << '\n';
    const CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) failing = sub;
    err << failing->help();
    return 2;
  }
  try {
    if (c_vkb->parsed()) return build_vkb(stories, stopwords, vkb_out, out);
    if (c_ckg->parsed()) return build_ckg(triples, ckg_out, out);
    if (c_train->parsed()) {
      return train(data, train_paths, config, train_out, steps, window, out);
    }
    if (c_eval->parsed()) return evaluate(checkpoint, eval_data, eval_paths, report, top_k, out);
    if (c_chat->parsed()) return chat(chat_ckpt, chat_paths, chat_json, in, out);
    if (c_serve->parsed()) return serve(serve_ckpt, serve_paths, host, port, out);
  } catch (const std::exception& e) {
    err << "dmkcm: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace dmkcm::api
