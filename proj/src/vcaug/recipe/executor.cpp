#include "vcaug/recipe/executor.hpp"

#include <filesystem>
#include <map>
#include <set>

#include "vcaug/error.hpp"
#include "vcaug/speaker_id/classifier.hpp"
#include "vcaug/tts/tts_model.hpp"
#include "vcaug/util/hash.hpp"
#include "vcaug/util/strings.hpp"
#include "vcaug/vc/vc_model.hpp"

namespace fs = std::filesystem;

namespace vcaug::recipe {

namespace {

uint64_t Fingerprint(const corpus::DatasetManifest& m) {
  std::string bytes = m.name() + "\n";
  for (const auto& u : m.utterances()) {
    bytes += u->utt_id + "\t" + Join(u->phonemes, " ") + "\t";
    for (int d : u->durations) bytes += std::to_string(d) + " ";
    bytes.append(reinterpret_cast<const char*>(u->mel.data()), u->mel.size() * sizeof(float));
    bytes += "\n";
  }
  return HashBytes(bytes);
}

std::string FileHash(const std::string& path) { return HexDigest(HashBytes(ReadFile(path))); }

// Manifest text plus every mel it references.
std::string ManifestHash(const std::string& path) {
  return HexDigest(HashBytes(ReadFile(path)) ^ MixSeed(Fingerprint(corpus::LoadManifest(path))));
}

std::string HashArtifact(const std::string& kind, const std::string& path) {
  return kind.find("manifest") != std::string::npos ? ManifestHash(path) : FileHash(path);
}

const Stage* FindStage(const Plan& plan, const std::string& name) {
  for (const auto& s : plan.stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

}  // namespace

std::string StageKindName(StageKind k) {
  switch (k) {
    case StageKind::kTrainVc: return "train_vc";
    case StageKind::kBatchConvert: return "batch_convert";
    case StageKind::kTrainTts: return "train_tts";
    case StageKind::kFineTune: return "fine_tune";
  }
  return "?";
}

std::string Plan::Describe() const {
  std::string out;
  for (size_t i = 0; i < stages.size(); ++i) {
    const Stage& s = stages[i];
    std::vector<std::string> inputs;
    for (const auto& in : s.inputs) {
      std::string d = in.ref.ToString();
      if (!in.producer.empty()) {
        d += " <- " + in.producer;
      } else {
        d += " <- " + in.manifest->name() + " [" + std::to_string(in.manifest->size()) + " utts, " +
             FormatFixed(in.manifest->minutes(), 2) + " min]";
      }
      inputs.push_back(d);
    }
    out += std::to_string(i + 1) + ". " + StageKindName(s.kind) + " " + s.name;
    if (!s.model.empty()) out += " model=" + s.model;
    if (s.kind == StageKind::kBatchConvert) out += " target=" + s.target.value;
    if (s.multi_speaker) out += " multi_speaker";
    out += "\n";
    for (const auto& d : inputs) out += "     " + d + "\n";
  }
  return out;
}

Plan MakePlan(const Program& program, const corpus::Registry& registry, uint64_t root_seed) {
  ValidateProgram(program);
  Plan plan;
  plan.root_seed = root_seed;
  const uint64_t reduce_seed = DeriveSeed(root_seed, "reduce");
  std::vector<std::pair<DatasetRef, std::string>> converted;  // out ref -> stage
  std::set<std::string> missing;

  auto resolve = [&](const DatasetRef& ref, Stage& stage) {
    StageInput in;
    in.ref = ref;
    if (ref.synthetic) {
      for (const auto& [out, producer] : converted) {
        if (out == ref) {
          in.producer = producer;
          stage.depends_on.push_back(producer);
          stage.inputs.push_back(in);
          return;
        }
      }
    }
    const corpus::DatasetManifest* m = registry.Find(ref.speaker, ref.style, ref.synthetic);
    if (!m) {
      missing.insert(ref.ToString());
      return;
    }
    if (ref.hours) {
      in.manifest =
          std::make_shared<corpus::DatasetManifest>(corpus::ReduceManifest(*m, *ref.hours * 60.0, reduce_seed));
    } else {
      in.manifest = std::make_shared<corpus::DatasetManifest>(*m);
    }
    in.fingerprint = Fingerprint(*in.manifest);
    stage.inputs.push_back(in);
  };

  for (const auto& st : program.statements) {
    Stage stage;
    stage.name = StatementName(st);
    if (const auto* s = std::get_if<VcTrain>(&st)) {
      stage.kind = StageKind::kTrainVc;
      for (const auto& d : s->datasets) resolve(d, stage);
    } else if (const auto* s = std::get_if<Convert>(&st)) {
      stage.kind = StageKind::kBatchConvert;
      stage.model = s->vc_name;
      stage.target = s->target;
      stage.depends_on.push_back(s->vc_name);
      resolve(s->source, stage);
      converted.emplace_back(s->out(), s->name);
    } else if (const auto* s = std::get_if<TtsTrain>(&st)) {
      stage.kind = StageKind::kTrainTts;
      stage.multi_speaker = s->multi_speaker;
      for (const auto& item : s->items) {
        if (const auto* d = std::get_if<DatasetRef>(&item)) {
          resolve(*d, stage);
        } else {
          const std::string& producer = std::get<std::string>(item);
          StageInput in;
          in.producer = producer;
          for (const auto& [out, p] : converted) {
            if (p == producer) in.ref = out;
          }
          stage.depends_on.push_back(producer);
          stage.inputs.push_back(in);
        }
      }
    } else if (const auto* s = std::get_if<FineTune>(&st)) {
      stage.kind = StageKind::kFineTune;
      stage.model = s->tts_name;
      stage.depends_on.push_back(s->tts_name);
      resolve(s->dataset, stage);
    }
    plan.stages.push_back(std::move(stage));
  }
  if (!missing.empty()) {
    throw ResolutionError("no registered manifest for " +
                          Join(std::vector<std::string>(missing.begin(), missing.end()), ", "));
  }
  return plan;
}

std::string FormatIndex(const std::vector<Artifact>& artifacts) {
  std::string out;
  for (const auto& a : artifacts) out += a.kind + "\t" + a.name + "\t" + a.path + "\t" + a.hash + "\n";
  return out;
}

std::vector<Artifact> ParseIndex(const std::string& text) {
  std::vector<Artifact> out;
  int n = 0;
  for (const auto& line : SplitLines(text)) {
    ++n;
    if (Trim(line).empty()) continue;
    const auto f = Split(line, '\t');
    if (f.size() != 4) throw ParseError("artifact index: expected 4 fields", n);
    out.push_back({f[0], f[1], f[2], f[3]});
  }
  return out;
}

namespace {

class Executor {
 public:
  Executor(const Plan& plan, const Config& config, std::string workspace,
           const std::function<void(const std::string&)>& progress)
      : plan_(plan), config_(config), ws_(std::move(workspace)), progress_(progress) {}

  ExecuteResult Run() {
    fs::create_directories(ws_);
    for (const char* d : {"models", "data", "logs"}) fs::create_directories(fs::path(ws_) / d);
    LoadState();
    ExecuteResult result;
    std::map<std::string, std::string> keys;
    for (size_t i = 0; i < plan_.stages.size(); ++i) {
      const Stage& stage = plan_.stages[i];
      const std::string key = StageKey(stage, keys);
      keys[stage.name] = key;
      const std::string label = "[" + std::to_string(i + 1) + "/" +
                                std::to_string(plan_.stages.size()) + "] " +
                                StageKindName(stage.kind) + " " + stage.name;
      std::vector<Artifact> produced;
      if (CanSkip(stage.name, key, &produced)) {
        if (progress_) progress_(label + ": up to date, skipped");
        result.skipped.push_back(stage.name);
      } else {
        if (progress_) progress_(label + ": running");
        try {
          produced = RunStage(stage);
        } catch (const std::exception& e) {
          throw ExecutionError("stage '" + stage.name + "' (" + StageKindName(stage.kind) +
                               ") failed: " + e.what());
        }
        result.ran.push_back(stage.name);
      }
      Record(stage.name, key, produced);
      for (auto& a : produced) {
        artifacts_by_stage_[stage.name].push_back(a);
        result.artifacts.push_back(a);
      }
    }
    return result;
  }

 private:
  std::string Path(const std::string& rel) const { return (fs::path(ws_) / rel).string(); }

  void LoadState() {
    const std::string state = Path("stages.tsv");
    if (fs::exists(state)) {
      for (const auto& line : SplitLines(ReadFile(state))) {
        const auto f = Split(line, '\t');
        if (f.size() == 2) old_keys_[f[0]] = f[1];
      }
    }
    const std::string index = Path("artifacts.tsv");
    if (fs::exists(index)) {
      for (auto& a : ParseIndex(ReadFile(index))) old_artifacts_[a.name].push_back(a);
    }
  }

  bool CanSkip(const std::string& name, const std::string& key, std::vector<Artifact>* out) const {
    auto k = old_keys_.find(name);
    if (k == old_keys_.end() || k->second != key) return false;
    auto a = old_artifacts_.find(name);
    if (a == old_artifacts_.end() || a->second.empty()) return false;
    for (const auto& art : a->second) {
      if (!fs::exists(Path(art.path))) return false;
      try {
        if (HashArtifact(art.kind, Path(art.path)) != art.hash) return false;
      } catch (const Error&) {
        return false;
      }
    }
    *out = a->second;
    return true;
  }

  // Completed stages first, in plan order. Old entries for stages not
  // reached yet are kept so an interrupted run can still skip them later
  // (CanSkip re-checks their hashes anyway).
  void Record(const std::string& name, const std::string& key, const std::vector<Artifact>& produced) {
    done_keys_.emplace_back(name, key);
    for (const auto& a : produced) done_artifacts_.push_back(a);
    std::set<std::string> done;
    std::string state;
    for (const auto& [n, k] : done_keys_) {
      done.insert(n);
      state += n + "\t" + k + "\n";
    }
    std::vector<Artifact> index = done_artifacts_;
    for (const auto& [n, k] : old_keys_) {
      if (done.count(n)) continue;
      state += n + "\t" + k + "\n";
      if (auto a = old_artifacts_.find(n); a != old_artifacts_.end()) {
        index.insert(index.end(), a->second.begin(), a->second.end());
      }
    }
    WriteFile(Path("artifacts.tsv"), FormatIndex(index));
    WriteFile(Path("stages.tsv"), state);
  }

  std::string StageKey(const Stage& s, const std::map<std::string, std::string>& keys) const {
    std::string text = StageKindName(s.kind) + "|" + s.name + "|" + s.model + "|" + s.target.value +
                       "|" + (s.multi_speaker ? "1" : "0") + "|" + std::to_string(plan_.root_seed) + "|";
    for (const auto& in : s.inputs) {
      text += in.ref.ToString() + "=" +
              (in.producer.empty() ? HexDigest(in.fingerprint) : "@" + keys.at(in.producer)) + ";";
    }
    for (const auto& d : s.depends_on) text += "dep:" + keys.at(d) + ";";
    text += "\n" + config_.ToString();
    return HexDigest(HashBytes(text));
  }

  uint64_t StageSeed(const Stage& s, const std::string& what) const {
    return DeriveSeed(plan_.root_seed, StageKindName(s.kind) + ":" + s.name + ":" + what);
  }

  const Artifact& Find(const std::string& stage, const std::string& kind) const {
    auto it = artifacts_by_stage_.find(stage);
    if (it != artifacts_by_stage_.end()) {
      for (const auto& a : it->second) {
        if (a.kind == kind) return a;
      }
    }
    throw ExecutionError("no " + kind + " artifact from stage '" + stage + "'");
  }

  Artifact Emit(const std::string& kind, const std::string& name, const std::string& rel) const {
    return {kind, name, rel, HashArtifact(kind, Path(rel))};
  }

  corpus::DatasetManifest InputManifest(const StageInput& in) const {
    if (in.manifest) return *in.manifest;
    return corpus::LoadManifest(Path(Find(in.producer, "synthetic_manifest").path));
  }

  corpus::TrainingCollection Collect(const Stage& s) const {
    std::vector<corpus::DatasetManifest> ms;
    for (const auto& in : s.inputs) ms.push_back(InputManifest(in));
    return corpus::ConcatManifests(std::span<const corpus::DatasetManifest>(ms));
  }

  std::vector<Artifact> RunStage(const Stage& s) {
    switch (s.kind) {
      case StageKind::kTrainVc: return TrainVc(s);
      case StageKind::kBatchConvert: return BatchConvert(s);
      case StageKind::kTrainTts: return TrainTts(s);
      case StageKind::kFineTune: return RunFineTune(s);
    }
    return {};
  }

  std::vector<Artifact> TrainVc(const Stage& s) {
    const auto data = Collect(s);
    auto cc = speaker_id::ClassifierConfig::FromConfig(config_);
    cc.seed = StageSeed(s, "classifier");
    auto classifier = speaker_id::SpeakerClassifier::Train(data, cc);
    auto vcfg = vc::VcConfig::FromConfig(config_);
    vcfg.seed = StageSeed(s, "vc");
    std::vector<double> losses;
    auto model = vc::VcModel::Train(data, *classifier, vcfg, &losses);
    const std::string spk = "models/" + s.name + ".spk.ckpt";
    const std::string ckpt = "models/" + s.name + ".vc.ckpt";
    const std::string log = "logs/" + s.name + ".log";
    classifier->Save(Path(spk));
    model->Save(Path(ckpt));
    std::string text = "step\tl1\n";
    for (size_t i = 0; i < losses.size(); ++i) {
      text += std::to_string(i) + "\t" + FormatDouble(losses[i]) + "\n";
    }
    WriteFile(Path(log), text);
    return {Emit("vc_checkpoint", s.name, ckpt), Emit("classifier_checkpoint", s.name, spk),
            Emit("log", s.name, log)};
  }

  std::vector<Artifact> BatchConvert(const Stage& s) {
    auto model = vc::VcModel::Load(Path(Find(s.model, "vc_checkpoint").path));
    const auto source = InputManifest(s.inputs.at(0));
    const auto out = model->BatchConvert(source, s.target, s.name);
    const std::string rel = "data/" + s.name + "/" + s.name + ".manifest";
    fs::create_directories(fs::path(Path(rel)).parent_path());
    corpus::SaveManifest(out, Path(rel));
    return {Emit("synthetic_manifest", s.name, rel)};
  }

  static std::string TtsLog(const std::vector<tts::StepLog>& log) {
    std::string text = "step\ttotal\tl1\tstop_ce\tkl\n";
    for (const auto& l : log) {
      text += std::to_string(l.step) + "\t" + FormatDouble(l.loss.total) + "\t" +
              FormatDouble(l.loss.l1) + "\t" + FormatDouble(l.loss.stop_ce) + "\t" +
              FormatDouble(l.loss.kl) + "\n";
    }
    return text;
  }

  std::vector<Artifact> TrainTts(const Stage& s) {
    const auto data = Collect(s);
    std::vector<Artifact> out;
    std::unique_ptr<speaker_id::SpeakerClassifier> classifier;
    if (s.multi_speaker) {
      // Reuse the classifier of the VC model behind converted inputs so the
      // speaker embeddings match the ones used for conversion.
      for (const auto& in : s.inputs) {
        if (in.producer.empty() || classifier) continue;
        const Stage* conv = FindStage(plan_, in.producer);
        classifier = speaker_id::SpeakerClassifier::Load(Path(Find(conv->model, "classifier_checkpoint").path));
      }
      if (!classifier) {
        auto cc = speaker_id::ClassifierConfig::FromConfig(config_);
        cc.seed = StageSeed(s, "classifier");
        classifier = speaker_id::SpeakerClassifier::Train(data, cc);
        const std::string spk = "models/" + s.name + ".spk.ckpt";
        classifier->Save(Path(spk));
        out.push_back(Emit("classifier_checkpoint", s.name, spk));
      }
    }
    auto arch = tts::ArchConfig::FromConfig(config_);
    arch.seed = StageSeed(s, "arch");
    auto cfg = tts::TrainConfig::FromConfig(config_, "tts.train", tts::TrainConfig::FullScale());
    cfg.seed = StageSeed(s, "train");
    std::vector<tts::StepLog> log;
    auto model = tts::TtsModel::Train(data, arch, cfg, classifier.get(), &log);
    const std::string ckpt = "models/" + s.name + ".tts.ckpt";
    const std::string log_path = "logs/" + s.name + ".log";
    model->Save(Path(ckpt));
    WriteFile(Path(log_path), TtsLog(log));
    out.push_back(Emit("tts_checkpoint", s.name, ckpt));
    out.push_back(Emit("log", s.name, log_path));
    return out;
  }

  std::vector<Artifact> RunFineTune(const Stage& s) {
    const StageInput& in = s.inputs.at(0);
    if (in.ref.synthetic || !in.manifest || in.manifest->synthetic()) {
      throw ContractError("fine-tuning must use non-synthetic data, got " + in.ref.ToString());
    }
    auto model = tts::TtsModel::Load(Path(Find(s.model, "tts_checkpoint").path));
    auto cfg = tts::TrainConfig::FromConfig(config_, "tts.finetune", tts::TrainConfig::FullFineTune());
    cfg.seed = StageSeed(s, "finetune");
    std::vector<tts::StepLog> log;
    model->FineTune(*in.manifest, cfg, &log);
    const std::string ckpt = "models/" + s.name + ".ft.ckpt";
    const std::string log_path = "logs/" + s.name + ".log";
    const std::string target = "data/" + s.name + "/" + s.name + ".target.manifest";
    model->Save(Path(ckpt));
    WriteFile(Path(log_path), TtsLog(log));
    fs::create_directories(fs::path(Path(target)).parent_path());
    corpus::SaveManifest(*in.manifest, Path(target));
    return {Emit("ft_checkpoint", s.name, ckpt), Emit("target_manifest", s.name, target),
            Emit("log", s.name, log_path)};
  }

  const Plan& plan_;
  const Config& config_;
  std::string ws_;
  std::function<void(const std::string&)> progress_;
  std::map<std::string, std::string> old_keys_;
  std::map<std::string, std::vector<Artifact>> old_artifacts_;
  std::map<std::string, std::vector<Artifact>> artifacts_by_stage_;
  std::vector<std::pair<std::string, std::string>> done_keys_;
  std::vector<Artifact> done_artifacts_;
};

}  // namespace

ExecuteResult Execute(const Plan& plan, const Config& config, const std::string& workspace,
                      const std::function<void(const std::string&)>& progress) {
  try {
    return Executor(plan, config, workspace, progress).Run();
  } catch (const fs::filesystem_error& e) {
    throw IoError(e.what());
  }
}

}  // namespace vcaug::recipe
