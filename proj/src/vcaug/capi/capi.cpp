#include "vcaug/vcaug.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "vcaug/corpus/corpus.hpp"
#include "vcaug/corpus/toy_corpus.hpp"
#include "vcaug/error.hpp"
#include "vcaug/eval/mushra.hpp"
#include "vcaug/eval/report.hpp"
#include "vcaug/recipe/executor.hpp"
#include "vcaug/recipe/program.hpp"
#include "vcaug/speaker_id/classifier.hpp"
#include "vcaug/tts/tts_model.hpp"
#include "vcaug/tts/vocoder.hpp"
#include "vcaug/util/config.hpp"
#include "vcaug/util/hash.hpp"
#include "vcaug/util/strings.hpp"
#include "vcaug/vc/vc_model.hpp"

struct vcaug_config {
  vcaug::Config config;
};
struct vcaug_manifest {
  vcaug::corpus::DatasetManifest manifest;
};
struct vcaug_classifier {
  std::unique_ptr<vcaug::speaker_id::SpeakerClassifier> model;
};
struct vcaug_vc {
  std::unique_ptr<vcaug::vc::VcModel> model;
};
struct vcaug_tts {
  std::unique_ptr<vcaug::tts::TtsModel> model;
};
struct vcaug_recipe {
  vcaug::recipe::Program program;
};

namespace {

using namespace vcaug;

thread_local std::string g_last_error;

class ArgumentError : public Error {
 public:
  using Error::Error;
};

vcaug_status Fail(vcaug_status s, const char* what) {
  g_last_error = what;
  return s;
}

template <typename F>
vcaug_status Guard(F&& f) {
  g_last_error.clear();
  try {
    f();
    return VCAUG_OK;
  } catch (const ArgumentError& e) {
    return Fail(VCAUG_INVALID_ARGUMENT, e.what());
  } catch (const ParseError& e) {
    return Fail(VCAUG_PARSE, e.what());
  } catch (const ValidationError& e) {
    return Fail(VCAUG_VALIDATION, e.what());
  } catch (const ContractError& e) {
    return Fail(VCAUG_CONTRACT, e.what());
  } catch (const LookupError& e) {
    return Fail(VCAUG_LOOKUP, e.what());
  } catch (const ResolutionError& e) {
    return Fail(VCAUG_RESOLUTION, e.what());
  } catch (const IoError& e) {
    return Fail(VCAUG_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return Fail(VCAUG_IO, e.what());
  } catch (const ExecutionError& e) {
    return Fail(VCAUG_EXECUTION, e.what());
  } catch (const std::bad_alloc&) {
    return Fail(VCAUG_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return Fail(VCAUG_INTERNAL, e.what());
  }
}

template <typename T>
const T& Need(const T* p, const char* what) {
  if (p == nullptr) throw ArgumentError(std::string(what) + " is NULL");
  return *p;
}
template <typename T>
T& NeedMut(T* p, const char* what) {
  if (p == nullptr) throw ArgumentError(std::string(what) + " is NULL");
  return *p;
}

std::string Str(const char* s, const char* what) {
  if (s == nullptr) throw ArgumentError(std::string(what) + " is NULL");
  return s;
}

template <typename P>
void NeedOut(P** out, const char* what) {
  if (out == nullptr) throw ArgumentError(std::string(what) + " is NULL");
  *out = nullptr;
}

char* CopyString(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void SetString(char** out, const std::string& s) {
  if (out) *out = CopyString(s);
}

const Config& ConfigOf(const vcaug_config* cfg) {
  static const Config kEmpty;
  return cfg ? cfg->config : kEmpty;
}

corpus::TrainingCollection LoadCollection(const char* const* paths, size_t count) {
  if (count == 0) throw ArgumentError("no manifests given");
  if (paths == nullptr) throw ArgumentError("manifest path list is NULL");
  std::vector<corpus::DatasetManifest> ms;
  for (size_t i = 0; i < count; ++i) ms.push_back(corpus::LoadManifest(Str(paths[i], "manifest path")));
  return corpus::ConcatManifests(std::span<const corpus::DatasetManifest>(ms));
}

std::vector<std::string> CommaList(const std::string& s) {
  std::vector<std::string> out;
  for (auto& part : Split(s, ',')) {
    std::string t = Trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::string TtsLog(const std::vector<tts::StepLog>& log) {
  std::string text = "step\ttotal\tl1\tstop_ce\tkl\n";
  for (const auto& l : log) {
    text += std::to_string(l.step) + "\t" + FormatDouble(l.loss.total) + "\t" +
            FormatDouble(l.loss.l1) + "\t" + FormatDouble(l.loss.stop_ce) + "\t" +
            FormatDouble(l.loss.kl) + "\n";
  }
  return text;
}

}  // namespace

extern "C" {

const char* vcaug_version(void) { return "0.1.0"; }

const char* vcaug_last_error(void) { return g_last_error.c_str(); }

const char* vcaug_status_name(vcaug_status status) {
  switch (status) {
    case VCAUG_OK: return "ok";
    case VCAUG_INVALID_ARGUMENT: return "invalid argument";
    case VCAUG_PARSE: return "parse error";
    case VCAUG_VALIDATION: return "validation error";
    case VCAUG_CONTRACT: return "contract error";
    case VCAUG_LOOKUP: return "lookup error";
    case VCAUG_RESOLUTION: return "resolution error";
    case VCAUG_IO: return "I/O error";
    case VCAUG_EXECUTION: return "execution error";
    case VCAUG_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void vcaug_string_free(char* s) { std::free(s); }

// ---- configuration ----

vcaug_status vcaug_config_new(vcaug_config** out) {
  return Guard([&] {
    NeedOut(out, "out");
    *out = new vcaug_config();
  });
}

vcaug_status vcaug_config_load(vcaug_config* cfg, const char* path) {
  return Guard([&] { NeedMut(cfg, "cfg").config.Merge(Config::Load(Str(path, "path"))); });
}

vcaug_status vcaug_config_set(vcaug_config* cfg, const char* key, const char* value) {
  return Guard([&] {
    const std::string k = Trim(Str(key, "key"));
    if (k.empty()) throw ArgumentError("empty config key");
    NeedMut(cfg, "cfg").config.Set(k, Trim(Str(value, "value")));
  });
}

vcaug_status vcaug_config_to_string(const vcaug_config* cfg, char** out) {
  return Guard([&] {
    NeedOut(out, "out");
    *out = CopyString(Need(cfg, "cfg").config.ToString());
  });
}

void vcaug_config_free(vcaug_config* cfg) { delete cfg; }

// ---- corpus ----

vcaug_status vcaug_toy_corpus_write(const vcaug_config* cfg, uint64_t seed, const char* dir,
                                    size_t* manifests_written) {
  return Guard([&] {
    const Config& c = ConfigOf(cfg);
    corpus::ToyCorpusOptions o;
    if (c.Has("corpus.speakers")) o.speakers = CommaList(c.GetString("corpus.speakers", ""));
    if (c.Has("corpus.styles")) o.styles = CommaList(c.GetString("corpus.styles", ""));
    o.utterances_per_pair =
        static_cast<int>(c.GetInt("corpus.utterances_per_pair", o.utterances_per_pair));
    if (o.utterances_per_pair <= 0) throw ValidationError("corpus.utterances_per_pair must be positive");
    o.features.mel_bands = static_cast<int>(c.GetInt("corpus.mel_bands", o.features.mel_bands));
    o.features.Validate();
    o.seed = seed;
    corpus::WriteToyCorpus(o, Str(dir, "dir"));
    if (manifests_written) *manifests_written = o.speakers.size() * o.styles.size();
  });
}

vcaug_status vcaug_manifest_load(const char* path, vcaug_manifest** out) {
  return Guard([&] {
    NeedOut(out, "out");
    auto m = std::make_unique<vcaug_manifest>();
    m->manifest = corpus::LoadManifest(Str(path, "path"));
    *out = m.release();
  });
}

vcaug_status vcaug_manifest_save(const vcaug_manifest* m, const char* path) {
  return Guard([&] { corpus::SaveManifest(Need(m, "manifest").manifest, Str(path, "path")); });
}

size_t vcaug_manifest_size(const vcaug_manifest* m) { return m ? m->manifest.size() : 0; }

double vcaug_manifest_minutes(const vcaug_manifest* m) { return m ? m->manifest.minutes() : 0.0; }

void vcaug_manifest_free(vcaug_manifest* m) { delete m; }

// ---- classifier and VC ----

vcaug_status vcaug_vc_train(const vcaug_config* cfg, const char* const* manifest_paths, size_t count,
                            uint64_t seed, const char* log_path, vcaug_vc** vc_out,
                            vcaug_classifier** classifier_out) {
  return Guard([&] {
    NeedOut(vc_out, "vc_out");
    NeedOut(classifier_out, "classifier_out");
    const Config& c = ConfigOf(cfg);
    const auto data = LoadCollection(manifest_paths, count);
    auto cc = speaker_id::ClassifierConfig::FromConfig(c);
    cc.seed = DeriveSeed(seed, "classifier");
    auto clf = speaker_id::SpeakerClassifier::Train(data, cc);
    auto vcfg = vc::VcConfig::FromConfig(c);
    vcfg.seed = DeriveSeed(seed, "vc");
    std::vector<double> losses;
    auto model = vc::VcModel::Train(data, *clf, vcfg, &losses);
    if (log_path) {
      std::string text = "step\tl1\n";
      for (size_t i = 0; i < losses.size(); ++i) {
        text += std::to_string(i) + "\t" + FormatDouble(losses[i]) + "\n";
      }
      WriteFile(log_path, text);
    }
    auto v = std::make_unique<vcaug_vc>();
    v->model = std::move(model);
    auto k = std::make_unique<vcaug_classifier>();
    k->model = std::move(clf);
    *vc_out = v.release();
    *classifier_out = k.release();
  });
}

vcaug_status vcaug_vc_convert(const vcaug_vc* vc, const vcaug_manifest* source,
                              const char* target_speaker, const char* out_name,
                              vcaug_manifest** out) {
  return Guard([&] {
    NeedOut(out, "out");
    const auto& model = *Need(vc, "vc").model;
    auto m = std::make_unique<vcaug_manifest>();
    m->manifest = model.BatchConvert(Need(source, "source").manifest,
                                     corpus::SpeakerId{Str(target_speaker, "target_speaker")},
                                     Str(out_name, "out_name"));
    *out = m.release();
  });
}

vcaug_status vcaug_vc_save(const vcaug_vc* vc, const char* path) {
  return Guard([&] { Need(vc, "vc").model->Save(Str(path, "path")); });
}

vcaug_status vcaug_vc_load(const char* path, vcaug_vc** out) {
  return Guard([&] {
    NeedOut(out, "out");
    auto v = std::make_unique<vcaug_vc>();
    v->model = vc::VcModel::Load(Str(path, "path"));
    *out = v.release();
  });
}

void vcaug_vc_free(vcaug_vc* vc) { delete vc; }

vcaug_status vcaug_classifier_save(const vcaug_classifier* c, const char* path) {
  return Guard([&] { Need(c, "classifier").model->Save(Str(path, "path")); });
}

vcaug_status vcaug_classifier_load(const char* path, vcaug_classifier** out) {
  return Guard([&] {
    NeedOut(out, "out");
    auto k = std::make_unique<vcaug_classifier>();
    k->model = speaker_id::SpeakerClassifier::Load(Str(path, "path"));
    *out = k.release();
  });
}

void vcaug_classifier_free(vcaug_classifier* c) { delete c; }

// ---- TTS ----

vcaug_status vcaug_tts_train(const vcaug_config* cfg, const char* const* manifest_paths, size_t count,
                             const vcaug_classifier* classifier, uint64_t seed, const char* log_path,
                             vcaug_tts** out) {
  return Guard([&] {
    NeedOut(out, "out");
    const Config& c = ConfigOf(cfg);
    const auto data = LoadCollection(manifest_paths, count);
    auto arch = tts::ArchConfig::FromConfig(c);
    arch.seed = DeriveSeed(seed, "arch");
    auto tc = tts::TrainConfig::FromConfig(c, "tts.train", tts::TrainConfig::FullScale());
    tc.seed = DeriveSeed(seed, "train");
    std::vector<tts::StepLog> log;
    auto model = tts::TtsModel::Train(data, arch, tc, classifier ? classifier->model.get() : nullptr, &log);
    if (log_path) WriteFile(log_path, TtsLog(log));
    auto t = std::make_unique<vcaug_tts>();
    t->model = std::move(model);
    *out = t.release();
  });
}

vcaug_status vcaug_tts_finetune(vcaug_tts* tts, const vcaug_config* cfg, const vcaug_manifest* target,
                                uint64_t seed, const char* log_path) {
  return Guard([&] {
    auto& model = *NeedMut(tts, "tts").model;
    auto tc = tts::TrainConfig::FromConfig(ConfigOf(cfg), "tts.finetune",
                                           tts::TrainConfig::FullFineTune());
    tc.seed = DeriveSeed(seed, "finetune");
    std::vector<tts::StepLog> log;
    model.FineTune(Need(target, "target").manifest, tc, &log);
    if (log_path) WriteFile(log_path, TtsLog(log));
  });
}

vcaug_status vcaug_tts_synthesize(const vcaug_tts* tts, const char* phonemes,
                                  const vcaug_manifest* reference, const char* speaker,
                                  const char* mel_path, const char* wav_path, size_t* frames) {
  return Guard([&] {
    const auto& model = *Need(tts, "tts").model;
    const auto symbols = SplitWords(Str(phonemes, "phonemes"));
    if (symbols.empty()) throw ArgumentError("empty phoneme string");
    const auto z = model.CentroidZ(Need(reference, "reference").manifest);
    std::optional<speaker_id::SpeakerEmbedding> spk;
    if (speaker && !model.multi_speaker()) {
      throw ContractError("single-speaker model takes no speaker id");
    }
    if (speaker) spk = model.SpeakerFor(corpus::SpeakerId{speaker});
    if (model.multi_speaker() && !spk) throw ContractError("multi-speaker model needs a speaker");
    const corpus::Mel mel = model.Synthesize(symbols, z, spk);
    if (mel_path) corpus::WriteMel(mel_path, mel);
    if (wav_path) {
      corpus::FeatureConfig features;
      features.mel_bands = model.mel_bands();
      features.frame_shift_ms = reference->manifest.frame_shift_ms();
      tts::WriteWav(wav_path, tts::MelToWaveform(mel, features),
                    static_cast<int>(features.sample_rate));
    }
    if (frames) *frames = static_cast<size_t>(mel.rows());
  });
}

vcaug_status vcaug_tts_save(const vcaug_tts* tts, const char* path) {
  return Guard([&] { Need(tts, "tts").model->Save(Str(path, "path")); });
}

vcaug_status vcaug_tts_load(const char* path, vcaug_tts** out) {
  return Guard([&] {
    NeedOut(out, "out");
    auto t = std::make_unique<vcaug_tts>();
    t->model = tts::TtsModel::Load(Str(path, "path"));
    *out = t.release();
  });
}

int64_t vcaug_tts_step_count(const vcaug_tts* tts) { return tts ? tts->model->step_count() : -1; }

void vcaug_tts_free(vcaug_tts* tts) { delete tts; }

// ---- recipes ----

vcaug_status vcaug_recipe_load(const char* path, vcaug_recipe** out) {
  return Guard([&] {
    NeedOut(out, "out");
    auto r = std::make_unique<vcaug_recipe>();
    r->program = recipe::LoadRecipe(Str(path, "path"));
    *out = r.release();
  });
}

vcaug_status vcaug_recipe_parse(const char* text, vcaug_recipe** out) {
  return Guard([&] {
    NeedOut(out, "out");
    auto r = std::make_unique<vcaug_recipe>();
    r->program = recipe::ParseRecipe(Str(text, "text"));
    *out = r.release();
  });
}

vcaug_status vcaug_recipe_format(const vcaug_recipe* r, char** out) {
  return Guard([&] {
    NeedOut(out, "out");
    *out = CopyString(recipe::FormatRecipe(Need(r, "recipe").program));
  });
}

size_t vcaug_recipe_statement_count(const vcaug_recipe* r) {
  return r ? r->program.statements.size() : 0;
}

vcaug_status vcaug_recipe_plan(const vcaug_recipe* r, const char* corpus_dir, uint64_t seed,
                               char** plan_text) {
  return Guard([&] {
    NeedOut(plan_text, "plan_text");
    const auto registry = corpus::Registry::LoadDirectory(Str(corpus_dir, "corpus_dir"));
    *plan_text = CopyString(recipe::MakePlan(Need(r, "recipe").program, registry, seed).Describe());
  });
}

vcaug_status vcaug_recipe_execute(const vcaug_recipe* r, const char* corpus_dir,
                                  const vcaug_config* cfg, uint64_t seed, const char* workspace,
                                  vcaug_progress_fn progress, void* user, char** index_text) {
  return Guard([&] {
    if (index_text) *index_text = nullptr;
    const auto registry = corpus::Registry::LoadDirectory(Str(corpus_dir, "corpus_dir"));
    const auto plan = recipe::MakePlan(Need(r, "recipe").program, registry, seed);
    std::function<void(const std::string&)> cb;
    if (progress) cb = [&](const std::string& line) { progress(line.c_str(), user); };
    const auto result = recipe::Execute(plan, ConfigOf(cfg), Str(workspace, "workspace"), cb);
    SetString(index_text, recipe::FormatIndex(result.artifacts));
  });
}

void vcaug_recipe_free(vcaug_recipe* r) { delete r; }

// ---- evaluation ----

vcaug_status vcaug_eval_mushra(const char* responses_path, const char* systems, const char* metrics,
                               const char* baseline, const char* treatment, double alpha,
                               char** text_out, char** tsv_out) {
  return Guard([&] {
    if (text_out) *text_out = nullptr;
    if (tsv_out) *tsv_out = nullptr;
    const auto responses = eval::LoadResponses(Str(responses_path, "responses_path"));
    std::vector<std::string> sys;
    if (systems) {
      sys = CommaList(systems);
    } else {
      for (const auto& r : responses) {
        if (std::find(sys.begin(), sys.end(), r.system) == sys.end()) sys.push_back(r.system);
      }
    }
    std::vector<eval::Metric> mets;
    if (metrics) {
      for (const auto& m : CommaList(metrics)) mets.push_back(eval::ParseMetric(m));
    } else {
      mets = {eval::Metric::kSignalQuality, eval::Metric::kStyleAdequacy, eval::Metric::kNaturalness,
              eval::Metric::kSpeakerSimilarity};
    }
    if (sys.empty() || mets.empty()) throw ArgumentError("no systems or metrics selected");
    const auto table = eval::BuildTable(responses, sys, mets, Str(baseline, "baseline"),
                                        Str(treatment, "treatment"), alpha);
    SetString(text_out, eval::RenderText(table));
    SetString(tsv_out, eval::RenderTsv(table));
  });
}

vcaug_status vcaug_eval_objective(const char* const* names, const vcaug_tts* const* models, size_t count,
                                  const vcaug_manifest* reference, const vcaug_manifest* test,
                                  const vcaug_classifier* classifier, char** tsv_out) {
  return Guard([&] {
    NeedOut(tsv_out, "tsv_out");
    if (count == 0 || !names || !models) throw ArgumentError("no systems given");
    std::vector<eval::ObjectiveSystem> systems;
    for (size_t i = 0; i < count; ++i) {
      systems.push_back({Str(names[i], "system name"), Need(models[i], "model").model.get()});
    }
    const auto rows = eval::EvaluateObjective(systems, Need(reference, "reference").manifest,
                                              Need(test, "test").manifest,
                                              classifier ? classifier->model.get() : nullptr);
    *tsv_out = CopyString(eval::RenderObjective(rows));
  });
}

}  // extern "C"
