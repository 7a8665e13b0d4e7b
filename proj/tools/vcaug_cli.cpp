// Command-line front end. Links only the C API.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "vcaug/vcaug.h"

namespace {

namespace fs = std::filesystem;

// Exit codes: 0 success, 1 usage or validation error, 2 execution failure.
int ExitCode(vcaug_status s) {
  switch (s) {
    case VCAUG_OK:
      return 0;
    case VCAUG_INVALID_ARGUMENT:
    case VCAUG_PARSE:
    case VCAUG_VALIDATION:
    case VCAUG_CONTRACT:
    case VCAUG_LOOKUP:
    case VCAUG_RESOLUTION:
      return 1;
    default:
      return 2;
  }
}

struct Failure {
  vcaug_status status;
};

void Check(vcaug_status s) {
  if (s != VCAUG_OK) {
    std::cerr << "error: " << vcaug_status_name(s) << ": " << vcaug_last_error() << "\n";
    throw Failure{s};
  }
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using ConfigH = Handle<vcaug_config, vcaug_config_free>;
using ManifestH = Handle<vcaug_manifest, vcaug_manifest_free>;
using ClassifierH = Handle<vcaug_classifier, vcaug_classifier_free>;
using VcH = Handle<vcaug_vc, vcaug_vc_free>;
using TtsH = Handle<vcaug_tts, vcaug_tts_free>;
using RecipeH = Handle<vcaug_recipe, vcaug_recipe_free>;

struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { vcaug_string_free(s); }
  std::string str() const { return s ? s : ""; }
};

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  uint64_t seed = 1;
  bool seed_given = false;
  std::string workspace;
};

void AddCommon(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "key=value config file");
  sub->add_option("--set", c.sets, "override one config key (key=value); repeatable");
  sub->add_option("--seed", c.seed, "root seed for all randomness")->each([&c](const std::string&) {
    c.seed_given = true;
  });
  sub->add_option("--workspace", c.workspace,
                  "directory for relative output paths (default: $VCAUG_WORKSPACE or .)");
}

// Flags > config file > defaults.
void BuildConfig(const Common& c, ConfigH& cfg, uint64_t* seed) {
  Check(vcaug_config_new(cfg.out()));
  if (!c.config_path.empty()) Check(vcaug_config_load(cfg.get(), c.config_path.c_str()));
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
      throw Failure{VCAUG_INVALID_ARGUMENT};
    }
    Check(vcaug_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  *seed = c.seed;
  if (!c.seed_given) {
    OwnedString text;
    Check(vcaug_config_to_string(cfg.get(), &text.s));
    const std::string t = text.str();
    const auto at = t.find("\nseed=") != std::string::npos ? t.find("\nseed=") + 1
                    : t.rfind("seed=", 0) == 0           ? 0
                                                         : std::string::npos;
    if (at != std::string::npos) {
      const auto end = t.find('\n', at);
      const std::string v = t.substr(at + 5, end == std::string::npos ? end : end - at - 5);
      try {
        *seed = std::stoull(v);
      } catch (const std::exception&) {
        std::cerr << "error: config seed is not an unsigned integer: '" << v << "'\n";
        throw Failure{VCAUG_VALIDATION};
      }
    }
  }
}

std::string WorkspaceDir(const Common& c) {
  if (!c.workspace.empty()) return c.workspace;
  if (const char* env = std::getenv("VCAUG_WORKSPACE")) return env;
  return ".";
}

// Relative output paths land under the workspace; parents are created.
std::string OutPath(const Common& c, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = fs::path(WorkspaceDir(c)) / path;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return path.string();
}

std::vector<const char*> CStrings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

void PrintLine(const char* line, void*) { std::cerr << line << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "vcaug: voice-conversion data augmentation for low-resource expressive TTS.\n"
      "Configuration precedence: --seed/--set flags > --config file > built-in defaults.\n"
      "Exit codes: 0 success, 1 usage or validation error, 2 execution failure."};
  app.require_subcommand(1);
  app.set_version_flag("--version", vcaug_version());

  Common common;

  auto* gen = app.add_subcommand("gen-corpus", "write the toy corpus (manifests + mels)");
  std::string gen_out, gen_speakers, gen_styles;
  int gen_utts = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--speakers", gen_speakers, "comma-separated speaker ids (default 1,2)");
  gen->add_option("--styles", gen_styles, "comma-separated styles (default neutral,news)");
  gen->add_option("--utterances", gen_utts, "utterances per speaker/style pair (default 50)");

  auto* tvc = app.add_subcommand("train-vc", "train speaker classifier and VC model");
  std::vector<std::string> tvc_manifests;
  std::string tvc_out, tvc_clf, tvc_log;
  tvc->add_option("--manifest", tvc_manifests, "training manifest; repeatable")->required();
  tvc->add_option("--out", tvc_out, "VC checkpoint path")->required();
  tvc->add_option("--classifier-out", tvc_clf, "classifier checkpoint path")->required();
  tvc->add_option("--log", tvc_log, "per-step loss log");

  auto* conv = app.add_subcommand("convert", "convert a manifest to a target speaker");
  std::string conv_vc, conv_manifest, conv_target, conv_name, conv_out;
  conv->add_option("--vc", conv_vc, "VC checkpoint")->required();
  conv->add_option("--manifest", conv_manifest, "source manifest")->required();
  conv->add_option("--target", conv_target, "target speaker id")->required();
  conv->add_option("--name", conv_name, "name of the synthetic manifest")->required();
  conv->add_option("--out", conv_out, "output manifest path")->required();

  auto* ttts = app.add_subcommand("train-tts", "train a TTS model");
  std::vector<std::string> ttts_manifests;
  std::string ttts_clf, ttts_out, ttts_log;
  ttts->add_option("--manifest", ttts_manifests, "training manifest; repeatable")->required();
  ttts->add_option("--classifier", ttts_clf, "classifier checkpoint (multi-speaker model)");
  ttts->add_option("--out", ttts_out, "TTS checkpoint path")->required();
  ttts->add_option("--log", ttts_log, "per-step loss log");

  auto* ft = app.add_subcommand("finetune", "fine-tune a TTS model on real target recordings");
  std::string ft_tts, ft_manifest, ft_out, ft_log;
  ft->add_option("--tts", ft_tts, "base TTS checkpoint")->required();
  ft->add_option("--manifest", ft_manifest, "target manifest (real recordings)")->required();
  ft->add_option("--out", ft_out, "fine-tuned checkpoint path")->required();
  ft->add_option("--log", ft_log, "per-step loss log");

  auto* syn = app.add_subcommand("synth", "synthesize a mel spectrogram");
  std::string syn_tts, syn_phonemes, syn_ref, syn_speaker, syn_out, syn_wav;
  syn->add_option("--tts", syn_tts, "TTS checkpoint")->required();
  syn->add_option("--phonemes", syn_phonemes, "space-separated phoneme symbols")->required();
  syn->add_option("--reference", syn_ref, "manifest for the centroid z-vector")->required();
  syn->add_option("--speaker", syn_speaker, "speaker id (multi-speaker models)");
  syn->add_option("--out", syn_out, "output mel file")->required();
  syn->add_option("--wav", syn_wav, "also write a Griffin-Lim WAV preview");

  auto* run = app.add_subcommand("run-recipe", "plan and execute a recipe");
  std::string run_recipe, run_corpus;
  bool run_dry = false;
  run->add_option("--recipe", run_recipe, "recipe file")->required();
  run->add_option("--corpus", run_corpus, "directory of *.manifest files (default <workspace>/corpus)");
  run->add_flag("--dry-run", run_dry, "print the plan and exit without side effects");

  auto* em = app.add_subcommand("eval-mushra", "MUSHRA table with Holm-corrected paired t-tests");
  std::string em_responses, em_systems, em_metrics, em_baseline, em_treatment, em_out, em_tsv;
  double em_alpha = 0.05;
  em->add_option("--responses", em_responses, "response file (#mushra v1)")->required();
  em->add_option("--systems", em_systems, "comma-separated row order (default: file order)");
  em->add_option("--metrics", em_metrics, "comma-separated metrics (default: all four)");
  em->add_option("--baseline", em_baseline, "baseline system")->required();
  em->add_option("--treatment", em_treatment, "treatment system")->required();
  em->add_option("--alpha", em_alpha, "family-wise significance level");
  em->add_option("--out", em_out, "write the plain-text table here instead of stdout");
  em->add_option("--tsv", em_tsv, "write the tab-separated table here");

  auto* eo = app.add_subcommand("eval-objective", "objective comparison of TTS checkpoints");
  std::vector<std::string> eo_systems;
  std::string eo_ref, eo_test, eo_clf, eo_out;
  eo->add_option("--system", eo_systems, "NAME=checkpoint; repeatable")->required();
  eo->add_option("--reference", eo_ref, "target recordings (centroid; excluded from test)")->required();
  eo->add_option("--test", eo_test, "test manifest")->required();
  eo->add_option("--classifier", eo_clf, "classifier checkpoint for speaker scores");
  eo->add_option("--out", eo_out, "write the report here instead of stdout");

  for (auto* sub : {gen, tvc, conv, ttts, ft, syn, run, em, eo}) AddCommon(sub, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    ConfigH cfg;
    uint64_t seed = 1;
    BuildConfig(common, cfg, &seed);

    if (gen->parsed()) {
      if (!gen_speakers.empty()) Check(vcaug_config_set(cfg.get(), "corpus.speakers", gen_speakers.c_str()));
      if (!gen_styles.empty()) Check(vcaug_config_set(cfg.get(), "corpus.styles", gen_styles.c_str()));
      if (gen_utts > 0) {
        Check(vcaug_config_set(cfg.get(), "corpus.utterances_per_pair", std::to_string(gen_utts).c_str()));
      }
      const std::string dir = OutPath(common, gen_out);
      size_t n = 0;
      Check(vcaug_toy_corpus_write(cfg.get(), seed, dir.c_str(), &n));
      std::cout << "wrote " << n << " manifests to " << dir << "\n";
    } else if (tvc->parsed()) {
      VcH vc;
      ClassifierH clf;
      const auto paths = CStrings(tvc_manifests);
      const std::string log = tvc_log.empty() ? "" : OutPath(common, tvc_log);
      Check(vcaug_vc_train(cfg.get(), paths.data(), paths.size(), seed, log.empty() ? nullptr : log.c_str(),
                           vc.out(), clf.out()));
      Check(vcaug_vc_save(vc.get(), OutPath(common, tvc_out).c_str()));
      Check(vcaug_classifier_save(clf.get(), OutPath(common, tvc_clf).c_str()));
    } else if (conv->parsed()) {
      VcH vc;
      ManifestH src, out;
      Check(vcaug_vc_load(conv_vc.c_str(), vc.out()));
      Check(vcaug_manifest_load(conv_manifest.c_str(), src.out()));
      Check(vcaug_vc_convert(vc.get(), src.get(), conv_target.c_str(), conv_name.c_str(), out.out()));
      Check(vcaug_manifest_save(out.get(), OutPath(common, conv_out).c_str()));
      std::cout << "converted " << vcaug_manifest_size(out.get()) << " utterances\n";
    } else if (ttts->parsed()) {
      ClassifierH clf;
      if (!ttts_clf.empty()) Check(vcaug_classifier_load(ttts_clf.c_str(), clf.out()));
      TtsH tts;
      const auto paths = CStrings(ttts_manifests);
      const std::string log = ttts_log.empty() ? "" : OutPath(common, ttts_log);
      Check(vcaug_tts_train(cfg.get(), paths.data(), paths.size(), clf.get(), seed,
                            log.empty() ? nullptr : log.c_str(), tts.out()));
      Check(vcaug_tts_save(tts.get(), OutPath(common, ttts_out).c_str()));
    } else if (ft->parsed()) {
      TtsH tts;
      ManifestH target;
      Check(vcaug_tts_load(ft_tts.c_str(), tts.out()));
      Check(vcaug_manifest_load(ft_manifest.c_str(), target.out()));
      const std::string log = ft_log.empty() ? "" : OutPath(common, ft_log);
      Check(vcaug_tts_finetune(tts.get(), cfg.get(), target.get(), seed, log.empty() ? nullptr : log.c_str()));
      Check(vcaug_tts_save(tts.get(), OutPath(common, ft_out).c_str()));
      std::cout << "step count " << vcaug_tts_step_count(tts.get()) << "\n";
    } else if (syn->parsed()) {
      TtsH tts;
      ManifestH ref;
      Check(vcaug_tts_load(syn_tts.c_str(), tts.out()));
      Check(vcaug_manifest_load(syn_ref.c_str(), ref.out()));
      const std::string wav = syn_wav.empty() ? "" : OutPath(common, syn_wav);
      size_t frames = 0;
      Check(vcaug_tts_synthesize(tts.get(), syn_phonemes.c_str(), ref.get(),
                                 syn_speaker.empty() ? nullptr : syn_speaker.c_str(),
                                 OutPath(common, syn_out).c_str(), wav.empty() ? nullptr : wav.c_str(),
                                 &frames));
      std::cout << "synthesized " << frames << " frames\n";
    } else if (run->parsed()) {
      RecipeH recipe;
      Check(vcaug_recipe_load(run_recipe.c_str(), recipe.out()));
      // Default: the corpus that gen-corpus --out corpus wrote into this workspace.
      const std::string corpus =
          run_corpus.empty() ? (fs::path(WorkspaceDir(common)) / "corpus").string() : run_corpus;
      if (run_dry) {
        OwnedString plan;
        Check(vcaug_recipe_plan(recipe.get(), corpus.c_str(), seed, &plan.s));
        std::cout << plan.str();
      } else {
        OwnedString index;
        Check(vcaug_recipe_execute(recipe.get(), corpus.c_str(), cfg.get(), seed,
                                   WorkspaceDir(common).c_str(), PrintLine, nullptr, &index.s));
        std::cout << index.str();
      }
    } else if (em->parsed()) {
      OwnedString text, tsv;
      Check(vcaug_eval_mushra(em_responses.c_str(), em_systems.empty() ? nullptr : em_systems.c_str(),
                              em_metrics.empty() ? nullptr : em_metrics.c_str(), em_baseline.c_str(),
                              em_treatment.c_str(), em_alpha, &text.s, &tsv.s));
      if (em_out.empty()) {
        std::cout << text.str();
      } else {
        std::FILE* f = std::fopen(OutPath(common, em_out).c_str(), "wb");
        if (!f) throw Failure{VCAUG_IO};
        std::fputs(text.str().c_str(), f);
        std::fclose(f);
      }
      if (!em_tsv.empty()) {
        std::FILE* f = std::fopen(OutPath(common, em_tsv).c_str(), "wb");
        if (!f) throw Failure{VCAUG_IO};
        std::fputs(tsv.str().c_str(), f);
        std::fclose(f);
      }
    } else if (eo->parsed()) {
      std::vector<std::unique_ptr<TtsH>> models;
      std::vector<std::string> names;
      std::vector<const vcaug_tts*> ptrs;
      for (const auto& s : eo_systems) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
          std::cerr << "error: --system expects NAME=checkpoint, got '" << s << "'\n";
          return 1;
        }
        names.push_back(s.substr(0, eq));
        models.push_back(std::make_unique<TtsH>());
        Check(vcaug_tts_load(s.substr(eq + 1).c_str(), models.back()->out()));
        ptrs.push_back(models.back()->get());
      }
      ManifestH ref, test;
      ClassifierH clf;
      Check(vcaug_manifest_load(eo_ref.c_str(), ref.out()));
      Check(vcaug_manifest_load(eo_test.c_str(), test.out()));
      if (!eo_clf.empty()) Check(vcaug_classifier_load(eo_clf.c_str(), clf.out()));
      const auto cnames = CStrings(names);
      OwnedString report;
      Check(vcaug_eval_objective(cnames.data(), ptrs.data(), ptrs.size(), ref.get(), test.get(), clf.get(),
                                 &report.s));
      if (eo_out.empty()) {
        std::cout << report.str();
      } else {
        std::FILE* f = std::fopen(OutPath(common, eo_out).c_str(), "wb");
        if (!f) throw Failure{VCAUG_IO};
        std::fputs(report.str().c_str(), f);
        std::fclose(f);
      }
    }
  } catch (const Failure& f) {
    if (f.status == VCAUG_IO && vcaug_last_error()[0] == '\0') std::cerr << "error: cannot write output\n";
    return ExitCode(f.status);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
