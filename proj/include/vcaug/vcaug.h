/* C interface to the vcaug library: toy corpus generation, speaker
 * classifier, voice conversion, TTS training and fine-tuning, recipe
 * execution, and evaluation.
 *
 * Every fallible call returns a vcaug_status. On failure the message is
 * available from vcaug_last_error() on the same thread until the next call.
 * Strings returned through char** are owned by the caller and released with
 * vcaug_string_free(). Handles are released with their *_free function;
 * passing NULL to a *_free function is a no-op.
 */
#ifndef VCAUG_VCAUG_H_
#define VCAUG_VCAUG_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define VCAUG_API __declspec(dllexport)
#else
#define VCAUG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vcaug_status {
  VCAUG_OK = 0,
  VCAUG_INVALID_ARGUMENT = 1, /* NULL handle or malformed argument */
  VCAUG_PARSE = 2,            /* malformed input text (line, column in message) */
  VCAUG_VALIDATION = 3,       /* input violates a domain invariant */
  VCAUG_CONTRACT = 4,         /* operation precondition not met */
  VCAUG_LOOKUP = 5,           /* unknown speaker, symbol, system, name */
  VCAUG_RESOLUTION = 6,       /* recipe dataset not in the registry */
  VCAUG_IO = 7,
  VCAUG_EXECUTION = 8,        /* a pipeline stage failed */
  VCAUG_INTERNAL = 9
} vcaug_status;

typedef struct vcaug_config vcaug_config;
typedef struct vcaug_manifest vcaug_manifest;
typedef struct vcaug_classifier vcaug_classifier;
typedef struct vcaug_vc vcaug_vc;
typedef struct vcaug_tts vcaug_tts;
typedef struct vcaug_recipe vcaug_recipe;

/* Called with one line of progress text per pipeline event. */
typedef void (*vcaug_progress_fn)(const char* line, void* user);

VCAUG_API const char* vcaug_version(void);
VCAUG_API const char* vcaug_last_error(void);
VCAUG_API const char* vcaug_status_name(vcaug_status status);
VCAUG_API void vcaug_string_free(char* s);

/* ---- configuration (key=value) ---- */
VCAUG_API vcaug_status vcaug_config_new(vcaug_config** out);
/* Merges a key=value file into cfg; later keys win. */
VCAUG_API vcaug_status vcaug_config_load(vcaug_config* cfg, const char* path);
VCAUG_API vcaug_status vcaug_config_set(vcaug_config* cfg, const char* key, const char* value);
VCAUG_API vcaug_status vcaug_config_to_string(const vcaug_config* cfg, char** out);
VCAUG_API void vcaug_config_free(vcaug_config* cfg);

/* ---- corpus ---- */
/* Writes the toy corpus (one manifest per speaker/style pair plus
 * features.conf) into dir. Keys: corpus.speakers, corpus.styles (comma
 * lists), corpus.utterances_per_pair, corpus.mel_bands. */
VCAUG_API vcaug_status vcaug_toy_corpus_write(const vcaug_config* cfg, uint64_t seed, const char* dir,
                                             size_t* manifests_written);
VCAUG_API vcaug_status vcaug_manifest_load(const char* path, vcaug_manifest** out);
VCAUG_API vcaug_status vcaug_manifest_save(const vcaug_manifest* m, const char* path);
VCAUG_API size_t vcaug_manifest_size(const vcaug_manifest* m);
VCAUG_API double vcaug_manifest_minutes(const vcaug_manifest* m);
VCAUG_API void vcaug_manifest_free(vcaug_manifest* m);

/* ---- speaker classifier and voice conversion ---- */
/* Trains the classifier, then the VC model, on the union of the manifests. */
VCAUG_API vcaug_status vcaug_vc_train(const vcaug_config* cfg, const char* const* manifest_paths,
                                      size_t count, uint64_t seed, const char* log_path,
                                      vcaug_vc** vc_out, vcaug_classifier** classifier_out);
VCAUG_API vcaug_status vcaug_vc_convert(const vcaug_vc* vc, const vcaug_manifest* source,
                                        const char* target_speaker, const char* out_name,
                                        vcaug_manifest** out);
VCAUG_API vcaug_status vcaug_vc_save(const vcaug_vc* vc, const char* path);
VCAUG_API vcaug_status vcaug_vc_load(const char* path, vcaug_vc** out);
VCAUG_API void vcaug_vc_free(vcaug_vc* vc);

VCAUG_API vcaug_status vcaug_classifier_save(const vcaug_classifier* c, const char* path);
VCAUG_API vcaug_status vcaug_classifier_load(const char* path, vcaug_classifier** out);
VCAUG_API void vcaug_classifier_free(vcaug_classifier* c);

/* ---- TTS ---- */
/* classifier non-NULL selects a multi-speaker model. Keys: tts.* for the
 * architecture, tts.train.* for the schedule. log_path may be NULL. */
VCAUG_API vcaug_status vcaug_tts_train(const vcaug_config* cfg, const char* const* manifest_paths,
                                       size_t count, const vcaug_classifier* classifier,
                                       uint64_t seed, const char* log_path, vcaug_tts** out);
/* Keys tts.finetune.*. The manifest must hold real recordings only. */
VCAUG_API vcaug_status vcaug_tts_finetune(vcaug_tts* tts, const vcaug_config* cfg,
                                          const vcaug_manifest* target, uint64_t seed,
                                          const char* log_path);
/* phonemes: space-separated symbols. The z-vector is the centroid of
 * `reference`. speaker is required for multi-speaker models, else NULL.
 * wav_path may be NULL. Frame count is returned through frames. */
VCAUG_API vcaug_status vcaug_tts_synthesize(const vcaug_tts* tts, const char* phonemes,
                                            const vcaug_manifest* reference, const char* speaker,
                                            const char* mel_path, const char* wav_path,
                                            size_t* frames);
VCAUG_API vcaug_status vcaug_tts_save(const vcaug_tts* tts, const char* path);
VCAUG_API vcaug_status vcaug_tts_load(const char* path, vcaug_tts** out);
VCAUG_API int64_t vcaug_tts_step_count(const vcaug_tts* tts);
VCAUG_API void vcaug_tts_free(vcaug_tts* tts);

/* ---- recipes ---- */
VCAUG_API vcaug_status vcaug_recipe_load(const char* path, vcaug_recipe** out);
VCAUG_API vcaug_status vcaug_recipe_parse(const char* text, vcaug_recipe** out);
VCAUG_API vcaug_status vcaug_recipe_format(const vcaug_recipe* r, char** out);
VCAUG_API size_t vcaug_recipe_statement_count(const vcaug_recipe* r);
/* Resolves datasets against the manifests in corpus_dir; no side effects. */
VCAUG_API vcaug_status vcaug_recipe_plan(const vcaug_recipe* r, const char* corpus_dir,
                                         uint64_t seed, char** plan_text);
/* Runs (or resumes) the recipe in workspace; returns the artifact index. */
VCAUG_API vcaug_status vcaug_recipe_execute(const vcaug_recipe* r, const char* corpus_dir,
                                            const vcaug_config* cfg, uint64_t seed,
                                            const char* workspace, vcaug_progress_fn progress,
                                            void* user, char** index_text);
VCAUG_API void vcaug_recipe_free(vcaug_recipe* r);

/* ---- evaluation ---- */
/* systems / metrics: comma-separated, NULL for every system in file order and
 * all four metrics. Writes the plain-text table to text_out and the
 * tab-separated variant to tsv_out (either may be NULL). */
VCAUG_API vcaug_status vcaug_eval_mushra(const char* responses_path, const char* systems,
                                         const char* metrics, const char* baseline,
                                         const char* treatment, double alpha, char** text_out,
                                         char** tsv_out);
/* Synthesizes the test utterances not in `reference` with each model and
 * reports mel L1, length ratio and (with a classifier) target-speaker score. */
VCAUG_API vcaug_status vcaug_eval_objective(const char* const* names, const vcaug_tts* const* models,
                                            size_t count, const vcaug_manifest* reference,
                                            const vcaug_manifest* test,
                                            const vcaug_classifier* classifier, char** tsv_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* VCAUG_VCAUG_H_ */
