/* C interface to the vecspace library.
 *
 * Every function returns a vcs_status. On failure a message is available from
 * vcs_last_error() until the next call on the same thread. Strings returned
 * through `char**` out-parameters are owned by the caller and released with
 * vcs_string_free(). JSON arguments may be NULL to take every default.
 */
#ifndef VECSPACE_H
#define VECSPACE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define VCS_API __declspec(dllexport)
#else
#define VCS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vcs_status {
    VCS_OK = 0,
    VCS_INVALID_ARGUMENT = 1,
    VCS_IO_ERROR = 2,
    VCS_FORMAT_ERROR = 3,
    VCS_RUNTIME_ERROR = 4
} vcs_status;

typedef struct vcs_models vcs_models;

VCS_API const char* vcs_version(void);
VCS_API const char* vcs_last_error(void);
VCS_API void vcs_string_free(char* s);

/* Writes manifest.json and one image per scene into out_dir. */
VCS_API vcs_status vcs_gen_corpus(uint64_t seed, size_t num_scenes, size_t captions_per_scene, const char* out_dir);

/* Whitespace-tokenized BLEU. Tokens are interned per call, so any words work.
 * breakdown_json (optional) receives precisions, brevity penalty and lengths. */
VCS_API vcs_status vcs_bleu(const char* candidate, const char* const* references, size_t num_references,
                            size_t max_order, double* score, char** breakdown_json);

/* Reads a grouped caption file or corpus manifest and writes ordered pairs as
 * JSON lines to out_path (optional). max_pairs_per_group > 0 keeps that many
 * pairs per group, chosen with seed. stats_json (optional) receives counts. */
VCS_API vcs_status vcs_pairs(const char* input_path, const char* out_path, size_t max_pairs_per_group, uint64_t seed,
                             char** stats_json);

/* component: "autoencoder", "captioner" or "paraphraser". config_json holds
 * architecture and recipe overrides. The paraphraser trains on pairs_path when
 * given, otherwise on pairs built from the corpus. Writes the checkpoint and a
 * sibling "<out_path>.config.json"; log_json (optional) receives the loss curve. */
VCS_API vcs_status vcs_train(const char* component, const char* corpus_path, const char* pairs_path,
                             const char* config_json, const char* out_path, char** log_json);

/* Any checkpoint path may be NULL; operations needing a missing model fail. */
VCS_API vcs_status vcs_models_load(const char* autoencoder_ckpt, const char* captioner_ckpt,
                                   const char* paraphraser_ckpt, vcs_models** out);
VCS_API void vcs_models_free(vcs_models* models);

/* chain >= 1 applies the paraphraser repeatedly. */
VCS_API vcs_status vcs_paraphrase(const vcs_models* models, const char* sentence, size_t chain, uint64_t seed,
                                  char** result_json);

/* update_json mirrors the update configuration (gamma2, gamma3, gamma4,
 * word_term_scale, step_size, iterations, stop_on_perfect_bleu,
 * encoder_branch_stop_gradient, ascent, seed). image_path and trace_path are optional. */
VCS_API vcs_status vcs_generate(const vcs_models* models, const char* const* captions, size_t num_captions,
                                const char* update_json, const char* image_path, const char* trace_path,
                                char** result_json);

/* source: "beam" or "paraphrase". */
VCS_API vcs_status vcs_img2img(const vcs_models* models, const char* input_image, const char* source, size_t k,
                               const char* update_json, const char* image_path, const char* trace_path,
                               char** result_json);

/* Multi- versus single-caption comparison over the first num_scenes records of
 * the corpus. trace_dir and report_path are optional. */
VCS_API vcs_status vcs_evaluate(const vcs_models* models, const char* corpus_path, size_t num_scenes, size_t num_seeds,
                                const char* update_json, const char* trace_dir, const char* report_path,
                                char** report_json);

#ifdef __cplusplus
}
#endif

#endif
