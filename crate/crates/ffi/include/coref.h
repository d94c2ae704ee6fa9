#ifndef COREF_H
#define COREF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CorefStatus {
  COREF_STATUS_OK = 0,
  COREF_STATUS_NULL_ARGUMENT = 1,
  COREF_STATUS_INVALID_UTF8 = 2,
  COREF_STATUS_PARSE = 3,
  COREF_STATUS_ENTITY = 4,
  COREF_STATUS_FRAMING = 5,
  COREF_STATUS_INFERENCE = 6,
  COREF_STATUS_MERGE = 7,
  COREF_STATUS_CONFIG = 8,
  COREF_STATUS_SCORE = 9,
  COREF_STATUS_PANIC = 99,
} CorefStatus;

/**
 * Parsed documents.
 */
typedef struct CorefCorpus CorefCorpus;

/**
 * Framing and decoding settings. Obtain defaults from `coref_options_default`.
 */
typedef struct CorefOptions {
  /**
   * Instruction set, 1 through 5.
   */
  uint8_t instruction;
  /**
   * Substituted into instruction 1; NULL means "English".
   */
  const char *language;
  bool zero_suffix;
  size_t frame_budget;
  size_t tuple_budget;
  /**
   * Measure lengths in characters instead of whitespace-separated words.
   */
  bool count_chars;
  uint32_t max_retries;
  size_t max_new_tokens;
} CorefOptions;

/**
 * Produces the generation for one slot. `context` is the NUL-terminated
 * prompt. Write at most `capacity` bytes (no terminator needed) into
 * `buffer` and return the number written, or a negative value on failure.
 */
typedef ptrdiff_t (*CorefCompleteFn)(void *user_data,
                                     const char *context,
                                     char *buffer,
                                     size_t capacity);

/**
 * Micro-averaged scores over a whole corpus.
 */
typedef struct CorefScores {
  double muc_p;
  double muc_r;
  double muc_f1;
  double b3_p;
  double b3_r;
  double b3_f1;
  double ceaf_e_p;
  double ceaf_e_r;
  double ceaf_e_f1;
  double conll;
  /**
   * Simplified zero-anaphor score.
   */
  double zero_p;
  double zero_r;
  double zero_f1;
  size_t matched;
  size_t missing;
  size_t spurious;
} CorefScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or NULL. Valid until the
 * next library call on the same thread.
 */
const char *coref_last_error_message(void);

struct CorefOptions coref_options_default(void);

/**
 * Parse CoNLL-U text into a new corpus stored in `*out`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CorefStatus coref_corpus_parse(const char *text, struct CorefCorpus **out);

/**
 * # Safety
 * `corpus` must come from this library and not be used afterwards. NULL is ignored.
 */
void coref_corpus_free(struct CorefCorpus *corpus);

/**
 * Number of documents, 0 for NULL.
 *
 * # Safety
 * `corpus` must be NULL or a live handle.
 */
size_t coref_corpus_len(const struct CorefCorpus *corpus);

/**
 * Serialize the corpus back to CoNLL-U text.
 *
 * # Safety
 * `corpus` must be a live handle and `out` a valid pointer.
 */
enum CorefStatus coref_corpus_serialize(const struct CorefCorpus *corpus, char **out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. NULL is ignored.
 */
void coref_string_free(char *s);

/**
 * Training records as JSON lines. `options` may be NULL for defaults.
 *
 * # Safety
 * Pointers must be valid; `options.language` NULL or NUL-terminated.
 */
enum CorefStatus coref_export_train(const struct CorefCorpus *corpus,
                                    const struct CorefOptions *options,
                                    char **out);

/**
 * Cluster each document with its own gold entities as the predictor.
 *
 * # Safety
 * Pointers must be valid; `options` may be NULL.
 */
enum CorefStatus coref_infer_oracle(const struct CorefCorpus *corpus,
                                    const struct CorefOptions *options,
                                    struct CorefCorpus **out);

/**
 * Cluster mentions using `complete` as the model, called once per slot
 * (plus retries) in document order on the calling thread.
 *
 * # Safety
 * Pointers must be valid; `complete` must honour its buffer contract.
 */
enum CorefStatus coref_infer_with_callback(const struct CorefCorpus *corpus,
                                           const struct CorefOptions *options,
                                           CorefCompleteFn complete,
                                           void *user_data,
                                           struct CorefCorpus **out);

/**
 * Score `response` against `key`; documents are paired by position.
 *
 * # Safety
 * Pointers must be valid.
 */
enum CorefStatus coref_score(const struct CorefCorpus *key,
                             const struct CorefCorpus *response,
                             bool remove_singletons,
                             struct CorefScores *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COREF_H */
