#ifndef TOURFLOW_H
#define TOURFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Size of the answer buffer passed to [`TfLlmCallback`].
 */
#define TF_ANSWER_CAPACITY 8192

typedef enum TfStatus {
  TF_STATUS_OK = 0,
  TF_STATUS_NULL_ARGUMENT = 1,
  TF_STATUS_INVALID_UTF8 = 2,
  TF_STATUS_IO = 3,
  TF_STATUS_INVALID_FLOW = 4,
  TF_STATUS_INVALID_RESOURCES = 5,
  TF_STATUS_INVALID_ROUTES = 6,
  TF_STATUS_SESSION_ENDED = 7,
  TF_STATUS_SCHEMA = 8,
  TF_STATUS_INTERNAL = 99,
} TfStatus;

typedef struct TfEngine TfEngine;

typedef struct TfSession TfSession;

/**
 * Answers LLM questions on behalf of the engine.
 *
 * `request_json` is `{"model": ..., "messages": [{"role", "content"}, ...]}`.
 * Write the UTF-8 answer into `out_buf` (at most `out_cap` bytes, no NUL
 * needed) and return the number of bytes written. Return -1 for a timeout,
 * -2 when the answer was filtered and any other negative value for a
 * transport failure. Called from a worker thread; may be called
 * concurrently when several sessions run at once.
 */
typedef int64_t (*TfLlmCallback)(void *user_data,
                                 const char *request_json,
                                 char *out_buf,
                                 size_t out_cap);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load a flow, NLU resources and route catalog and build an engine.
 *
 * Null paths select the built-in Kyoto data. With a null `llm_callback` the
 * engine talks HTTP to the endpoint named by `TOURFLOW_LLM_ENDPOINT`.
 */
enum TfStatus tf_engine_new(const char *flow_path,
                            const char *resources_dir,
                            const char *routes_path,
                            TfLlmCallback llm_callback,
                            void *user_data,
                            struct TfEngine **out_engine);

void tf_engine_free(struct TfEngine *engine);

/**
 * Start a session. `session_id` may be null for a random id. The opening
 * events are written to `out_events_json`.
 */
enum TfStatus tf_session_new(const struct TfEngine *engine,
                             const char *session_id,
                             uint64_t now_ms,
                             struct TfSession **out_session,
                             char **out_events_json);

/**
 * Feed one user utterance. On failure the session is left unchanged.
 */
enum TfStatus tf_session_step(const struct TfEngine *engine,
                              struct TfSession *session,
                              const char *text,
                              uint64_t now_ms,
                              char **out_events_json);

/**
 * True once the dialogue has ended.
 */
bool tf_session_ended(const struct TfSession *session);

/**
 * Serialize the session as a JSON snapshot.
 */
enum TfStatus tf_session_snapshot(const struct TfSession *session, char **out_json);

/**
 * Rebuild a session from a snapshot, checking it against the engine's flow.
 */
enum TfStatus tf_session_restore(const struct TfEngine *engine,
                                 const char *snapshot_json,
                                 struct TfSession **out_session);

void tf_session_free(struct TfSession *session);

void tf_string_free(char *s);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *tf_last_error(void);

/**
 * Check a flow sheet file. Diagnostics are written as a JSON array to
 * `out_diagnostics_json` (empty array when the flow is valid); the status
 * is `Ok` only when there are none.
 */
enum TfStatus tf_validate_flow(const char *flow_path,
                               bool strict_questions,
                               char **out_diagnostics_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOURFLOW_H */
