#ifndef TRAFFIC_XAI_H
#define TRAFFIC_XAI_H

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum TxStatus {
  TX_STATUS_OK = 0,
  TX_STATUS_NULL_ARGUMENT = 1,
  TX_STATUS_INVALID_UTF8 = 2,
  TX_STATUS_INVALID_ARGUMENT = 3,
  TX_STATUS_NOT_READY = 4,
  TX_STATUS_ROW_NOT_FOUND = 5,
  TX_STATUS_UNKNOWN_METHOD = 6,
  TX_STATUS_INTERNAL = 7,
  TX_STATUS_PANIC = 8,
} TxStatus;

// Opaque engine: a loaded model, its inference rows and an explanation cache.
typedef struct TxEngine TxEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads the model artifact and data file and splits out the inference rows.
//
// # Safety
// `model_path` and `data_path` must be NUL-terminated strings; `out` must be
// writable. On success `*out` owns a new engine.
enum TxStatus tx_engine_open(const char *model_path, const char *data_path, struct TxEngine **out);

// # Safety
// `engine` must come from [`tx_engine_open`] and not be freed twice. Null is
// ignored.
void tx_engine_free(struct TxEngine *engine);

// Number of inference rows.
//
// # Safety
// `engine` must be a live engine; `out` must be writable.
enum TxStatus tx_engine_row_count(const struct TxEngine *engine, uintptr_t *out);

// Prediction table as a JSON array.
//
// # Safety
// `engine` must be a live engine; `out` must be writable. Free the result
// with [`tx_string_free`].
enum TxStatus tx_engine_predictions_json(const struct TxEngine *engine, char **out);

// Explanation of one row as JSON. `method` is one of `lime-simplified`,
// `lime-detailed`, `shap-simplified`, `shap-detailed`.
//
// # Safety
// `engine` must be a live engine, `method` a NUL-terminated string and
// `out` writable. Free the result with [`tx_string_free`].
enum TxStatus tx_engine_explain_json(const struct TxEngine *engine,
                                     uintptr_t row,
                                     const char *method,
                                     char **out);

// Explanation of one row as plain text wrapped at 80 columns.
//
// # Safety
// Same contract as [`tx_engine_explain_json`].
enum TxStatus tx_engine_explain_text(const struct TxEngine *engine,
                                     uintptr_t row,
                                     const char *method,
                                     char **out);

// Predicted flow (vehicles per hour) for an arbitrary feature vector.
//
// # Safety
// `engine` must be a live engine; `out` must be writable.
enum TxStatus tx_engine_predict(const struct TxEngine *engine,
                                double interval,
                                double occ,
                                double speed,
                                double *out);

// WCAG contrast ratio between two `#RRGGBB` colors.
//
// # Safety
// `fg` and `bg` must be NUL-terminated strings; `out` must be writable.
enum TxStatus tx_contrast_ratio(const char *fg, const char *bg, double *out);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void tx_string_free(char *s);

// Message for the last failed call on this thread, or null after a
// success. Valid until the next call into the library on this thread.
const char *tx_last_error_message(void);

// Library version, static storage.
const char *tx_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAFFIC_XAI_H */
