#ifndef DARKNET_MINER_H
#define DARKNET_MINER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DnmStatus {
  DNM_STATUS_OK = 0,
  DNM_STATUS_NULL_ARGUMENT = 1,
  DNM_STATUS_INVALID_UTF8 = 2,
  DNM_STATUS_INVALID_ARGUMENT = 3,
  DNM_STATUS_NOT_FOUND = 4,
  DNM_STATUS_CONFLICT = 5,
  DNM_STATUS_TOO_LARGE = 6,
  DNM_STATUS_IO = 7,
  DNM_STATUS_CORRUPT = 8,
  DNM_STATUS_PANIC = 9,
} DnmStatus;

/**
 * Opaque handle to an index store directory.
 */
typedef struct DnmStore DnmStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens (creating if needed) the store rooted at `data_dir`.
 *
 * # Safety
 * `data_dir` must be a NUL-terminated string and `out` valid for one
 * pointer write.
 */
enum DnmStatus dnm_store_open(const char *data_dir, struct DnmStore **out);

/**
 * Checkpoints every index and releases the handle. Null is ignored.
 *
 * # Safety
 * `handle` must be null or a pointer from [`dnm_store_open`] not yet freed.
 */
void dnm_store_free(struct DnmStore *handle);

/**
 * # Safety
 * Pointer arguments as documented on [`dnm_store_open`].
 */
enum DnmStatus dnm_index_create(struct DnmStore *handle, const char *name);

/**
 * Writes `{"indexes":[{"name":..,"records":..}]}`.
 *
 * # Safety
 * Pointer arguments as documented on [`dnm_store_open`].
 */
enum DnmStatus dnm_index_list(struct DnmStore *handle, char **out_json);

/**
 * Indexes one DNDO object or an array of them into `name` (created if
 * missing). `out_count`, when not null, receives the number indexed.
 *
 * # Safety
 * Pointer arguments as documented on [`dnm_store_open`]; `out_count` may
 * be null.
 */
enum DnmStatus dnm_index_records(struct DnmStore *handle,
                                 const char *name,
                                 const char *dndo_json,
                                 size_t *out_count);

/**
 * Writes `{"doc_id":..,"record":{..}}`.
 *
 * # Safety
 * Pointer arguments as documented on [`dnm_store_open`].
 */
enum DnmStatus dnm_get_record(struct DnmStore *handle,
                              const char *name,
                              const char *doc_id,
                              char **out_json);

/**
 * Searches one index, or every index when `name` is null. `field` may be
 * null (all fields) or one of title, seller, category, notes.
 * `filters_json` may be null or an object with any of product_class,
 * flagged, viewed, origin_country, seller, payment, currency,
 * price_min_minor, price_max_minor.
 *
 * Writes `{"total":..,"hits":[{"index","doc_id","score","matched_fields"}]}`.
 *
 * # Safety
 * Pointer arguments as documented on [`dnm_store_open`]; `name`, `field`
 * and `filters_json` may be null.
 */
enum DnmStatus dnm_search(struct DnmStore *handle,
                          const char *name,
                          const char *query,
                          const char *field,
                          const char *filters_json,
                          char **out_json);

/**
 * Applies one analyst mutation given as JSON: `{"kind":"viewed"}`,
 * `{"kind":"flag"}` (toggle), `{"kind":"flag","value":true}`,
 * `{"kind":"comment","text":".."}` or `{"kind":"close"}`. Writes the
 * updated record.
 *
 * # Safety
 * Pointer arguments as documented on [`dnm_store_open`].
 */
enum DnmStatus dnm_annotate(struct DnmStore *handle,
                            const char *name,
                            const char *doc_id,
                            const char *mutation_json,
                            char **out_json);

/**
 * Computes an aggregate (split, top-sellers, seller-share, heatmap,
 * prices, payments, quantities, origin-range) over one index.
 * `params_json` may be null or an object with n, class, top_k, edges,
 * country, seller.
 *
 * # Safety
 * Pointer arguments as documented on [`dnm_store_open`]; `params_json`
 * may be null.
 */
enum DnmStatus dnm_analytics(struct DnmStore *handle,
                             const char *name,
                             const char *aggregate,
                             const char *params_json,
                             char **out_json);

/**
 * Writes snapshots for every index and truncates their logs.
 *
 * # Safety
 * Pointer arguments as documented on [`dnm_store_open`].
 */
enum DnmStatus dnm_checkpoint(struct DnmStore *handle);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *dnm_last_error(void);

/**
 * Releases a string returned through an `out_json` parameter. Null is
 * ignored.
 *
 * # Safety
 * `s` must be null or a pointer produced by this library and not yet
 * freed.
 */
void dnm_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *dnm_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DARKNET_MINER_H */
