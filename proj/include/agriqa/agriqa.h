#ifndef AGRIQA_AGRIQA_H
#define AGRIQA_AGRIQA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define AGRIQA_API __declspec(dllexport)
#else
#define AGRIQA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum agriqa_status {
    AGRIQA_OK = 0,
    AGRIQA_E_INVALID_ARGUMENT = 1,
    AGRIQA_E_IO = 2,
    AGRIQA_E_PARSE = 3,
    AGRIQA_E_VALIDATION = 4,
    AGRIQA_E_NO_DATA = 5,
    AGRIQA_E_PROVIDER_TIMEOUT = 6,
    AGRIQA_E_PROVIDER_STATUS = 7,
    AGRIQA_E_PROVIDER_MALFORMED = 8,
    AGRIQA_E_PROVIDER_UNREACHABLE = 9,
    AGRIQA_E_PROVIDER_EMPTY = 10,
    AGRIQA_E_NETWORK = 11,
    AGRIQA_E_INTERNAL = 12
} agriqa_status;

typedef struct agriqa_config agriqa_config;
typedef struct agriqa_rules agriqa_rules;
typedef struct agriqa_pipeline agriqa_pipeline;
typedef struct agriqa_service agriqa_service;
typedef struct agriqa_stub agriqa_stub;

/* Strings returned through char** out-parameters are heap allocated and
 * must be released with agriqa_string_free. */
AGRIQA_API void agriqa_string_free(char* s);

AGRIQA_API const char* agriqa_version(void);
AGRIQA_API const char* agriqa_status_name(agriqa_status status);
/* Message of the last failure on the calling thread; "" if none. */
AGRIQA_API const char* agriqa_last_error(void);

/* ---- config ------------------------------------------------------------ */

AGRIQA_API agriqa_status agriqa_config_new(agriqa_config** out);
AGRIQA_API agriqa_status agriqa_config_load(const char* path, agriqa_config** out);
AGRIQA_API agriqa_status agriqa_config_set(agriqa_config* cfg, const char* section, const char* key,
                                           const char* value);
AGRIQA_API agriqa_status agriqa_config_apply_env(agriqa_config* cfg);
/* *out is NULL when the key is absent. */
AGRIQA_API agriqa_status agriqa_config_get(const agriqa_config* cfg, const char* section, const char* key,
                                           char** out);
/* Hex SHA-256 of the loaded file bytes. Owned by the handle. */
AGRIQA_API const char* agriqa_config_hash(const agriqa_config* cfg);
AGRIQA_API void agriqa_config_free(agriqa_config* cfg);

/* ---- pipeline stages (file in, file out) -------------------------------- */

/* CSV -> JSONL. stats_json is filled whenever the input could be opened,
 * including the AGRIQA_E_NO_DATA case. */
AGRIQA_API agriqa_status agriqa_ingest(const agriqa_config* cfg, const char* csv_path, const char* out_jsonl,
                                       char** stats_json);

/* Normalizes query_text and expert_answer; run-on flags go to flags_path
 * when it is non-NULL. rules_dir NULL means the configured directory. */
AGRIQA_API agriqa_status agriqa_clean(const agriqa_config* cfg, const char* in_jsonl, const char* rules_dir,
                                      const char* out_jsonl, const char* flags_path, char** summary_json);

/* Writes train.jsonl, validation.jsonl and test.jsonl into out_dir. */
AGRIQA_API agriqa_status agriqa_split(const agriqa_config* cfg, const char* in_jsonl, double test_frac,
                                      double val_frac, uint64_t seed, const char* out_dir, char** summary_json);

/* embeddings may be NULL. */
AGRIQA_API agriqa_status agriqa_evaluate(const agriqa_config* cfg, const char* pred_jsonl, const char* ref_jsonl,
                                         const char* embeddings, char** report_json);

typedef enum agriqa_format { AGRIQA_FORMAT_JSON = 0, AGRIQA_FORMAT_TABLE = 1 } agriqa_format;

/* by: comma list of sector, season, query_type. min_subset_size 0 means
 * the default. */
AGRIQA_API agriqa_status agriqa_ablate(const agriqa_config* cfg, const char* pred_jsonl, const char* ref_jsonl,
                                       const char* corpus_jsonl, const char* by, const char* embeddings,
                                       size_t min_subset_size, agriqa_format format, char** out);

/* ---- normalization ------------------------------------------------------ */

AGRIQA_API agriqa_status agriqa_rules_load(const char* dir, agriqa_rules** out);
AGRIQA_API agriqa_status agriqa_normalize(const agriqa_rules* rules, const char* text, char** out);
/* JSON array of {value, literal, unit, per_unit}. */
AGRIQA_API agriqa_status agriqa_parse_quantities(const agriqa_rules* rules, const char* text, char** out_json);
AGRIQA_API void agriqa_rules_free(agriqa_rules* rules);

/* ---- answering ---------------------------------------------------------- */

/* Builds normalize -> generate -> rephrase from the [generate], [rephrase]
 * and [normalize] sections. */
AGRIQA_API agriqa_status agriqa_pipeline_create(const agriqa_config* cfg, agriqa_pipeline** out);
AGRIQA_API agriqa_status agriqa_pipeline_ask(const agriqa_pipeline* p, const char* query, int rephrase,
                                             char** bundle_json);
AGRIQA_API void agriqa_pipeline_free(agriqa_pipeline* p);

/* ---- service ------------------------------------------------------------ */

AGRIQA_API agriqa_status agriqa_service_create(const agriqa_config* cfg, const agriqa_pipeline* p,
                                               agriqa_service** out);
/* addr "host:port"; NULL means [service] addr. Port 0 picks a free port. */
AGRIQA_API agriqa_status agriqa_service_start(agriqa_service* s, const char* addr, int* bound_port);
/* Stops serving and flushes the query log. */
AGRIQA_API agriqa_status agriqa_service_stop(agriqa_service* s);
AGRIQA_API void agriqa_service_free(agriqa_service* s);

/* ---- fixture-backed stub provider -------------------------------------- */

typedef enum agriqa_fault {
    AGRIQA_FAULT_NONE = 0,
    AGRIQA_FAULT_HANG = 1,
    AGRIQA_FAULT_STATUS = 2,
    AGRIQA_FAULT_FAIL_THEN_OK = 3,
    AGRIQA_FAULT_MALFORMED = 4,
    AGRIQA_FAULT_EMPTY = 5
} agriqa_fault;

AGRIQA_API agriqa_status agriqa_stub_start(const char* fixtures_jsonl, const char* addr, agriqa_stub** out,
                                           int* bound_port);
AGRIQA_API agriqa_status agriqa_stub_set_fault(agriqa_stub* s, agriqa_fault mode, int status, int fail_count);
/* Completion endpoint URL. */
AGRIQA_API agriqa_status agriqa_stub_url(const agriqa_stub* s, char** out);
AGRIQA_API void agriqa_stub_free(agriqa_stub* s);

/* ---- run manifest ------------------------------------------------------- */

/* seed may be NULL. Times are Unix milliseconds. */
AGRIQA_API agriqa_status agriqa_manifest_write(const char* path, const char* subcommand, const char* const* inputs,
                                               size_t n_inputs, const char* const* outputs, size_t n_outputs,
                                               const char* config_hash, const uint64_t* seed,
                                               int64_t started_ms, int64_t finished_ms);

#ifdef __cplusplus
}
#endif

#endif
