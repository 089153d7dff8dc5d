#ifndef FOLILAB_H
#define FOLILAB_H

/*
 * C API of the folilab shared library.
 *
 * All functions return a folilab_status; on failure folilab_last_error()
 * holds a human-readable message (thread local, valid until the next call
 * on the same thread). Strings returned through char** are heap allocated
 * and must be released with folilab_string_free().
 */

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  FOLILAB_OK = 0,
  FOLILAB_ERR_ARGUMENT = 1,  /* malformed arguments or mismatched inputs   */
  FOLILAB_ERR_CONFIG = 2,    /* invalid configuration or model parameters  */
  FOLILAB_ERR_DOMAIN = 3,    /* point outside its chart domain             */
  FOLILAB_ERR_NUMERIC = 4,   /* degenerate or ill-conditioned linear data  */
  FOLILAB_ERR_MODEL = 5,     /* model-consistency or transport failure     */
  FOLILAB_ERR_SAMPLING = 6,  /* a Monte Carlo routine ran out of samples   */
  FOLILAB_ERR_IO = 7,        /* file system failure                        */
  FOLILAB_ERR_INTERNAL = 8
} folilab_status;

/* Opaque handle to a constructed foliated geometry. */
typedef struct folilab_model folilab_model;

const char* folilab_version(void);

/* Message for the most recent failure on this thread; never NULL. */
const char* folilab_last_error(void);

/* Catalog of built-in models with parameter ranges, as JSON. */
folilab_status folilab_list_models(char** json_out);

/* Builds a model from a ModelSpec JSON object:
 *   {"name": "hopf_s3", "params": {"epsilon": 0.8}}                       */
folilab_status folilab_model_create(const char* spec_json,
                                    folilab_model** out);
void folilab_model_destroy(folilab_model* model);

/* Dimension, leaf dimension, chart count etc. of a model, as JSON. */
folilab_status folilab_model_info(const folilab_model* model,
                                  char** json_out);

/* Runs the experiment described by an ExperimentConfig JSON object and
 * returns the report as JSON. include_timing = 0 zeroes the timing field
 * so reports with equal config are byte identical. */
folilab_status folilab_run_experiment(const char* config_json,
                                      int include_timing,
                                      char** report_json_out);

/* Runs the experiment and writes the report JSON to `path` plus a CSV
 * sibling with the same stem. A NULL path uses the config's output_path.
 * pass_out (optional) receives 1 when the suite passed, else 0. */
folilab_status folilab_run_experiment_to_file(const char* config_json,
                                              const char* path,
                                              int include_timing,
                                              int* pass_out);

void folilab_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* FOLILAB_H */
