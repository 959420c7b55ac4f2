#ifndef DCMG_H
#define DCMG_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DCMG_API __declspec(dllexport)
#else
#define DCMG_API __attribute__((visibility("default")))
#endif

typedef enum dcmg_status {
    DCMG_OK = 0,
    DCMG_E_IO = 1,
    DCMG_E_VALIDATION = 2,
    DCMG_E_NONCONVERGENCE = 3,
    DCMG_E_DIVERGENCE = 4,
    DCMG_E_ARGUMENT = 5,
    DCMG_E_PARSE = 6,
    DCMG_E_NUMERIC = 7,
    DCMG_E_INTERNAL = 8
} dcmg_status;

typedef struct dcmg_model dcmg_model;
typedef struct dcmg_scenario dcmg_scenario;

/* Fields left at their sentinel keep the scenario's value. */
typedef struct dcmg_sim_overrides {
    double step_s;      /* <= 0: keep */
    double horizon_s;   /* <= 0: keep */
    int engine;         /* -1 keep, 0 serial, 1 parallel */
    int integrator;     /* -1 keep, 0 euler, 1 rk4 */
    int neighbor_info;  /* -1 keep, 0 exchange, 1 measured */
} dcmg_sim_overrides;

typedef struct dcmg_run_summary {
    int converged;
    size_t steps;
    double final_rhs;
    size_t box_violations;
    size_t plant_failures;
} dcmg_run_summary;

DCMG_API const char* dcmg_version(void);
/* Message for the last failing call on this thread. */
DCMG_API const char* dcmg_last_error(void);
DCMG_API void dcmg_string_free(char* s);

DCMG_API dcmg_status dcmg_model_load(const char* path, dcmg_model** out);
DCMG_API dcmg_status dcmg_model_parse(const char* json_text, dcmg_model** out);
DCMG_API void dcmg_model_free(dcmg_model* model);
DCMG_API dcmg_status dcmg_model_size(const dcmg_model* model, size_t* nodes, size_t* lines);
DCMG_API dcmg_status dcmg_model_describe(const dcmg_model* model, char** json_out);

DCMG_API dcmg_status dcmg_scenario_load(const char* path, dcmg_scenario** out);
DCMG_API dcmg_status dcmg_scenario_parse(const char* json_text, dcmg_scenario** out);
DCMG_API void dcmg_scenario_free(dcmg_scenario* scenario);
DCMG_API void dcmg_sim_overrides_init(dcmg_sim_overrides* o);
DCMG_API dcmg_status dcmg_scenario_override(dcmg_scenario* scenario, const dcmg_sim_overrides* o);

/* trace_path and manifest_path may be NULL. A run that ends away from
   equilibrium returns DCMG_OK with summary->converged == 0. */
DCMG_API dcmg_status dcmg_simulate(const dcmg_model* model, const dcmg_scenario* scenario, const char* trace_path,
                                   const char* manifest_path, dcmg_run_summary* summary);

DCMG_API dcmg_status dcmg_solve_reference(const dcmg_model* model, char** report_json);
DCMG_API dcmg_status dcmg_audit_trace(const dcmg_model* model, const char* trace_path, char** report_json);
DCMG_API dcmg_status dcmg_compare(const char* trace_path, const char* reference_path, char** table);

#ifdef __cplusplus
}
#endif

#endif
