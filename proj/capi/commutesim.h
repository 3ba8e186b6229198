/* C interface to the commutesim core.
 *
 * Conventions:
 *   - Functions return CS_OK (0) on success or an error code; the message for
 *     the calling thread's most recent failure is available via cs_last_error().
 *   - Objects are opaque handles released with their cs_*_free function.
 *   - Structured data crosses the boundary as JSON text; strings returned
 *     through char** are heap-allocated and must be released with
 *     cs_string_free().
 */
#ifndef COMMUTESIM_H
#define COMMUTESIM_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define CS_OK 0
#define CS_ERR_VALIDATION 1 /* bad input: parse/validation/range errors */
#define CS_ERR_RUNTIME 2    /* I/O, transport, or internal failures */

typedef struct cs_scenario cs_scenario;
typedef struct cs_runlog cs_runlog;
typedef struct cs_mock_server cs_mock_server;

const char* cs_version(void);
/* Message of the calling thread's most recent error ("" when none). */
const char* cs_last_error(void);
void cs_string_free(char* s);

/* ---- scenarios ---- */
int cs_scenario_load(const char* path, cs_scenario** out);
int cs_scenario_builtin(const char* name, cs_scenario** out);
int cs_scenario_from_json(const char* json_text, cs_scenario** out);
int cs_scenario_to_json(const cs_scenario* s, char** out_json);
/* Merge a partial scenario JSON document over s (RFC 7386 merge semantics). */
int cs_scenario_apply_overrides(const cs_scenario* s, const char* overrides_json,
                                cs_scenario** out);
/* JSON array of {field, message, fatal}; empty array = valid. */
int cs_scenario_validate(const cs_scenario* s, char** out_violations_json);
int cs_scenario_save(const cs_scenario* s, const char* path);
void cs_scenario_free(cs_scenario* s);
/* JSON array of builtin scenario names. */
int cs_builtin_names(char** out_json);

/* ---- runs ---- */
typedef void (*cs_day_callback)(const char* day_summary_json, void* user);
/* Runs the scenario's full horizon. When runlog_path is non-NULL the log is
 * streamed there incrementally (a crash leaves a loadable prefix). */
int cs_run(const cs_scenario* s, const char* runlog_path, cs_day_callback on_day, void* user,
           cs_runlog** out);

int cs_runlog_load(const char* path, cs_runlog** out);
int cs_runlog_save(const cs_runlog* log, const char* path);
/* {days, n_agents, case_kind, convergence:{verdict, day}, llm_totals:{...},
 *  final_flows, cassette:{path, digest}} */
int cs_runlog_summary(const cs_runlog* log, char** out_json);
void cs_runlog_free(cs_runlog* log);

/* ---- benchmarks and reports ---- */
/* Analytic benchmark for the scenario's case kind:
 * bottleneck: Vickrey window + equilibrium cost; route: Wardrop split (plus
 * the integer no-deviation splits for two-route instances). */
int cs_benchmark(const cs_scenario* s, char** out_json);
/* Writes days.csv, intervals.csv and gaps.csv under out_dir and returns a
 * summary (convergence verdict, final gaps). benchmark_json must come from
 * cs_benchmark for a scenario of the same case kind. */
int cs_report(const cs_runlog* log, const char* benchmark_json, const char* out_dir,
              int group_days, char** out_summary_json);
/* what: "days" | "agent_days" | "intervals". Returns JSON array of paths. */
int cs_export(const cs_runlog* log, const char* what, const char* out_dir, int group_days,
              char** out_files_json);

/* ---- scripted mock endpoint (tests, cassette recording) ---- */
/* rules_json: [{"contains": ["..."], "response": "...",
 *               "status_sequence": [429, 200]}, ...]; port 0 = any free port. */
int cs_mock_server_start(const char* rules_json, int port, cs_mock_server** out);
int cs_mock_server_port(const cs_mock_server* m);
int cs_mock_server_url(const cs_mock_server* m, char** out_url);
void cs_mock_server_stop(cs_mock_server* m);

#ifdef __cplusplus
}
#endif

#endif /* COMMUTESIM_H */
