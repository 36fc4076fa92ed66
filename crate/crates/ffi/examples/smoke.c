// Build: cargo build -p cbs-rv-ffi
//        cc -I crates/ffi/include crates/ffi/examples/smoke.c -L target/debug -lcbs_rv_ffi
#include <stdio.h>
#include "cbs_rv.h"

int main(void) {
  CbsSystem *sys = NULL;
  if (cbs_system_builtin("task", &sys) != CBS_STATUS_OK) {
    fprintf(stderr, "%s\n", cbs_last_error_message());
    return 1;
  }
  CbsRunOptions opts = cbs_run_options_default();
  opts.seed = 7;
  opts.steps = 20;
  char *report = NULL, *trace = NULL, *witness = NULL;
  if (cbs_run(sys, &opts, NULL, &report, &trace) != CBS_STATUS_OK ||
      cbs_witness(trace, sys, &witness) != CBS_STATUS_OK) {
    fprintf(stderr, "%s\n", cbs_last_error_message());
    cbs_system_free(sys);
    return 1;
  }
  printf("%s\n%s", report, witness);
  cbs_string_free(report);
  cbs_string_free(trace);
  cbs_string_free(witness);
  cbs_system_free(sys);
  return 0;
}
