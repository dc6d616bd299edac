/* Compiled as C: the public header must stay valid C. */
#include <stdio.h>

#include "dipscan/dipscan.h"

int main(void) {
  const double c[4] = {2, 0, 0, 2};
  const double l[2] = {1, 0};
  const double d[2] = {1, 1};
  dipscan_metric* m = NULL;
  double gof = 0;
  if (dipscan_metric_create(c, 2, &m) != DIPSCAN_OK) return 1;
  if (dipscan_gof(m, l, 2, 1, d, &gof) != DIPSCAN_OK) return 1;
  dipscan_metric_free(m);
  if (gof < 0.4999999 || gof > 0.5000001) return 1;

  dipscan_config* cfg = NULL;
  if (dipscan_config_parse("experiment = eloreta\nsensors = 5\ninstances = 1\n", &cfg) != DIPSCAN_OK) return 1;
  dipscan_result* r = NULL;
  if (dipscan_run(cfg, NULL, &r) != DIPSCAN_OK) {
    fprintf(stderr, "%s\n", dipscan_last_error());
    return 1;
  }
  printf("%s\n", dipscan_result_summary(r));
  const int pass = dipscan_result_pass(r);
  dipscan_result_free(r);
  dipscan_config_free(cfg);
  return pass ? 0 : 1;
}
