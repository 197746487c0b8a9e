#include <math.h>
#include <stdio.h>
#include <string.h>

#include "ou_lab.h"

#define CHECK(cond)                                                \
  do {                                                             \
    if (!(cond)) {                                                 \
      const char *e = ou_last_error();                             \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond, \
              e ? e : "no error");                                 \
      return 1;                                                    \
    }                                                              \
  } while (0)

int main(void) {
  const double q[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const double a[9] = {0, 1, 0, 0, 0, 1, 0, 0, 0};
  OuOperator *op = NULL;
  CHECK(ou_operator_new(3, q, a, &op) == OU_STATUS_OK);
  CHECK(ou_operator_dim(op) == 3);

  double bound = 1;
  OuStability cls;
  CHECK(ou_spectral_bound(op, &bound, &cls) == OU_STATUS_OK);
  CHECK(bound == 0 && cls == OU_STABILITY_CRITICAL);

  size_t rank = 0;
  bool hyp = false;
  CHECK(ou_kalman_rank(op, &rank, &hyp) == OU_STATUS_OK);
  CHECK(rank == 3 && hyp);

  double g[9];
  CHECK(ou_gramian(op, 1.0, OU_GRAMIAN_METHOD_BLOCK_EXP, g, 9) == OU_STATUS_OK);
  CHECK(fabs(g[8] - 1.0) < 1e-14);
  CHECK(ou_gramian(op, 1.0, OU_GRAMIAN_METHOD_BLOCK_EXP, g, 4) == OU_STATUS_BUFFER_TOO_SMALL);
  CHECK(ou_last_error() != NULL);

  double d = 0;
  CHECK(ou_decay_norm(op, 1.0, &d) == OU_STATUS_OK && d > 0);

  char buf[64];
  size_t needed = 0;
  CHECK(ou_jordan_summary(op, buf, sizeof buf, &needed) == OU_STATUS_OK);
  CHECK(strcmp(buf, "J(0,3)@offset 0") == 0 && needed == strlen(buf) + 1);
  ou_operator_free(op);

  OuOperator *bad = NULL;
  CHECK(ou_operator_from_toml("dim = 2\nQ = [[1, 0], [0]]\nA = [[0, 0], [0, 0]]\n", &bad) ==
        OU_STATUS_INVALID_INPUT);
  CHECK(bad == NULL);
  printf("ok %s\n", ou_version());
  return 0;
}
