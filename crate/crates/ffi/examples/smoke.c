#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "saf.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        saf_status st_ = (call);                                           \
        if (st_ != SAF_STATUS_OK) {                                        \
            fprintf(stderr, "%s failed (%d): %s\n", #call, st_, saf_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    enum { D = 2, ROWS = 30 };
    double x[ROWS * D], y[ROWS], pred[ROWS];
    for (int i = 0; i < ROWS; i++) {
        x[i * D] = -1.0 + 2.0 * i / (ROWS - 1);
        x[i * D + 1] = 0.5 * x[i * D];
        y[i] = 0.4 * sin(2.0 * x[i * D]);
    }

    SafNet *net = NULL;
    SafObjective *obj = NULL;
    CHECK(saf_network_new(D, 4, 1, 0.2, 21, 7, &net));
    CHECK(saf_objective_new(net, 1, x, y, ROWS, 1e-4, 1e-4, &obj));

    size_t len = 0;
    CHECK(saf_objective_param_count(obj, &len));
    double *theta = malloc(len * sizeof *theta);
    CHECK(saf_objective_initial_params(obj, theta, len));
    double value = 0.0;
    size_t iters = 0;
    CHECK(saf_objective_train_ncg(obj, theta, len, 300, &value, &iters));

    SafNet *trained = NULL;
    CHECK(saf_objective_network(obj, theta, len, &trained));
    CHECK(saf_network_forward(trained, x, ROWS, pred));
    double err = 0.0;
    CHECK(saf_nrmse(pred, y, ROWS, 1, &err));
    printf("J = %.6g after %zu iterations, NRMSE = %.4f\n", value, iters, err);

    SafNet *bad = NULL;
    if (saf_network_new(0, 1, 1, 0.2, 21, 0, &bad) != SAF_STATUS_INVALID_ARGUMENT || bad != NULL) {
        return 1;
    }

    free(theta);
    saf_network_free(trained);
    saf_objective_free(obj);
    saf_network_free(net);
    return err < 0.5 ? 0 : 1;
}
