/* Estimate the excess-mass curve of a simulated sample through the C API. */
#include <stdio.h>
#include "excess_mass.h"

int main(void) {
    EmDensity *density = NULL;
    EmSample *sample = NULL;
    EmCurve *curve = NULL;
    double levels[5] = {0.0, 0.05, 0.1, 0.2, 0.3};

    if (em_density_builtin("a", &density) != EM_STATUS_OK ||
        em_density_sample(density, 1000, 42, &sample) != EM_STATUS_OK ||
        em_estimate_curve(sample, NULL, levels, 5, EM_METHOD_FUNCTIONAL_MEAN, 0, 100, 42, &curve) !=
            EM_STATUS_OK) {
        fprintf(stderr, "error: %s\n", em_last_error_message());
        return 1;
    }
    double values[5];
    em_curve_values(curve, values, 5);
    for (int i = 0; i < 5; i++) {
        printf("%g,%g\n", levels[i], values[i]);
    }
    em_curve_free(curve);
    em_sample_free(sample);
    em_density_free(density);
    return 0;
}
