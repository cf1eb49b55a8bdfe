#include <math.h>
#include <stdio.h>
#include <string.h>

#include "dpconv.h"

#define CHECK(cond)                                                  \
    do {                                                             \
        if (!(cond)) {                                               \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, \
                    #cond, dpconv_last_error());                     \
            return 1;                                                \
        }                                                            \
    } while (0)

int main(void) {
    uint8_t bits[81];
    memset(bits, 0, sizeof bits);
    /* 2x2 valid block: dilation 2 reaches both pixel parities */
    bits[40] = bits[41] = bits[49] = bits[50] = 1;
    DpMask *mask = NULL;
    CHECK(dpconv_mask_new(9, 9, bits, &mask) == DP_STATUS_OK);

    DpStack *stack = NULL;
    CHECK(dpconv_stack_parse("d2", "3d2", 20, &stack) == DP_STATUS_OK);
    int64_t layers = 0;
    CHECK(dpconv_propagate(stack, mask, 20, &layers, NULL, 0, NULL) == DP_STATUS_OK);
    CHECK(layers == 2);

    CHECK(dpconv_stack_parse("bad", "2", 20, &stack) == DP_STATUS_INVALID_ARGUMENT);
    CHECK(strlen(dpconv_last_error()) > 0);

    double a[48], b[48];
    for (int i = 0; i < 48; i++) {
        a[i] = 0.5;
        b[i] = 0.6;
    }
    DpMetrics m;
    CHECK(dpconv_metrics(1, 3, 4, 4, a, b, &m) == DP_STATUS_OK);
    CHECK(fabs(m.l1_percent - 10.0) < 1e-9);

    dpconv_stack_free(stack);
    dpconv_mask_free(mask);
    printf("ok\n");
    return 0;
}
