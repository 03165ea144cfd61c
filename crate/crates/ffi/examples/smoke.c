/* cc smoke.c -I../include -L../../../target/debug -lddam_ffi -o smoke */
#include <stdio.h>
#include "ddam.h"

int main(void) {
    DdamConfig *cfg = NULL;
    double rate = 0.0;
    if (ddam_config_new(&cfg) != DDAM_STATUS_OK) return 1;
    if (ddam_config_set_dimensions(cfg, 32, 2, 2, 3) != DDAM_STATUS_OK) {
        fprintf(stderr, "%s\n", ddam_last_error_message());
        return 1;
    }
    if (ddam_zf_rate(cfg, 1, 0, &rate) != DDAM_STATUS_OK) {
        fprintf(stderr, "%s\n", ddam_last_error_message());
        return 1;
    }
    printf("ddam %s: ZF rate %.3f bit/s/Hz\n", ddam_version(), rate);
    ddam_config_free(cfg);
    return 0;
}
