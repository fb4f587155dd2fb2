#include <math.h>
#include <stdio.h>
#include "tgeom.h"

int main(void) {
    TgWorld *w = NULL;
    const char *spec = "{\"kind\":\"case1\",\"dim\":4,\"metric\":[1,-1,-1,-1],\"b\":[1,0,0,0],\"alpha\":0.1}";
    if (tg_world_from_json(spec, &w) != TG_STATUS_OK) return 1;
    double y[4] = {1, 0, 0, 0}, r[2];
    size_t n = 0;
    if (tg_tube_radii(w, TG_KIND_NEUTRAL, y, 4, 0.5, r, 2, &n) != TG_STATUS_OK || n != 2) return 2;
    printf("%.7f %.7f\n", r[0], r[1]);
    TgWorld *bad = NULL;
    if (tg_world_from_json("{", &bad) != TG_STATUS_INVALID_INPUT || bad != NULL) return 3;
    char msg[128];
    if (tg_last_error_message(msg, sizeof msg) == 0) return 4;
    tg_world_free(w);
    return fabs(r[0] - 0.0755712) < 1.5e-7 ? 0 : 5;
}
