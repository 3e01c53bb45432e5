#include <stdio.h>
#include <string.h>
#include "henon_brody.h"

int main(void) {
    HbMap *map = NULL;
    if (hb_map_parse("p=z^2-6; a=0.5", &map) != HB_STATUS_OK) return 10;

    HbPoint x = {{0.5, -0.25}, {1.0, 2.0}}, y, back;
    if (hb_map_forward(map, &x, &y) != HB_STATUS_OK) return 11;
    if (hb_map_inverse(map, &y, &back) != HB_STATUS_OK) return 12;
    if (back.z.re != x.z.re || back.w.im != x.w.im) return 13;

    HbOrbits *orbits = NULL;
    size_t count = 0;
    if (hb_periodic_find(map, 1, &orbits) != HB_STATUS_OK) return 14;
    if (hb_orbits_count(orbits, &count) != HB_STATUS_OK || count != 2) return 15;

    HbMap *bad = NULL;
    if (hb_map_parse("p=z^2; a=0", &bad) != HB_STATUS_INVALID_MAP || bad != NULL) return 16;
    if (strlen(hb_last_error_message()) == 0) return 17;

    printf("henon-brody %s: %zu fixed points\n", hb_version(), count);
    hb_orbits_free(orbits);
    hb_map_free(map);
    return 0;
}
