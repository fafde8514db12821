#include "gleason_engine.h"
#include <stdio.h>
#include <string.h>

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "failed: %s (line %d)\n", #cond, __LINE__); return 1; } } while (0)

int main(void) {
    /* 4x3 mask: background column, then G3 and G4 glands in benign epithelium */
    const uint8_t codes[12] = {
        0, 2, 3, 3,
        0, 2, 3, 4,
        0, 2, 2, 4,
    };
    GeMask *mask = NULL;
    CHECK(ge_mask_from_raw(codes, 4, 3, 0.5, &mask) == GE_STATUS_OK);

    uint32_t w = 0, h = 0;
    CHECK(ge_mask_dims(mask, &w, &h) == GE_STATUS_OK && w == 4 && h == 3);

    uint64_t areas[GE_CLASS_COUNT];
    CHECK(ge_mask_class_areas(mask, areas, GE_CLASS_COUNT) == GE_STATUS_OK);
    CHECK(areas[0] == 3 && areas[2] == 4 && areas[3] == 3 && areas[4] == 2);

    uint64_t comps = 0;
    CHECK(ge_mask_component_count(mask, 4, &comps) == GE_STATUS_OK && comps == 3);
    CHECK(ge_mask_component_count(mask, 5, &comps) == GE_STATUS_INVALID_ARGUMENT);
    CHECK(ge_last_error_message() != NULL);

    GeDiagnosis d;
    CHECK(ge_grade_mask(mask, GE_PROFILE_BIOPSY, &d) == GE_STATUS_OK);
    CHECK(d.malignant == 1 && d.primary == 3 && d.secondary == 4 && d.grade_group == 2);
    CHECK(ge_last_error_message() == NULL);
    ge_mask_free(mask);

    CHECK(ge_diagnose(0.95, 0.05, 0.0, 0.0, GE_PROFILE_BIOPSY, &d) == GE_STATUS_OK && d.malignant == 0);

    const uint8_t a[6] = {0, 1, 2, 3, 4, 5};
    double kappa = 0.0;
    CHECK(ge_quadratic_kappa(a, a, 6, 6, &kappa) == GE_STATUS_OK && kappa == 1.0);

    const double scores[4] = {0.1, 0.4, 0.35, 0.8};
    const uint8_t truth[4] = {0, 0, 1, 1};
    double auc = 0.0;
    CHECK(ge_roc_auc(scores, truth, 4, &auc) == GE_STATUS_OK && auc == 0.75);

    CHECK(ge_mask_read_pgm("/nonexistent/x.pgm", &mask) == GE_STATUS_IO);
    CHECK(strlen(ge_version()) > 0);
    printf("ok %s\n", ge_version());
    return 0;
}
