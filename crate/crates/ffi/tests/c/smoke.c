#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "riskmine.h"

static char *slurp(const char *path) {
    FILE *f = fopen(path, "rb");
    if (!f) {
        perror(path);
        exit(2);
    }
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    fseek(f, 0, SEEK_SET);
    char *buf = malloc((size_t)n + 1);
    if (fread(buf, 1, (size_t)n, f) != (size_t)n) {
        exit(2);
    }
    buf[n] = '\0';
    fclose(f);
    return buf;
}

#define CHECK(call)                                                          \
    do {                                                                     \
        RmStatus s_ = (call);                                                \
        if (s_ != RM_STATUS_OK) {                                            \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, rm_last_error());  \
            return 1;                                                        \
        }                                                                    \
    } while (0)

/* argv: fixtures directory */
int main(int argc, char **argv) {
    if (argc != 2) {
        return 2;
    }
    char path[4096];
#define FIXTURE(name) (snprintf(path, sizeof path, "%s/%s", argv[1], name), slurp(path))
    char *tax_tsv = FIXTURE("acme/taxonomy.tsv");
    char *entities = FIXTURE("acme/entities.tsv");
    char *news = FIXTURE("acme/news.jsonl");
    char *labeled = FIXTURE("labeled.jsonl");

    RmTaxonomy *tax = NULL;
    RmGazetteer *gaz = NULL;
    RmModel *model = NULL;
    char *cands = NULL, *mentions = NULL, *regs = NULL;
    CHECK(rm_taxonomy_from_tsv(tax_tsv, &tax));
    CHECK(rm_gazetteer_new(entities, tax, &gaz));
    CHECK(rm_tag(gaz, news, &cands));
    CHECK(rm_model_train(labeled, NULL, &model));
    CHECK(rm_classify(model, cands, &mentions));
    CHECK(rm_aggregate(mentions, "ACME", &regs));
    if (!strstr(regs, "\"risk_type\":\"demand risk\"") || !strstr(regs, "\"mention_count\":14")) {
        fprintf(stderr, "unexpected register:\n%s\n", regs);
        return 1;
    }

    RmTaxonomy *none = NULL;
    if (rm_taxonomy_from_tsv(NULL, &none) != RM_STATUS_NULL_ARGUMENT || rm_last_error() == NULL) {
        return 1;
    }

    RmUniverse *u = NULL;
    bool defined = true;
    double p = 0;
    CHECK(rm_universe_new(1.0, &u));
    CHECK(rm_universe_observe(u, 1, "Tail"));
    CHECK(rm_universe_estimate(u, 1, "Head", &defined, &p));
    if (defined || !isnan(p)) {
        return 1;
    }
    CHECK(rm_universe_estimate(u, 1, "Tail", &defined, &p));
    if (!defined || fabs(p - 2.0 / 3.0) > 1e-12) {
        return 1;
    }

    printf("ok %s\n", rm_version());
    rm_universe_free(u);
    rm_string_free(regs);
    rm_string_free(mentions);
    rm_string_free(cands);
    rm_model_free(model);
    rm_gazetteer_free(gaz);
    rm_taxonomy_free(tax);
    free(tax_tsv);
    free(entities);
    free(news);
    free(labeled);
    return 0;
}
