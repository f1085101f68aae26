#include <stdio.h>
#include <string.h>
#include <unistd.h>

#include "iolib.h"

static void run_suite(void)
{
    printf("gcd(12, 8) = %d\n", gcd(12, 8));
    printf("gcd(0, 0) = %d\n", gcd(0, 0));
    printf("gcd(0, 5) = %d\n", gcd(0, 5));
    printf("gcd(1, 3) = %d\n", gcd(1, 3));

    printf("clamp_u(5, 1, 9) = %u\n", clamp_u(5, 1, 9));
    printf("clamp_u(0, 2, 9) = %u\n", clamp_u(0, 2, 9));
    printf("clamp_u(50, 1, 9) = %u\n", clamp_u(50, 1, 9));

    printf("scale(2.5, 4) = %g\n", scale(2.5, 4.0));
    printf("scale(-1.25, 0.1) = %g\n", scale(-1.25, 0.1));

    printf("count_char(\"hello world\", 'o') = %d\n", count_char("hello world", 'o'));
    printf("count_char(NULL, 'x') = %d\n", count_char(NULL, 'x'));

    char buf[64] = "";
    struct BPrint bp = { buf, 0, sizeof buf, sizeof buf, { 0 } };
    bprint_channel_layout(&bp, -1, 3);
    printf("bprint_channel_layout -> \"%s\" (len %u)\n", bp.str, bp.len);

    struct Point p = make_point(3, -4);
    printf("make_point(3, -4) = {%d, %d}\n", p.x, p.y);

    union Number n;
    n.f = 1.5f;
    printf("number_as_double(1.5f, NUM_REAL) = %g\n", number_as_double(n, NUM_REAL));
    n.i = 42;
    printf("number_as_double(42, NUM_INT) = %g\n", number_as_double(n, NUM_INT));

    int vals[3] = { 7, 8, 9 };
    printf("sum_first({7, 8, 9}) = %d\n", sum_first(vals));

    struct Node c = { 30, NULL };
    struct Node b = { 20, &c };
    struct Node a = { 10, &b };
    printf("list_length(10 -> 20 -> 30) = %d\n", list_length(&a));

    printf("overwrite_param(41) = %d\n", overwrite_param(41));
}

int main(int argc, char **argv)
{
    const char *mode = argc > 1 ? argv[1] : "suite";

    if (strcmp(mode, "suite") == 0) {
        run_suite();
        return 0;
    }
    if (strcmp(mode, "fail") == 0) {
        run_suite();
        printf("suite failed\n");
        return 1;
    }
    if (strcmp(mode, "gcd-once") == 0) {
        printf("%d\n", gcd(12, 8));
        return 0;
    }
    if (strcmp(mode, "gcd-thrice") == 0) {
        for (int i = 0; i < 3; i++)
            printf("%d\n", gcd(5, 0));
        return 0;
    }
    if (strcmp(mode, "crash") == 0) {
        printf("%d\n", gcd(9, 6));
        fflush(stdout);
        printf("%u\n", clamp_u(5, 9, 1));
        return 0;
    }
    if (strcmp(mode, "hang") == 0) {
        printf("%d\n", gcd(4, 2));
        fflush(stdout);
        for (;;)
            sleep(1);
    }
    if (strcmp(mode, "layout") == 0) {
        char buf[8] = "";
        struct BPrint bp = { buf, 0, sizeof buf, sizeof buf, { 0 } };
        printf("base=%p third=%p\n", (void *)&bp, (void *)&bp.size);
        return 0;
    }
    if (strcmp(mode, "cycle") == 0) {
        struct Node a = { 1, NULL };
        struct Node b = { 2, &a };
        a.next = &b;
        printf("%d\n", list_length(&a));
        return 0;
    }
    fprintf(stderr, "unknown mode %s\n", mode);
    return 2;
}
