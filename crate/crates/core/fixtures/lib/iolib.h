#ifndef IOLIB_H
#define IOLIB_H

#include <stdint.h>

struct BPrint {
    char *str;
    unsigned len;
    unsigned size;
    unsigned size_max;
    char reserved_internal_buffer[1];
};

struct Point {
    int x;
    int y;
};

struct Rect {
    struct Point origin;
    struct Point extent;
};

enum NumKind {
    NUM_INT = 0,
    NUM_REAL = 1,
    NUM_BITS = 7
};

union Number {
    int i;
    float f;
    uint32_t bits;
};

struct Node {
    int value;
    struct Node *next;
};

int gcd(int a, int b);
unsigned clamp_u(unsigned v, unsigned lo, unsigned hi);
double scale(double x, double factor);
int count_char(const char *s, char c);
void bprint_channel_layout(struct BPrint *bp, int nb_channels, uint64_t channel_layout);
struct Point make_point(int x, int y);
long rect_area(const struct Rect *r);
void reset_counter(void);
double number_as_double(union Number n, enum NumKind kind);
int sum_first(const int vals[3]);
int list_length(const struct Node *head);
int overwrite_param(int x);

#endif
