#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "iolib.h"
#include "truth.h"

static int counter;

/** Compute the greatest common divisor of a and b. */
int gcd(int a, int b)
{
    TRUTH_ENTER(gcd);
    TRUTH(truth_int(TRUTH_IN, "a", a); truth_int(TRUTH_IN, "b", b));
    if (b == 0) {
        TRUTH(truth_int(TRUTH_OUT, "a", a); truth_int(TRUTH_OUT, "b", b);
              truth_int(TRUTH_OUT, "return", a));
        return a;
    }
    int r = gcd(b, a % b);
    TRUTH(truth_int(TRUTH_OUT, "a", a); truth_int(TRUTH_OUT, "b", b);
          truth_int(TRUTH_OUT, "return", r));
    return r;
}

/**
 * @brief Clamp v into the closed range [lo, hi]. Aborts when lo > hi.
 */
unsigned clamp_u(unsigned v, unsigned lo, unsigned hi)
{
    TRUTH_ENTER(clamp_u);
    TRUTH(truth_uint(TRUTH_IN, "v", v); truth_uint(TRUTH_IN, "lo", lo);
          truth_uint(TRUTH_IN, "hi", hi));
    if (lo > hi)
        abort();
    TRUTH(truth_uint(TRUTH_OUT, "v", v); truth_uint(TRUTH_OUT, "lo", lo);
          truth_uint(TRUTH_OUT, "hi", hi));
    if (v < lo) {
        TRUTH(truth_uint(TRUTH_OUT, "return", lo));
        return lo;
    }
    if (v > hi) {
        TRUTH(truth_uint(TRUTH_OUT, "return", hi));
        return hi;
    }
    TRUTH(truth_uint(TRUTH_OUT, "return", v));
    return v;
}

/** Multiply x by a scale factor. */
double scale(double x, double factor)
{
    TRUTH_ENTER(scale);
    TRUTH(truth_real(TRUTH_IN, "x", x); truth_real(TRUTH_IN, "factor", factor));
    double r = x * factor;
    TRUTH(truth_real(TRUTH_OUT, "x", x); truth_real(TRUTH_OUT, "factor", factor);
          truth_real(TRUTH_OUT, "return", r));
    return r;
}

/**
 * Count the occurrences of c in the NUL-terminated string s.
 * Returns -1 when s is NULL.
 */
int count_char(const char *s, char c)
{
    TRUTH_ENTER(count_char);
    TRUTH(truth_str(TRUTH_IN, "s", s); truth_char(TRUTH_IN, "c", c));
    if (!s) {
        TRUTH(truth_str(TRUTH_OUT, "s", s); truth_char(TRUTH_OUT, "c", c);
              truth_int(TRUTH_OUT, "return", -1));
        return -1;
    }
    int n = 0;
    for (const char *p = s; *p; p++)
        n += *p == c;
    TRUTH(truth_str(TRUTH_OUT, "s", s); truth_char(TRUTH_OUT, "c", c);
          truth_int(TRUTH_OUT, "return", n));
    return n;
}

#ifdef IOTRACE_ORACLE
static void truth_bprint(const char *fn, const char *ev, unsigned long seq, const struct BPrint *bp)
{
    truth_ptr(fn, ev, seq, "bp", bp);
    if (!bp)
        return;
    truth_str(fn, ev, seq, "bp->str", bp->str);
    truth_uint(fn, ev, seq, "bp->len", bp->len);
    truth_uint(fn, ev, seq, "bp->size", bp->size);
    truth_uint(fn, ev, seq, "bp->size_max", bp->size_max);
    truth_char(fn, ev, seq, "bp->reserved_internal_buffer[0]", bp->reserved_internal_buffer[0]);
}
#endif

/** Append a description of a channel layout to a bprint buffer. */
void bprint_channel_layout(struct BPrint *bp, int nb_channels, uint64_t channel_layout)
{
    TRUTH_ENTER(bprint_channel_layout);
    TRUTH(truth_bprint(TRUTH_IN, bp); truth_int(TRUTH_IN, "nb_channels", nb_channels);
          truth_uint(TRUTH_IN, "channel_layout", channel_layout));
    const char *name = NULL;
    char fallback[32];
    switch (channel_layout) {
    case 3:
        name = "stereo";
        break;
    case 4:
        name = "mono";
        break;
    default:
        snprintf(fallback, sizeof fallback, "%d channels", nb_channels);
        name = fallback;
    }
    size_t n = strlen(name);
    if (bp->len + n < bp->size) {
        memcpy(bp->str + bp->len, name, n + 1);
        bp->len += n;
    }
    TRUTH(truth_bprint(TRUTH_OUT, bp); truth_int(TRUTH_OUT, "nb_channels", nb_channels);
          truth_uint(TRUTH_OUT, "channel_layout", channel_layout));
}

/** Build a point from its two coordinates. */
struct Point make_point(int x, int y)
{
    TRUTH_ENTER(make_point);
    TRUTH(truth_int(TRUTH_IN, "x", x); truth_int(TRUTH_IN, "y", y));
    struct Point p = { x, y };
    TRUTH(truth_int(TRUTH_OUT, "x", x); truth_int(TRUTH_OUT, "y", y);
          truth_int(TRUTH_OUT, "return.x", p.x); truth_int(TRUTH_OUT, "return.y", p.y));
    return p;
}

/** Compute the area covered by a rectangle. */
long rect_area(const struct Rect *r)
{
    TRUTH_ENTER(rect_area);
    TRUTH(truth_ptr(TRUTH_IN, "r", r));
    long area = (long)r->extent.x * r->extent.y;
    TRUTH(truth_ptr(TRUTH_OUT, "r", r); truth_int(TRUTH_OUT, "return", area));
    return area;
}

/** Reset the internal call counter to zero. */
void reset_counter(void)
{
    TRUTH_ENTER(reset_counter);
    counter = 0;
}

#ifdef IOTRACE_ORACLE
static const char *kind_name(enum NumKind kind)
{
    switch (kind) {
    case NUM_INT:
        return "NUM_INT";
    case NUM_REAL:
        return "NUM_REAL";
    case NUM_BITS:
        return "NUM_BITS";
    }
    return "unknown";
}

static void truth_number(const char *fn, const char *ev, unsigned long seq, union Number n, enum NumKind kind)
{
    truth_int(fn, ev, seq, "n", n.i);
    truth_float(fn, ev, seq, "n.f", n.f);
    truth_uint(fn, ev, seq, "n.bits", n.bits);
    truth_text(fn, ev, seq, "kind", kind_name(kind));
}
#endif

double number_as_double(union Number n, enum NumKind kind)
{
    TRUTH_ENTER(number_as_double);
    TRUTH(truth_number(TRUTH_IN, n, kind));
    counter++;
    double r;
    switch (kind) {
    case NUM_INT:
        r = n.i;
        break;
    case NUM_REAL:
        r = n.f;
        break;
    default:
        r = n.bits;
    }
    TRUTH(truth_number(TRUTH_OUT, n, kind); truth_real(TRUTH_OUT, "return", r));
    return r;
}

int sum_first(const int vals[3])
{
    TRUTH_ENTER(sum_first);
    TRUTH(truth_ptr(TRUTH_IN, "vals", vals); truth_int(TRUTH_IN, "vals[0]", vals[0]));
    int r = vals[0] + vals[1] + vals[2];
    TRUTH(truth_ptr(TRUTH_OUT, "vals", vals); truth_int(TRUTH_OUT, "vals[0]", vals[0]);
          truth_int(TRUTH_OUT, "return", r));
    return r;
}

#ifdef IOTRACE_ORACLE
static void truth_list(const char *fn, const char *ev, unsigned long seq, const struct Node *head)
{
    truth_ptr(fn, ev, seq, "head", head);
    if (!head)
        return;
    truth_int(fn, ev, seq, "head->value", head->value);
    truth_ptr(fn, ev, seq, "head->next", head->next);
    if (head->next)
        truth_int(fn, ev, seq, "head->next->value", head->next->value);
}
#endif

int list_length(const struct Node *head)
{
    TRUTH_ENTER(list_length);
    TRUTH(truth_list(TRUTH_IN, head));
    int n = 0;
    for (const struct Node *p = head; p && n < 1000; p = p->next)
        n++;
    TRUTH(truth_list(TRUTH_OUT, head); truth_int(TRUTH_OUT, "return", n));
    return n;
}

int overwrite_param(int x)
{
    TRUTH_ENTER(overwrite_param);
    TRUTH(int x_in = x; truth_int(TRUTH_IN, "x", x));
    x = 100;
    TRUTH(truth_int(TRUTH_OUT, "x", x_in); truth_int(TRUTH_OUT, "return", x + 1));
    return x + 1;
}
