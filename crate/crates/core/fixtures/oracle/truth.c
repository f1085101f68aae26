#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "truth.h"

#define MAX_FUNCS 64

static FILE *truth_out;
static const char *seq_names[MAX_FUNCS];
static unsigned long seq_counts[MAX_FUNCS];

static FILE *out(void)
{
    if (!truth_out) {
        const char *path = getenv("IOTRACE_TRUTH_LOG");
        truth_out = path ? fopen(path, "w") : NULL;
        if (!truth_out)
            truth_out = stderr;
    }
    return truth_out;
}

unsigned long truth_enter(const char *fn)
{
    int i;
    for (i = 0; i < MAX_FUNCS && seq_names[i]; i++) {
        if (strcmp(seq_names[i], fn) == 0)
            return ++seq_counts[i];
    }
    if (i == MAX_FUNCS)
        abort();
    seq_names[i] = fn;
    seq_counts[i] = 1;
    return 1;
}

/* Value field is always CSV-quoted. */
static void emit(const char *fn, const char *ev, unsigned long seq, const char *path, const char *value)
{
    FILE *f = out();
    fprintf(f, "%s,%s,%lu,%s,\"", fn, ev, seq, path);
    for (const char *c = value; *c; c++) {
        if (*c == '"')
            fputc('"', f);
        fputc(*c, f);
    }
    fputs("\"\n", f);
    fflush(f);
}

static void escape_char(char *dst, unsigned char c)
{
    if (c == '"' || c == '\\')
        sprintf(dst, "\\%c", c);
    else if (c == '\n')
        strcpy(dst, "\\n");
    else if (c == '\t')
        strcpy(dst, "\\t");
    else if (c == '\r')
        strcpy(dst, "\\r");
    else if (c >= 0x20 && c < 0x7f)
        sprintf(dst, "%c", c);
    else
        sprintf(dst, "\\x%02x", c);
}

void truth_int(const char *fn, const char *ev, unsigned long seq, const char *path, long long v)
{
    char buf[32];
    snprintf(buf, sizeof buf, "%lld", v);
    emit(fn, ev, seq, path, buf);
}

void truth_uint(const char *fn, const char *ev, unsigned long seq, const char *path, unsigned long long v)
{
    char buf[32];
    snprintf(buf, sizeof buf, "%llu", v);
    emit(fn, ev, seq, path, buf);
}

void truth_real(const char *fn, const char *ev, unsigned long seq, const char *path, double v)
{
    char buf[64];
    snprintf(buf, sizeof buf, "%.17g", v);
    emit(fn, ev, seq, path, buf);
}

void truth_float(const char *fn, const char *ev, unsigned long seq, const char *path, float v)
{
    char buf[64];
    snprintf(buf, sizeof buf, "%.9g", (double)v);
    emit(fn, ev, seq, path, buf);
}

void truth_char(const char *fn, const char *ev, unsigned long seq, const char *path, char c)
{
    char buf[16];
    unsigned char u = (unsigned char)c;
    if (u == '\'' || u == '\\')
        snprintf(buf, sizeof buf, "'\\%c'", u);
    else if (u >= 0x20 && u < 0x7f)
        snprintf(buf, sizeof buf, "'%c'", u);
    else
        snprintf(buf, sizeof buf, "'\\x%02x'", u);
    emit(fn, ev, seq, path, buf);
}

void truth_str(const char *fn, const char *ev, unsigned long seq, const char *path, const char *s)
{
    if (!s) {
        emit(fn, ev, seq, path, "NULL");
        return;
    }
    size_t cap = strlen(s) * 4 + 3;
    char *buf = malloc(cap);
    char *w = buf;
    *w++ = '"';
    for (const char *c = s; *c; c++) {
        escape_char(w, (unsigned char)*c);
        w += strlen(w);
    }
    *w++ = '"';
    *w = '\0';
    emit(fn, ev, seq, path, buf);
    free(buf);
}

void truth_ptr(const char *fn, const char *ev, unsigned long seq, const char *path, const void *p)
{
    emit(fn, ev, seq, path, p ? "[memory addr.]" : "NULL");
}

void truth_text(const char *fn, const char *ev, unsigned long seq, const char *path, const char *text)
{
    emit(fn, ev, seq, path, text);
}
