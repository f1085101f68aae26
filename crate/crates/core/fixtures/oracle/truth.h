#ifndef TRUTH_H
#define TRUTH_H

/* Value-printing hooks compiled in only for the oracle build. Each line of
 * the truth log is CSV: function,event,call_seq,param,value */
#ifdef IOTRACE_ORACLE

unsigned long truth_enter(const char *fn);
void truth_int(const char *fn, const char *ev, unsigned long seq, const char *path, long long v);
void truth_uint(const char *fn, const char *ev, unsigned long seq, const char *path, unsigned long long v);
void truth_real(const char *fn, const char *ev, unsigned long seq, const char *path, double v);
void truth_float(const char *fn, const char *ev, unsigned long seq, const char *path, float v);
void truth_char(const char *fn, const char *ev, unsigned long seq, const char *path, char c);
void truth_str(const char *fn, const char *ev, unsigned long seq, const char *path, const char *s);
void truth_ptr(const char *fn, const char *ev, unsigned long seq, const char *path, const void *p);
void truth_text(const char *fn, const char *ev, unsigned long seq, const char *path, const char *text);

#define TRUTH(...) __VA_ARGS__
#define TRUTH_ENTER(name) \
    unsigned long truth_seq_ = truth_enter(#name); \
    const char *truth_fn_ = #name
#define TRUTH_IN truth_fn_, "entry", truth_seq_
#define TRUTH_OUT truth_fn_, "exit", truth_seq_

#else

#define TRUTH(...)
#define TRUTH_ENTER(name)

#endif

#endif
