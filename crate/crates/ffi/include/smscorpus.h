#ifndef SMSCORPUS_H
#define SMSCORPUS_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SmsStatus {
  SMS_STATUS_OK = 0,
  SMS_STATUS_INVALID_ARGUMENT = 1,
  SMS_STATUS_NOT_UTF8 = 2,
  SMS_STATUS_PARSE = 3,
  SMS_STATUS_NOT_FOUND = 4,
  SMS_STATUS_CONFLICT = 5,
  SMS_STATUS_IO = 6,
  SMS_STATUS_PANIC = 7,
} SmsStatus;

typedef enum SmsLanguage {
  SMS_LANGUAGE_ENGLISH = 0,
  SMS_LANGUAGE_CHINESE = 1,
  SMS_LANGUAGE_MIXED = 2,
  SMS_LANGUAGE_UNKNOWN = 3,
} SmsLanguage;

typedef enum SmsCurrency {
  SMS_CURRENCY_USD = 0,
  SMS_CURRENCY_CNY = 1,
  SMS_CURRENCY_SGD = 2,
} SmsCurrency;

// Phone-number pseudonymizer bound to one key.
typedef struct SmsPseudonymizer SmsPseudonymizer;

// Parsed reward scheme.
typedef struct SmsScheme SmsScheme;

// Open corpus store.
typedef struct SmsStore SmsStore;

// Reward for one batch size. `bracket` is -1 below the scheme minimum.
typedef struct SmsReward {
  int64_t cents;
  enum SmsCurrency currency;
  bool below_minimum;
  int32_t bracket;
} SmsReward;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, static storage.
const char *sms_version(void);

// Message for the last failed call on this thread, or NULL. Valid until
// the next failing call on the same thread.
const char *sms_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void sms_string_free(char *s);

// Replaces sensitive spans (URLs, emails, numbers, times, ...) by
// placeholder codes.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum SmsStatus sms_scrub(const char *text, char **out);

// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum SmsStatus sms_normalize_emoticons(const char *text, char **out);

// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum SmsStatus sms_detect_language(const char *text, enum SmsLanguage *out);

// Creates a pseudonymizer from a 64-digit hex key.
//
// # Safety
// `key_hex` must be a NUL-terminated string; `out` must be writable.
enum SmsStatus sms_pseudonymizer_new(const char *key_hex, struct SmsPseudonymizer **out);

// # Safety
// `p` must come from [`sms_pseudonymizer_new`] or be NULL.
void sms_pseudonymizer_free(struct SmsPseudonymizer *p);

// Stable token for a phone number.
//
// # Safety
// `p` must be a live handle; `phone` NUL-terminated; `out` writable.
enum SmsStatus sms_pseudonymize(const struct SmsPseudonymizer *p, const char *phone, char **out);

// Built-in scheme by name: `mturk`, `zhubajie1`, `zhubajie2`, `local`,
// `shorttask`.
//
// # Safety
// `name` must be NUL-terminated; `out` writable.
enum SmsStatus sms_scheme_builtin(const char *name, struct SmsScheme **out);

// Parses a scheme from its text form.
//
// # Safety
// `name` and `text` must be NUL-terminated; `out` writable.
enum SmsStatus sms_scheme_parse(const char *name, const char *text, struct SmsScheme **out);

// # Safety
// `s` must come from a scheme constructor or be NULL.
void sms_scheme_free(struct SmsScheme *s);

// Reward for a batch of `n` messages.
//
// # Safety
// `s` must be a live handle; `out` writable.
enum SmsStatus sms_scheme_reward(const struct SmsScheme *s, uint64_t n, struct SmsReward *out);

// Checks an upload draft's verification code against `secret`. A draft
// that does not parse yields `SMS_STATUS_PARSE`.
//
// # Safety
// `draft` and `secret` must point to `draft_len` and `secret_len`
// readable bytes; `out` writable.
enum SmsStatus sms_verify_upload(const uint8_t *draft,
                                 size_t draft_len,
                                 const uint8_t *secret,
                                 size_t secret_len,
                                 bool *out);

// Opens (creating if needed) a store directory.
//
// # Safety
// `path` must be NUL-terminated; `out` writable.
enum SmsStatus sms_store_open(const char *path, struct SmsStore **out);

// # Safety
// `s` must come from [`sms_store_open`] or be NULL.
void sms_store_free(struct SmsStore *s);

// Page of approved messages as JSON. `filter_json` is NULL or an object
// with optional `language`, `source`, `method` and `profile_id`.
//
// # Safety
// `s` must be a live handle; `filter_json` NULL or NUL-terminated; `out`
// writable.
enum SmsStatus sms_store_query_json(const struct SmsStore *s,
                                    const char *filter_json,
                                    size_t offset,
                                    size_t limit,
                                    char **out);

// Statistics document for the approved corpus, as JSON.
//
// # Safety
// `s` must be a live handle; `out` writable.
enum SmsStatus sms_store_stats_json(const struct SmsStore *s, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMSCORPUS_H */
