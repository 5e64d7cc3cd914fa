#ifndef JOPEQ_H
#define JOPEQ_H

#include <stddef.h>
#include <stdint.h>

// How an imperfect noise design is treated.
typedef enum JopeqAdmission {
  JOPEQ_ADMISSION_STRICT = 0,
  JOPEQ_ADMISSION_ALLOW_DEGENERATE = 1,
  JOPEQ_ADMISSION_BEST_EFFORT = 2,
} JopeqAdmission;

// Lattice families.
typedef enum JopeqFamily {
  JOPEQ_FAMILY_SCALAR = 0,
  JOPEQ_FAMILY_SQUARE = 1,
  JOPEQ_FAMILY_HEXAGONAL = 2,
} JopeqFamily;

// Privacy noise added before quantization.
typedef enum JopeqMechanism {
  // Quantization only.
  JOPEQ_MECHANISM_NONE = 0,
  JOPEQ_MECHANISM_LAPLACE = 1,
  JOPEQ_MECHANISM_MULTIVARIATE_T = 2,
} JopeqMechanism;

// Result codes.
typedef enum JopeqStatus {
  JOPEQ_STATUS_OK = 0,
  JOPEQ_STATUS_NULL_POINTER = 1,
  JOPEQ_STATUS_INVALID_ARGUMENT = 2,
  JOPEQ_STATUS_INFEASIBLE = 3,
  JOPEQ_STATUS_CORRUPT_PAYLOAD = 4,
  JOPEQ_STATUS_BUFFER_TOO_SMALL = 5,
  JOPEQ_STATUS_NUMERIC = 6,
  JOPEQ_STATUS_INTERNAL = 7,
} JopeqStatus;

// Opaque encoder/decoder bound to one lattice and mechanism.
typedef struct JopeqCodec JopeqCodec;

// Opaque lattice quantizer.
typedef struct JopeqLattice JopeqLattice;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread (empty after success).
// The pointer stays valid until the next call on the same thread.
const char *jopeq_last_error(void);

// Library version as a static NUL-terminated string.
const char *jopeq_version(void);

// Builds a lattice with support radius `gamma` and `rate` bits per
// coordinate.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum JopeqStatus jopeq_lattice_new(enum JopeqFamily family,
                                   double gamma,
                                   uint32_t rate,
                                   struct JopeqLattice **out);

// # Safety
// `lat` must be null or a handle from [`jopeq_lattice_new`] not yet freed.
void jopeq_lattice_free(struct JopeqLattice *lat);

// Sub-vector dimension `L` (0 for a null handle).
//
// # Safety
// `lat` must be null or a live handle.
size_t jopeq_lattice_dimension(const struct JopeqLattice *lat);

// Number of codewords (0 for a null handle).
//
// # Safety
// `lat` must be null or a live handle.
size_t jopeq_lattice_codebook_size(const struct JopeqLattice *lat);

// Quantizes one `L`-vector to the codebook.
//
// # Safety
// `x` and `point` must reference `L` doubles; `index` and `overloaded` must
// be writable.
enum JopeqStatus jopeq_lattice_quantize(const struct JopeqLattice *lat,
                                        const double *x,
                                        double *point,
                                        uint32_t *index,
                                        uint8_t *overloaded);

// Builds a codec over a copy of `lat`. With a mechanism other than `None`
// the privacy noise is designed for the target `epsilon` (and `nu` for t).
//
// # Safety
// `lat` must be a live handle and `out` writable.
enum JopeqStatus jopeq_codec_new(const struct JopeqLattice *lat,
                                 enum JopeqMechanism mechanism,
                                 double epsilon,
                                 double nu,
                                 enum JopeqAdmission admission,
                                 struct JopeqCodec **out);

// # Safety
// `codec` must be null or a handle from [`jopeq_codec_new`] not yet freed.
void jopeq_codec_free(struct JopeqCodec *codec);

// Exact payload size in bytes for a model of `dim` entries.
//
// # Safety
// `codec` must be a live handle and `size` writable.
enum JopeqStatus jopeq_codec_payload_size(const struct JopeqCodec *codec, size_t dim, size_t *size);

// Encodes `h[0..dim]`. The dither is keyed by `(shared_seed, user, round)`
// and must be reproduced by the decoder; `private_seed` keys the encoder's
// own noise. When `capacity` is too small nothing is written, `written`
// receives the required size and `BufferTooSmall` is returned.
//
// # Safety
// `h` must reference `dim` doubles, `buf` `capacity` bytes, `written` one
// `usize`.
enum JopeqStatus jopeq_codec_encode(const struct JopeqCodec *codec,
                                    const double *h,
                                    size_t dim,
                                    uint64_t shared_seed,
                                    uint64_t user,
                                    uint64_t round,
                                    uint64_t private_seed,
                                    uint8_t *buf,
                                    size_t capacity,
                                    size_t *written);

// Decodes a payload into `out[0..dim]`.
//
// # Safety
// `payload` must reference `len` bytes and `out` `dim` doubles.
enum JopeqStatus jopeq_codec_decode(const struct JopeqCodec *codec,
                                    const uint8_t *payload,
                                    size_t len,
                                    size_t dim,
                                    uint64_t shared_seed,
                                    uint64_t user,
                                    uint64_t round,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JOPEQ_H */
