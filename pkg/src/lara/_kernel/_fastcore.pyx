# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel: Bloom index derivation, bit ops, Merkle hashing.

Same contract as ``lara._kernel.pure`` but with one-shot SHA-256 through
OpenSSL's EVP interface and the address/bit loops in C. Results are
byte-identical to the pure kernel; tests enforce the parity.
"""

from cpython.bytes cimport PyBytes_FromStringAndSize
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy, memset

cdef extern from "openssl/sha.h":
    unsigned char *SHA256(const unsigned char *d, size_t n,
                          unsigned char *md) nogil

BACKEND = "cython"

DEF STACK_BUF = 512


cdef inline void _sha256(const unsigned char *data, size_t n,
                         unsigned char *out) noexcept nogil:
    SHA256(data, n, out)


cdef size_t _fill_msg(unsigned char *msg, const unsigned char *salt,
                      const unsigned char *elem, size_t elem_len) noexcept nogil:
    # layout: salt(8) || counter(1, patched per index) || element
    memcpy(msg, salt, 8)
    msg[8] = 0
    memcpy(msg + 9, elem, elem_len)
    return 9 + elem_len


cdef inline unsigned long long _index_from(const unsigned char *h,
                                           unsigned long long n_bits) noexcept nogil:
    cdef unsigned long long v = 0
    cdef int i
    for i in range(8):
        v = (v << 8) | h[i]
    return v % n_bits


def bf_indices(n_bits, k, salt, element):
    cdef unsigned long long nb = n_bits
    cdef int kk = k
    cdef const unsigned char[:] salt_v = salt
    cdef const unsigned char[:] elem_v = element
    cdef size_t elem_len = elem_v.shape[0]
    cdef unsigned char stack[STACK_BUF]
    cdef unsigned char *msg = stack
    cdef unsigned char h[32]
    cdef size_t msg_len
    cdef int i
    if 9 + elem_len > STACK_BUF:
        msg = <unsigned char *> malloc(9 + elem_len)
        if msg == NULL:
            raise MemoryError
    try:
        msg_len = _fill_msg(msg, &salt_v[0], &elem_v[0] if elem_len else NULL,
                            elem_len)
        out = []
        for i in range(kk):
            msg[8] = <unsigned char> i
            _sha256(msg, msg_len, h)
            out.append(_index_from(h, nb))
        return out
    finally:
        if msg != stack:
            free(msg)


def bf_set(bits, n_bits, k, salt, element):
    cdef unsigned char[:] bits_v = bits
    cdef unsigned long long nb = n_bits
    cdef int kk = k
    cdef const unsigned char[:] salt_v = salt
    cdef const unsigned char[:] elem_v = element
    cdef size_t elem_len = elem_v.shape[0]
    cdef unsigned char stack[STACK_BUF]
    cdef unsigned char *msg = stack
    cdef unsigned char h[32]
    cdef size_t msg_len
    cdef unsigned long long idx
    cdef int i
    if 9 + elem_len > STACK_BUF:
        msg = <unsigned char *> malloc(9 + elem_len)
        if msg == NULL:
            raise MemoryError
    try:
        msg_len = _fill_msg(msg, &salt_v[0], &elem_v[0] if elem_len else NULL,
                            elem_len)
        with nogil:
            for i in range(kk):
                msg[8] = <unsigned char> i
                _sha256(msg, msg_len, h)
                idx = _index_from(h, nb)
                bits_v[idx >> 3] |= <unsigned char> (1 << (idx & 7))
    finally:
        if msg != stack:
            free(msg)


def bf_test(bits, n_bits, k, salt, element):
    cdef const unsigned char[:] bits_v = bits
    cdef unsigned long long nb = n_bits
    cdef int kk = k
    cdef const unsigned char[:] salt_v = salt
    cdef const unsigned char[:] elem_v = element
    cdef size_t elem_len = elem_v.shape[0]
    cdef unsigned char stack[STACK_BUF]
    cdef unsigned char *msg = stack
    cdef unsigned char h[32]
    cdef size_t msg_len
    cdef unsigned long long idx
    cdef int i
    cdef bint hit = True
    if 9 + elem_len > STACK_BUF:
        msg = <unsigned char *> malloc(9 + elem_len)
        if msg == NULL:
            raise MemoryError
    try:
        msg_len = _fill_msg(msg, &salt_v[0], &elem_v[0] if elem_len else NULL,
                            elem_len)
        with nogil:
            for i in range(kk):
                msg[8] = <unsigned char> i
                _sha256(msg, msg_len, h)
                idx = _index_from(h, nb)
                if not bits_v[idx >> 3] & (1 << (idx & 7)):
                    hit = False
                    break
        return bool(hit)
    finally:
        if msg != stack:
            free(msg)


def merkle_leaf_hashes(payload, seg_bytes, salts):
    cdef const unsigned char[:] payload_v = payload
    cdef const unsigned char[:] salts_v = salts
    cdef size_t total = payload_v.shape[0]
    cdef size_t sb = seg_bytes
    cdef size_t n_leaves = (total + sb - 1) // sb
    cdef bytes result = PyBytes_FromStringAndSize(NULL, n_leaves * 32)
    cdef unsigned char *out = <unsigned char *> result
    cdef unsigned char *buf = <unsigned char *> malloc(16 + sb)
    cdef size_t i, off, take
    if buf == NULL:
        raise MemoryError
    try:
        with nogil:
            for i in range(n_leaves):
                memcpy(buf, &salts_v[i * 16], 16)
                off = i * sb
                take = sb if off + sb <= total else total - off
                memcpy(buf + 16, &payload_v[off], take)
                if take < sb:
                    memset(buf + 16 + take, 0, sb - take)
                _sha256(buf, 16 + sb, out + i * 32)
        return result
    finally:
        free(buf)


def merkle_fold(level):
    cdef const unsigned char[:] level_v = level
    cdef size_t n = level_v.shape[0] // 32
    cdef size_t parents = (n + 1) // 2
    cdef bytes result = PyBytes_FromStringAndSize(NULL, parents * 32)
    cdef unsigned char *out = <unsigned char *> result
    cdef unsigned char buf[64]
    cdef size_t i, j
    with nogil:
        for i in range(0, n, 2):
            j = i // 2
            memcpy(buf, &level_v[i * 32], 32)
            if i + 1 < n:
                memcpy(buf + 32, &level_v[(i + 1) * 32], 32)
            else:
                memcpy(buf + 32, &level_v[i * 32], 32)
            _sha256(buf, 64, out + j * 32)
    return result
