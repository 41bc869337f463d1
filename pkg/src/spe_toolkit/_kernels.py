"""Compiled hot paths: hashing, featurization, sentence embedding, SGD.

Everything here is deliberately single-threaded, fastmath-free numba so that
results are bit-reproducible for a fixed seed. The embedding kernels pin one
canonical accumulation order (documented on `token_partials`) that every
encode path shares; this is what makes a one-member ensemble encode
bit-identical to the member's own sentence embedding.

Sentence data is passed as flattened arrays:
  tok_cps / cp_offs    codepoints of each token wrapped in '<' '>', uint32,
                       token t occupies cp_offs[t]:cp_offs[t+1]
  tok_bytes / byte_offs  UTF-8 bytes of each raw (unwrapped) token, uint8
  word_ids             per-token vocabulary id or -1, int32; shape (n, N)
                       when N classifier configs are processed at once

Classifier configs are passed as parallel arrays over members (minns, maxns,
orders, buckets, vocabs), with embedding rows concatenated in `mats_flat`
(member m owns rows row_offs[m]:row_offs[m+1]) and optional open-addressing
remap tables (feature id -> local row) concatenated in rk/rv with power-of-two
table slices t_offs[m]:t_offs[m+1]. use_remap[m] == 0 means feature ids index
the member's rows directly (unpruned model).
"""

from __future__ import annotations

import numpy as np
from numba import njit

FNV_BASIS = np.uint32(2166136261)
FNV_PRIME = np.uint32(16777619)

_FNV64_BASIS = np.uint64(0xCBF29CE484222325)
_FNV64_PRIME = np.uint64(0x100000001B3)

_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SPLITMIX_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SPLITMIX_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True, inline="always")
def _push_byte(h, b):
    return np.uint32((h ^ np.uint32(b)) * FNV_PRIME)


@njit(cache=True, nogil=True, inline="always")
def _push_codepoint(h, cp):
    # FNV-1a over the UTF-8 encoding of one codepoint.
    if cp < 0x80:
        h = _push_byte(h, cp)
    elif cp < 0x800:
        h = _push_byte(h, np.uint32(0xC0) | (cp >> np.uint32(6)))
        h = _push_byte(h, np.uint32(0x80) | (cp & np.uint32(0x3F)))
    elif cp < 0x10000:
        h = _push_byte(h, np.uint32(0xE0) | (cp >> np.uint32(12)))
        h = _push_byte(h, np.uint32(0x80) | ((cp >> np.uint32(6)) & np.uint32(0x3F)))
        h = _push_byte(h, np.uint32(0x80) | (cp & np.uint32(0x3F)))
    else:
        h = _push_byte(h, np.uint32(0xF0) | (cp >> np.uint32(18)))
        h = _push_byte(h, np.uint32(0x80) | ((cp >> np.uint32(12)) & np.uint32(0x3F)))
        h = _push_byte(h, np.uint32(0x80) | ((cp >> np.uint32(6)) & np.uint32(0x3F)))
        h = _push_byte(h, np.uint32(0x80) | (cp & np.uint32(0x3F)))
    return h


@njit(cache=True, nogil=True)
def fnv1a_bytes(data):
    """FNV-1a 32-bit over a uint8 array."""
    h = FNV_BASIS
    for i in range(data.shape[0]):
        h = _push_byte(h, np.uint32(data[i]))
    return h


@njit(cache=True, nogil=True, inline="always")
def _mix64(x):
    z = np.uint64(x)
    z = (z ^ (z >> np.uint64(30))) * _SPLITMIX_M1
    z = (z ^ (z >> np.uint64(27))) * _SPLITMIX_M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def build_remap_table(ids_sorted, table_size):
    """Open-addressing table mapping feature id -> local row index.

    table_size must be a power of two strictly greater than len(ids_sorted).
    Empty slots hold key -1.
    """
    keys = np.full(table_size, -1, dtype=np.int64)
    vals = np.zeros(table_size, dtype=np.int32)
    mask = np.uint64(table_size - 1)
    for row in range(ids_sorted.shape[0]):
        fid = ids_sorted[row]
        slot = np.int64(_mix64(np.uint64(fid)) & mask)
        while keys[slot] != -1:
            slot = np.int64((np.uint64(slot) + np.uint64(1)) & mask)
        keys[slot] = fid
        vals[slot] = row
    return keys, vals


@njit(cache=True, nogil=True, inline="always")
def _remap_lookup(keys, vals, lo, mask, fid):
    slot = np.int64(_mix64(np.uint64(fid)) & mask)
    while True:
        k = keys[lo + slot]
        if k == fid:
            return np.int64(vals[lo + slot])
        if k == -1:
            return np.int64(-1)
        slot = np.int64((np.uint64(slot) + np.uint64(1)) & mask)


@njit(cache=True, nogil=True)
def featurize(tok_cps, cp_offs, tok_bytes, byte_offs, word_ids,
              minn, maxn, order, vocab_size, bucket_count):
    """All feature-id occurrences of one sentence for one classifier config.

    Emits, in order: per token its vocabulary id (if known) then its char
    n-gram ids; then word n-gram ids. Duplicates are kept; callers aggregate.
    """
    n = word_ids.shape[0]
    count = 0
    for t in range(n):
        if word_ids[t] >= 0:
            count += 1
        if minn > 0:
            wlen = cp_offs[t + 1] - cp_offs[t]
            for start in range(wlen):
                top = min(maxn, wlen - start)
                if top >= minn:
                    count += top - minn + 1
    if order >= 2:
        for start in range(n):
            top = min(order, n - start)
            if top >= 2:
                count += top - 1
    out = np.empty(count, dtype=np.int64)
    pos = 0
    for t in range(n):
        if word_ids[t] >= 0:
            out[pos] = word_ids[t]
            pos += 1
        if minn > 0:
            lo = cp_offs[t]
            wlen = cp_offs[t + 1] - lo
            for start in range(wlen):
                h = FNV_BASIS
                top = min(maxn, wlen - start)
                for ln in range(1, top + 1):
                    h = _push_codepoint(h, tok_cps[lo + start + ln - 1])
                    if ln >= minn:
                        out[pos] = vocab_size + np.int64(h) % bucket_count
                        pos += 1
    if order >= 2:
        for start in range(n):
            h = FNV_BASIS
            blo = byte_offs[start]
            for i in range(blo, byte_offs[start + 1]):
                h = _push_byte(h, np.uint32(tok_bytes[i]))
            top = min(order, n - start)
            for k in range(2, top + 1):
                h = _push_byte(h, np.uint32(0x20))
                blo = byte_offs[start + k - 1]
                for i in range(blo, byte_offs[start + k]):
                    h = _push_byte(h, np.uint32(tok_bytes[i]))
                out[pos] = vocab_size + np.int64(h) % bucket_count
                pos += 1
    return out


@njit(cache=True, nogil=True)
def token_partials(tok_cps, cp_offs, word_ids, minns, maxns, buckets, vocabs,
                   mats_flat, row_offs, use_remap, rk, rv, t_offs,
                   partials, hits):
    """Per-token float64 embedding subtotals for N classifier configs.

    Canonical accumulation order, shared by every encode path: for each token,
    first its vocabulary row, then char n-gram rows by (start ascending,
    length ascending); features whose row was pruned contribute nothing.
    partials has shape (n, N, dim), hits (n, N); both are overwritten.
    """
    n = word_ids.shape[0]
    nm = minns.shape[0]
    dim = mats_flat.shape[1]
    partials[:, :, :] = 0.0
    hits[:, :] = 0
    gmaxn = 0
    for m in range(nm):
        if minns[m] > 0 and maxns[m] > gmaxn:
            gmaxn = maxns[m]
    for t in range(n):
        for m in range(nm):
            wid = word_ids[t, m]
            if wid >= 0:
                row = np.int64(wid)
                if use_remap[m] != 0:
                    mask = np.uint64(t_offs[m + 1] - t_offs[m] - 1)
                    row = _remap_lookup(rk, rv, t_offs[m], mask, np.int64(wid))
                if row >= 0:
                    base = row_offs[m] + row
                    for d in range(dim):
                        partials[t, m, d] += mats_flat[base, d]
                    hits[t, m] += 1
        lo = cp_offs[t]
        wlen = cp_offs[t + 1] - lo
        for start in range(wlen):
            h = FNV_BASIS
            maxtop = min(gmaxn, wlen - start)
            for ln in range(1, maxtop + 1):
                h = _push_codepoint(h, tok_cps[lo + start + ln - 1])
                for m in range(nm):
                    if minns[m] > 0 and minns[m] <= ln and ln <= maxns[m]:
                        fid = vocabs[m] + np.int64(h) % buckets[m]
                        row = fid
                        if use_remap[m] != 0:
                            mask = np.uint64(t_offs[m + 1] - t_offs[m] - 1)
                            row = _remap_lookup(rk, rv, t_offs[m], mask, fid)
                        if row >= 0:
                            base = row_offs[m] + row
                            for d in range(dim):
                                partials[t, m, d] += mats_flat[base, d]
                            hits[t, m] += 1


@njit(cache=True, nogil=True)
def combine_partials(partials, hits, tok_bytes, byte_offs, orders, buckets,
                     vocabs, mats_flat, row_offs, use_remap, rk, rv, t_offs):
    """Member embeddings from token subtotals plus word n-gram rows.

    Continues the canonical order: token subtotals in token order, then word
    n-gram rows by (start ascending, order ascending), then divide by the
    retained-feature count and cast to float32. Zero retained features yield
    the zero vector.
    """
    n = partials.shape[0]
    nm = orders.shape[0]
    dim = mats_flat.shape[1]
    acc = np.zeros((nm, dim), dtype=np.float64)
    total = np.zeros(nm, dtype=np.int64)
    for t in range(n):
        for m in range(nm):
            for d in range(dim):
                acc[m, d] += partials[t, m, d]
            total[m] += hits[t, m]
    maxorder = 0
    for m in range(nm):
        if orders[m] > maxorder:
            maxorder = orders[m]
    if maxorder >= 2:
        for start in range(n):
            h = FNV_BASIS
            blo = byte_offs[start]
            for i in range(blo, byte_offs[start + 1]):
                h = _push_byte(h, np.uint32(tok_bytes[i]))
            top = min(maxorder, n - start)
            for k in range(2, top + 1):
                h = _push_byte(h, np.uint32(0x20))
                blo = byte_offs[start + k - 1]
                for i in range(blo, byte_offs[start + k]):
                    h = _push_byte(h, np.uint32(tok_bytes[i]))
                for m in range(nm):
                    if orders[m] >= k:
                        fid = vocabs[m] + np.int64(h) % buckets[m]
                        row = fid
                        if use_remap[m] != 0:
                            mask = np.uint64(t_offs[m + 1] - t_offs[m] - 1)
                            row = _remap_lookup(rk, rv, t_offs[m], mask, fid)
                        if row >= 0:
                            base = row_offs[m] + row
                            for d in range(dim):
                                acc[m, d] += mats_flat[base, d]
                            total[m] += 1
    out = np.zeros((nm, dim), dtype=np.float32)
    for m in range(nm):
        if total[m] > 0:
            for d in range(dim):
                out[m, d] = np.float32(acc[m, d] / total[m])
    return out


@njit(cache=True, nogil=True)
def combine_cached(cache, ids, tok_bytes, byte_offs, orders, buckets, vocabs,
                   mats_flat, row_offs, use_remap, rk, rv, t_offs):
    """Ensemble-mean sentence embedding from cached per-token subtotals.

    cache[ids[t]] packs, per token, the float64 member subtotals followed
    by the per-member hit counts: [partials(m0..mN-1 x dim), hits(m0..mN-1)].
    Token and word n-gram accumulation are arithmetically identical to
    combine_partials; each member embedding is rounded to float32 before
    the float64 member mean, exactly like averaging the members' own
    sentence embeddings. Cached and uncached encodes are bit-identical.
    """
    n = ids.shape[0]
    nm = orders.shape[0]
    dim = mats_flat.shape[1]
    acc = np.zeros((nm, dim), dtype=np.float64)
    total = np.zeros(nm, dtype=np.float64)
    for t in range(n):
        row = ids[t]
        for m in range(nm):
            base = m * dim
            for d in range(dim):
                acc[m, d] += cache[row, base + d]
            total[m] += cache[row, nm * dim + m]
    maxorder = 0
    for m in range(nm):
        if orders[m] > maxorder:
            maxorder = orders[m]
    if maxorder >= 2:
        for start in range(n):
            h = FNV_BASIS
            blo = byte_offs[start]
            for i in range(blo, byte_offs[start + 1]):
                h = _push_byte(h, np.uint32(tok_bytes[i]))
            top = min(maxorder, n - start)
            for k in range(2, top + 1):
                h = _push_byte(h, np.uint32(0x20))
                blo = byte_offs[start + k - 1]
                for i in range(blo, byte_offs[start + k]):
                    h = _push_byte(h, np.uint32(tok_bytes[i]))
                for m in range(nm):
                    if orders[m] >= k:
                        fid = vocabs[m] + np.int64(h) % buckets[m]
                        row = fid
                        if use_remap[m] != 0:
                            mask = np.uint64(t_offs[m + 1] - t_offs[m] - 1)
                            row = _remap_lookup(rk, rv, t_offs[m], mask, fid)
                        if row >= 0:
                            base = row_offs[m] + row
                            for d in range(dim):
                                acc[m, d] += mats_flat[base, d]
                            total[m] += 1.0
    mean = np.zeros(dim, dtype=np.float64)
    for m in range(nm):
        if total[m] > 0.0:
            for d in range(dim):
                mean[d] += np.float64(np.float32(acc[m, d] / total[m]))
    out = np.empty(dim, dtype=np.float32)
    for d in range(dim):
        out[d] = np.float32(mean[d] / nm)
    return out


@njit(cache=True, nogil=True, inline="always")
def _is_space(b):
    # The ASCII bytes str.split treats as whitespace.
    return b == 32 or (9 <= b <= 13) or (28 <= b <= 31)


@njit(cache=True, nogil=True)
def ascii_cache_insert(table_val, blob, blob_offs, blob_lens, used, row, tok):
    """Register cache row `row` under the token bytes `tok`.

    Copies the bytes into the blob at `used` and adds an open-addressing
    entry (FNV-1a 64-bit probe start, zero means empty, values store row + 1).
    Returns the new blob fill level. Callers guarantee blob capacity and that
    the token is not already present.
    """
    tlen = tok.shape[0]
    for j in range(tlen):
        blob[used + j] = tok[j]
    blob_offs[row] = used
    blob_lens[row] = tlen
    h = _FNV64_BASIS
    for j in range(tlen):
        h = (h ^ np.uint64(tok[j])) * _FNV64_PRIME
    mask = np.uint64(table_val.shape[0] - 1)
    slot = np.int64(h & mask)
    while table_val[slot] != 0:
        slot = np.int64((np.uint64(slot) + np.uint64(1)) & mask)
    table_val[slot] = row + 1
    return used + tlen


@njit(cache=True, nogil=True)
def encode_ascii(sbytes, table_val, blob, blob_offs, blob_lens, cache,
                 orders, buckets, vocabs, mats_flat, row_offs,
                 use_remap, rk, rv, t_offs):
    """Fused ensemble-mean encode of one ASCII sentence from its raw bytes.

    Splits on the same ASCII whitespace bytes as str.split, resolves each
    token to its cache row through the byte table (exact byte comparison on
    probe), then accumulates exactly like combine_cached, so the two paths
    are bit-identical. Returns (embedding, ok); ok is False when some token
    has no cache row yet, in which case callers insert it and retry.
    """
    nm = orders.shape[0]
    dim = mats_flat.shape[1]
    nb = sbytes.shape[0]
    ntok = 0
    i = 0
    while i < nb:
        if _is_space(sbytes[i]):
            i += 1
            continue
        ntok += 1
        while i < nb and not _is_space(sbytes[i]):
            i += 1
    starts = np.empty(ntok, dtype=np.int64)
    ends = np.empty(ntok, dtype=np.int64)
    t = 0
    i = 0
    while i < nb:
        if _is_space(sbytes[i]):
            i += 1
            continue
        starts[t] = i
        while i < nb and not _is_space(sbytes[i]):
            i += 1
        ends[t] = i
        t += 1
    out = np.zeros(dim, dtype=np.float32)
    acc = np.zeros((nm, dim), dtype=np.float64)
    total = np.zeros(nm, dtype=np.float64)
    mask = np.uint64(table_val.shape[0] - 1)
    for t in range(ntok):
        s0 = starts[t]
        tlen = ends[t] - s0
        h = _FNV64_BASIS
        for j in range(s0, s0 + tlen):
            h = (h ^ np.uint64(sbytes[j])) * _FNV64_PRIME
        slot = np.int64(h & mask)
        row = np.int64(-1)
        while table_val[slot] != 0:
            r = np.int64(table_val[slot] - 1)
            if blob_lens[r] == tlen:
                o = blob_offs[r]
                eq = True
                for j in range(tlen):
                    if blob[o + j] != sbytes[s0 + j]:
                        eq = False
                        break
                if eq:
                    row = r
                    break
            slot = np.int64((np.uint64(slot) + np.uint64(1)) & mask)
        if row < 0:
            return out, False
        for m in range(nm):
            base = m * dim
            for d in range(dim):
                acc[m, d] += cache[row, base + d]
            total[m] += cache[row, nm * dim + m]
    maxorder = 0
    for m in range(nm):
        if orders[m] > maxorder:
            maxorder = orders[m]
    if maxorder >= 2:
        for start in range(ntok):
            h32 = FNV_BASIS
            for i in range(starts[start], ends[start]):
                h32 = _push_byte(h32, np.uint32(sbytes[i]))
            top = min(maxorder, ntok - start)
            for k in range(2, top + 1):
                h32 = _push_byte(h32, np.uint32(0x20))
                for i in range(starts[start + k - 1], ends[start + k - 1]):
                    h32 = _push_byte(h32, np.uint32(sbytes[i]))
                for m in range(nm):
                    if orders[m] >= k:
                        fid = vocabs[m] + np.int64(h32) % buckets[m]
                        row = fid
                        if use_remap[m] != 0:
                            tmask = np.uint64(t_offs[m + 1] - t_offs[m] - 1)
                            row = _remap_lookup(rk, rv, t_offs[m], tmask, fid)
                        if row >= 0:
                            base = row_offs[m] + row
                            for d in range(dim):
                                acc[m, d] += mats_flat[base, d]
                            total[m] += 1.0
    mean = np.zeros(dim, dtype=np.float64)
    for m in range(nm):
        if total[m] > 0.0:
            for d in range(dim):
                mean[d] += np.float64(np.float32(acc[m, d] / total[m]))
    for d in range(dim):
        out[d] = np.float32(mean[d] / nm)
    return out, True


@njit(cache=True, nogil=True, inline="always")
def _splitmix64(state):
    state = state + _SPLITMIX_GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _SPLITMIX_M1
    z = (z ^ (z >> np.uint64(27))) * _SPLITMIX_M2
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, nogil=True)
def sgd_epochs(feat_ids, feat_cnts, ex_offs, labels, w_in, w_out,
               epochs, lr0, seed):
    """In-place SGD over softmax cross-entropy; returns mean loss per epoch.

    Examples are CSR-packed (feat_ids/feat_cnts sliced by ex_offs). Example
    order is reshuffled every epoch with a splitmix64-driven Fisher-Yates so
    runs are reproducible for a fixed seed on any platform. The learning rate
    decays linearly to zero over epochs * n_examples updates. All matrix
    arithmetic is float32, matching the stored model precision.
    """
    n = labels.shape[0]
    nlabels, dim = w_out.shape
    order = np.arange(n, dtype=np.int64)
    state = np.uint64(seed) * np.uint64(2654435769) + np.uint64(1)
    total_updates = np.float64(epochs * n)
    losses = np.zeros(epochs, dtype=np.float64)
    hidden = np.zeros(dim, dtype=np.float32)
    grad_h = np.zeros(dim, dtype=np.float32)
    logits = np.zeros(nlabels, dtype=np.float32)
    t = 0
    for ep in range(epochs):
        for i in range(n - 1, 0, -1):
            state, z = _splitmix64(state)
            j = np.int64(z % np.uint64(i + 1))
            tmp = order[i]
            order[i] = order[j]
            order[j] = tmp
        epoch_loss = 0.0
        for ii in range(n):
            ex = order[ii]
            lr = np.float32(lr0 * (1.0 - t / total_updates))
            t += 1
            lo, hi = ex_offs[ex], ex_offs[ex + 1]
            total_cnt = np.float32(0.0)
            for d in range(dim):
                hidden[d] = np.float32(0.0)
            for p in range(lo, hi):
                c = feat_cnts[p]
                total_cnt += c
                base = feat_ids[p]
                for d in range(dim):
                    hidden[d] += c * w_in[base, d]
            if total_cnt > np.float32(0.0):
                for d in range(dim):
                    hidden[d] /= total_cnt
            maxz = np.float32(-3.4e38)
            for l in range(nlabels):
                s = np.float32(0.0)
                for d in range(dim):
                    s += w_out[l, d] * hidden[d]
                logits[l] = s
                if s > maxz:
                    maxz = s
            sumexp = np.float32(0.0)
            for l in range(nlabels):
                logits[l] = np.exp(logits[l] - maxz)
                sumexp += logits[l]
            y = labels[ex]
            for l in range(nlabels):
                logits[l] /= sumexp
            py = logits[y]
            if py < np.float32(1e-30):
                py = np.float32(1e-30)
            epoch_loss += -np.log(np.float64(py))
            for d in range(dim):
                grad_h[d] = np.float32(0.0)
            for l in range(nlabels):
                g = logits[l]
                if l == y:
                    g -= np.float32(1.0)
                glr = lr * g
                for d in range(dim):
                    grad_h[d] += g * w_out[l, d]
                    w_out[l, d] -= glr * hidden[d]
            if total_cnt > np.float32(0.0):
                for p in range(lo, hi):
                    scale = lr * feat_cnts[p] / total_cnt
                    base = feat_ids[p]
                    for d in range(dim):
                        w_in[base, d] -= scale * grad_h[d]
        losses[ep] = epoch_loss / n
    return losses
