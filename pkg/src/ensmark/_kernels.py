"""Numba-compiled hot loops: SplitMix64 folding, keyed shuffles, reweighting.

Everything here is deterministic integer / float arithmetic with no global
state, so the compiled functions are safe to call from multiple threads or
forked workers.  Semantics are pinned by golden-vector tests; do not change
the word order or mixing constants without regenerating those vectors.
"""

import numpy as np
from numba import njit

U64 = np.uint64

GOLDEN = U64(0x9E3779B97F4A7C15)
MIX_A = U64(0xBF58476D1CE4E5B9)
MIX_B = U64(0x94D049BB133111EB)

# Domain-separation words keep the sampling / LM / attack streams disjoint
# from watermark-key derivation (which by construction starts with sk words).
DOMAIN_SAMPLE = U64(0xA3C59AC1F3D7E001)
DOMAIN_LM = U64(0xA3C59AC1F3D7E002)
DOMAIN_ATTACK = U64(0xA3C59AC1F3D7E003)
DOMAIN_SEED_TREE = U64(0xA3C59AC1F3D7E004)

_INV_2_64 = float(2.0**-64)


@njit(cache=True)
def mix64(state):
    z = state
    z ^= z >> U64(30)
    z *= MIX_A
    z ^= z >> U64(27)
    z *= MIX_B
    z ^= z >> U64(31)
    return z


@njit(cache=True)
def absorb(state, word):
    # XOR-then-advance: inject the word, then run one SplitMix64 step.
    state ^= word
    state += GOLDEN
    return mix64(state)


@njit(cache=True)
def fold_words(words):
    state = U64(0)
    for i in range(words.shape[0]):
        state = absorb(state, words[i])
    return state


@njit(cache=True)
def stream_value(seed, i):
    # i-th output (1-based step) of the SplitMix64 stream seeded at `seed`.
    return mix64(seed + GOLDEN * U64(i))


@njit(cache=True)
def fisher_yates(seed, n):
    perm = np.arange(n, dtype=np.int64)
    state = seed
    for i in range(n - 1, 0, -1):
        state += GOLDEN
        z = mix64(state)
        j = np.int64(z % U64(i + 1))
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return perm


@njit(cache=True)
def token_position(seed, n, token):
    # Position of `token` in fisher_yates(seed, n) without materializing
    # the inverse permutation.
    perm = fisher_yates(seed, n)
    for pos in range(n):
        if perm[pos] == token:
            return pos
    return -1


@njit(cache=True)
def dip_reweight_perm(probs, perm, alpha):
    """CDF-clipping reweight in the token order given by `perm`.

    New mass at permuted slot t is the length of the CDF increment
    [F(t-1), F(t)] surviving two clips, at alpha and at 1 - alpha.
    Output is renormalized to exact sum 1.
    """
    n = probs.shape[0]
    out = np.empty(n, dtype=np.float64)
    c_lo = alpha
    c_hi = 1.0 - alpha
    f_prev = 0.0
    total = 0.0
    f = 0.0
    for t in range(n):
        v = perm[t]
        f += probs[v]
        a1 = f - c_lo if f > c_lo else 0.0
        b1 = f_prev - c_lo if f_prev > c_lo else 0.0
        a2 = f - c_hi if f > c_hi else 0.0
        b2 = f_prev - c_hi if f_prev > c_hi else 0.0
        m = (a1 - b1) + (a2 - b2)
        if m < 0.0:
            m = 0.0
        out[v] = m
        total += m
        f_prev = f
    for v in range(n):
        out[v] /= total
    return out


@njit(cache=True)
def dip_reweight_keyed(probs, seed, alpha):
    perm = fisher_yates(seed, probs.shape[0])
    return dip_reweight_perm(probs, perm, alpha)


@njit(cache=True)
def derive_key(sk_lo, sk_hi, member_index, ctx):
    state = absorb(U64(0), sk_lo)
    state = absorb(state, sk_hi)
    state = absorb(state, U64(member_index))
    for q in range(ctx.shape[0]):
        state = absorb(state, U64(ctx[q]))
    return state


@njit(cache=True)
def lm_logit_base(lm_seed, ctx):
    state = absorb(U64(0), DOMAIN_LM)
    state = absorb(state, lm_seed)
    for q in range(ctx.shape[0]):
        state = absorb(state, U64(ctx[q]))
    return state


@njit(cache=True)
def lm_distribution(lm_seed, ctx, n_vocab, beta):
    base = lm_logit_base(lm_seed, ctx)
    logits = np.empty(n_vocab, dtype=np.float64)
    mx = -1.0
    for j in range(n_vocab):
        u = float(stream_value(base, j + 1)) * _INV_2_64
        lj = beta * u
        logits[j] = lj
        if lj > mx:
            mx = lj
    total = 0.0
    for j in range(n_vocab):
        e = np.exp(logits[j] - mx)
        logits[j] = e
        total += e
    for j in range(n_vocab):
        logits[j] /= total
    return logits


@njit(cache=True)
def inverse_cdf_sample(probs, u):
    # First index whose running CDF strictly exceeds u.
    c = 0.0
    n = probs.shape[0]
    for t in range(n):
        c += probs[t]
        if u < c:
            return t
    return n - 1


@njit(cache=True)
def count_green(tokens, start, a, sk_lo, sk_hi, member_index, n_vocab):
    """Green-token count over positions [start, len): key from the preceding
    a-gram, green = last ceil(N/2) slots of the keyed permutation."""
    threshold = n_vocab - (n_vocab + 1) // 2
    green = 0
    scored = 0
    for t in range(start, tokens.shape[0]):
        state = absorb(U64(0), sk_lo)
        state = absorb(state, sk_hi)
        state = absorb(state, U64(member_index))
        for q in range(t - a, t):
            state = absorb(state, U64(tokens[q]))
        pos = token_position(state, n_vocab, tokens[t])
        if pos >= threshold:
            green += 1
        scored += 1
    return green, scored


@njit(cache=True)
def ensemble_mc_moments(probs, seeds, alpha):
    """Running per-entry sum and sum-of-squares of the n-fold reweight output
    over a batch of key tuples.  seeds has shape (tuples, n)."""
    m_tuples, n_layers = seeds.shape
    n_vocab = probs.shape[0]
    s1 = np.zeros(n_vocab, dtype=np.float64)
    s2 = np.zeros(n_vocab, dtype=np.float64)
    for m in range(m_tuples):
        cur = probs.copy()
        for i in range(n_layers):
            cur = dip_reweight_keyed(cur, seeds[m, i], alpha)
        for v in range(n_vocab):
            s1[v] += cur[v]
            s2[v] += cur[v] * cur[v]
    return s1, s2
