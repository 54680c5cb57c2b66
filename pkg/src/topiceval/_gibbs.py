"""Numba kernels for the collapsed Gibbs sweep.

The random stream is SplitMix64 (Steele et al.'s 64-bit mixer): state advances
by the golden-gamma constant and each output is a finalized mix of the state.
Uniform doubles take the top 53 bits. The generator state lives in a one-element
uint64 array so kernels can advance it in place; identical seeds give identical
streams on every platform.
"""

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, inline="always")
def _next_u64(rng_state):
    rng_state[0] = rng_state[0] + _GAMMA
    z = rng_state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _next_unit(rng_state):
    # uniform double in [0, 1)
    return float(_next_u64(rng_state) >> _S11) * _INV53


@njit(cache=True)
def init_assignments(tokens, token_docs, num_topics, z, n_dk, n_kw, n_k, n_d, rng_state):
    """Assign each token a uniform random topic and build the count tables."""
    for t in range(tokens.shape[0]):
        k = int(_next_unit(rng_state) * num_topics)
        if k >= num_topics:
            k = num_topics - 1
        z[t] = k
        d = token_docs[t]
        w = tokens[t]
        n_dk[d, k] += 1
        n_kw[k, w] += 1
        n_k[k] += 1
        n_d[d] += 1


@njit(cache=True)
def gibbs_sweep(tokens, token_docs, z, n_dk, n_kw, n_k, alpha, beta, rng_state, weight_buf):
    """One full sweep: resample every token's topic from the collapsed conditional."""
    num_topics = n_k.shape[0]
    vbeta = n_kw.shape[1] * beta
    for t in range(tokens.shape[0]):
        d = token_docs[t]
        w = tokens[t]
        k_old = z[t]
        n_dk[d, k_old] -= 1
        n_kw[k_old, w] -= 1
        n_k[k_old] -= 1

        total = 0.0
        for k in range(num_topics):
            wk = (n_dk[d, k] + alpha) * (n_kw[k, w] + beta) / (n_k[k] + vbeta)
            weight_buf[k] = wk
            total += wk

        r = _next_unit(rng_state) * total
        acc = 0.0
        k_new = num_topics - 1
        for k in range(num_topics):
            acc += weight_buf[k]
            if r < acc:
                k_new = k
                break

        z[t] = k_new
        n_dk[d, k_new] += 1
        n_kw[k_new, w] += 1
        n_k[k_new] += 1
