"""Fused elementwise core of the BOA update, compiled with numba.

Arrays are laid out ``(C, K, L)``: configuration, expert, basis coefficient.
"""

import math

import numba
import numpy as np


@numba.njit(cache=True, error_model="numpy")
def boa_core(r, R, E, V, keep, neg_log_b0, k_b0, eta_cap, eta_floor, eta_out, beta_out):
    """Advance range, variance, learning rate and regret; write new coefficients.

    ``R``, ``E``, ``V`` are updated in place.  ``beta_out`` receives
    ``K beta0 * softmax_k(-eta R + log eta)`` for every ``(c, l)``, evaluated
    as ``eta_k exp(s - eta_k R_k)`` normalized, with ``s = min_k eta_k R_k``.
    That form needs no logarithm, and with ``eta`` confined to
    ``[eta_floor, eta_cap]`` underflow can only hit terms that would be
    negligible anyway.
    """
    C, K, L = r.shape
    x = np.empty(K)
    et = np.empty(K)
    for c in range(C):
        kc = keep[c]
        for l in range(L):
            s = np.inf
            for k in range(K):
                rv = r[c, k, l]
                e = E[c, k, l] * kc
                a = abs(rv)
                if a > e:
                    e = a
                v = V[c, k, l] * kc + rv * rv
                E[c, k, l] = e
                V[c, k, l] = v

                eta = np.inf
                if e > 0.0:
                    eta = 0.5 / e
                if v > 0.0:
                    ratio = neg_log_b0[k, l] / v
                    if ratio < eta * eta:
                        eta = math.sqrt(ratio)
                if eta == np.inf:
                    eta = eta_cap
                if eta < eta_floor:
                    eta = eta_floor
                eta_out[c, k, l] = eta

                er = eta * rv
                acc = R[c, k, l] * kc - rv * (1.0 - er) / 2.0
                if er < -0.5:
                    acc += e
                R[c, k, l] = acc

                xk = eta * acc
                x[k] = xk
                et[k] = eta
                if xk < s:
                    s = xk
            total = 0.0
            for k in range(K):
                if x[k] == s:
                    x[k] = et[k]
                else:
                    x[k] = et[k] * math.exp(s - x[k])
                total += x[k]
            for k in range(K):
                beta_out[c, k, l] = k_b0[k, l] * (x[k] / total)


@numba.njit(cache=True)
def combine(w, experts, out):
    """``out[c, m] = sum_k w[c, k, m] * experts[m, k]``."""
    C, K, M = w.shape
    for c in range(C):
        for m in range(M):
            acc = 0.0
            for k in range(K):
                acc += w[c, k, m] * experts[m, k]
            out[c, m] = acc


@numba.njit(cache=True)
def pointwise_regret(combined, experts, y, probs, out):
    """Linearized instantaneous regret ``QL'(combined) * (combined - expert)``, ``(C, K, M)``."""
    C, K, M = out.shape
    for c in range(C):
        for m in range(M):
            q = combined[c, m]
            g = (1.0 if y < q else 0.0) - probs[m]
            for k in range(K):
                out[c, k, m] = g * (q - experts[m, k])
