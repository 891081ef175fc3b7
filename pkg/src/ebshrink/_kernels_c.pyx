# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled mixture log-likelihood kernels.

Same contract as ``_kernels_py``; see that module for the statistic
definitions.  The golden-section sweeps of the masked M-step call
``weighted_mixture_loglik`` hundreds of times per iteration with the same
statistics and different (sigma2, eta), so the loop is kept allocation
free.
"""

from libc.math cimport log

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double _LOG_2PI = 1.8378770664093453


def component_loglik(d, w2, rss, css, nobs, double sigma2, double eta):
    """Both component log-densities for every tissue; see _kernels_py."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] d_ = np.ascontiguousarray(d, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] w2_ = np.ascontiguousarray(w2, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rss_ = np.ascontiguousarray(rss, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] css_ = np.ascontiguousarray(css, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nobs_ = np.ascontiguousarray(nobs, dtype=np.float64)
    cdef Py_ssize_t m = d_.shape[0], p = d_.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lg0 = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lg1 = np.empty(m, dtype=np.float64)
    cdef double log_s2 = log(sigma2)
    cdef Py_ssize_t t, j
    cdef double logdet, corr, shifted
    for t in range(m):
        lg0[t] = -0.5 * (nobs_[t] * (_LOG_2PI + log_s2) + css_[t] / sigma2)
        logdet = (nobs_[t] - p) * log_s2
        corr = 0.0
        for j in range(p):
            shifted = sigma2 + eta * d_[t, j]
            logdet += log(shifted)
            corr += w2_[t, j] / shifted
        lg1[t] = -0.5 * (nobs_[t] * _LOG_2PI + logdet
                         + rss_[t] / sigma2 - eta / sigma2 * corr)
    return lg0, lg1


def weighted_mixture_loglik(d, w2, rss, css, nobs, t0, t1, double sigma2, double eta):
    """sum_t t0*lg0 + t1*lg1 without materializing the per-tissue vectors."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] d_ = np.ascontiguousarray(d, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] w2_ = np.ascontiguousarray(w2, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rss_ = np.ascontiguousarray(rss, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] css_ = np.ascontiguousarray(css, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nobs_ = np.ascontiguousarray(nobs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t0_ = np.ascontiguousarray(t0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t1_ = np.ascontiguousarray(t1, dtype=np.float64)
    cdef Py_ssize_t m = d_.shape[0], p = d_.shape[1]
    cdef double log_s2 = log(sigma2)
    cdef double total = 0.0
    cdef Py_ssize_t t, j
    cdef double logdet, corr, shifted, lg0, lg1
    for t in range(m):
        lg0 = -0.5 * (nobs_[t] * (_LOG_2PI + log_s2) + css_[t] / sigma2)
        logdet = (nobs_[t] - p) * log_s2
        corr = 0.0
        for j in range(p):
            shifted = sigma2 + eta * d_[t, j]
            logdet += log(shifted)
            corr += w2_[t, j] / shifted
        lg1 = -0.5 * (nobs_[t] * _LOG_2PI + logdet
                      + rss_[t] / sigma2 - eta / sigma2 * corr)
        total += t0_[t] * lg0 + t1_[t] * lg1
    return total
