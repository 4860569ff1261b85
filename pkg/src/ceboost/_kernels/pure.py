"""Pure NumPy implementations of the hot kernels.

Mirrors the compiled extension module: Euler-Maruyama stepping for the four
benchmark systems and the conditional-Gaussian filter/smoother/sampler
recursions.  The compiled and pure paths consume identical pre-drawn noise
arrays, so they agree to floating-point accumulation order.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


# ---------------------------------------------------------------------------
# Euler-Maruyama stepping.  ``add`` holds the pre-scaled noise increments
# (n_steps, p); out[m+1] = out[m] + drift(out[m]) * dt + add[m].
# ---------------------------------------------------------------------------

def em_l63(x0, dt, params, add, out):
    sig, rho, beta = params
    out[0] = x0
    n = add.shape[0]
    for m in range(n):
        x, y, z = out[m]
        out[m + 1, 0] = x + sig * (y - x) * dt + add[m, 0]
        out[m + 1, 1] = y + (x * (rho - z) - y) * dt + add[m, 1]
        out[m + 1, 2] = z + (x * y - beta * z) * dt + add[m, 2]
    return out


def em_l96(x0, dt, params, add, out):
    forcing, damping = params
    out[0] = x0
    n = add.shape[0]
    for m in range(n):
        x = out[m]
        drift = (np.roll(x, -1) - np.roll(x, 2)) * np.roll(x, 1) + damping * x + forcing
        out[m + 1] = x + drift * dt + add[m]
    return out


def em_topo(x0, dt, params, add, out):
    d1, d2, d3, d4, du, beta, om1, om3, rot = params
    out[0] = x0
    n = add.shape[0]
    for m in range(n):
        v1, v2, v3, v4, u = out[m]
        out[m + 1, 0] = v1 + (-d1 * v1 - beta * v2 + v2 * u - 2.0 * om1 * u) * dt + add[m, 0]
        out[m + 1, 1] = v2 + (-d2 * v2 + rot * beta * v1 - v1 * u) * dt + add[m, 1]
        out[m + 1, 2] = v3 + (-d3 * v3 - om3 * u - 0.5 * beta * v4 + 2.0 * v4 * u) * dt + add[m, 2]
        out[m + 1, 3] = v4 + (-d4 * v4 + rot * 0.5 * beta * v3 - 2.0 * v3 * u) * dt + add[m, 3]
        out[m + 1, 4] = u + (-du * u + om1 * v1 + 2.0 * om3 * v3) * dt + add[m, 4]
    return out


def em_spekf(x0, dt, params, add, out):
    ghat, what, bhat_re, bhat_im, dg, dw, db, gact, wact = params
    out[0] = x0
    n = add.shape[0]
    for m in range(n):
        ur, ui, g, w, br, bi = out[m]
        geff = ghat + gact * g
        weff = what + wact * w
        out[m + 1, 0] = ur + (-geff * ur - weff * ui + br + bhat_re) * dt + add[m, 0]
        out[m + 1, 1] = ui + (-geff * ui + weff * ur + bi + bhat_im) * dt + add[m, 1]
        out[m + 1, 2] = g + (-dg * g) * dt + add[m, 2]
        out[m + 1, 3] = w + (-dw * w) * dt + add[m, 3]
        out[m + 1, 4] = br + (-db * br) * dt + add[m, 4]
        out[m + 1, 5] = bi + (-db * bi) * dt + add[m, 5]
    return out


# ---------------------------------------------------------------------------
# Conditional-Gaussian recursions.  Hidden dynamics v' = F v + q-noise with
# process covariance Q; observation y_m = H_m v_m + r-noise with covariance R.
# ---------------------------------------------------------------------------

def _psd_chol(a):
    """Cholesky factor tolerant of PSD-degenerate (zero-pivot) matrices.

    Identical algorithm to the compiled kernel so both paths draw the same
    samples from the same normals.
    """
    k = a.shape[0]
    low = np.zeros((k, k))
    for i in range(k):
        s = a[i, i] - np.dot(low[i, :i], low[i, :i])
        low[i, i] = np.sqrt(s) if s > 0.0 else 0.0
        for j in range(i + 1, k):
            if low[i, i] > 0.0:
                low[j, i] = (a[j, i] - np.dot(low[j, :i], low[i, :i])) / low[i, i]
    return low


def cg_filter(y, h, f, q, r, mu0, p0):
    """Kalman filter for a time-varying-observation linear-Gaussian chain.

    y: (T, o) observations of v_0..v_{T-1}; h: (T, o, d) observation maps.
    Returns filtered and one-step-prediction means/covariances at the T+1
    grid points v_0..v_T (prediction index m holds the prior of v_m given
    observations before m; filtered index m conditions on y_m too, with the
    final point carrying no observation).
    """
    t_obs, o = y.shape
    d = mu0.shape[0]
    mu_f = np.zeros((t_obs + 1, d))
    p_f = np.zeros((t_obs + 1, d, d))
    mu_p = np.zeros((t_obs + 1, d))
    p_p = np.zeros((t_obs + 1, d, d))
    mu, p = mu0.copy(), p0.copy()
    for m in range(t_obs):
        mu_p[m] = mu
        p_p[m] = p
        hm = h[m]
        s = hm @ p @ hm.T + r
        gain = p @ hm.T @ np.linalg.inv(s)
        mu = mu + gain @ (y[m] - hm @ mu)
        p = p - gain @ s @ gain.T
        p = 0.5 * (p + p.T)
        mu_f[m] = mu
        p_f[m] = p
        mu = f @ mu
        p = f @ p @ f.T + q
        p = 0.5 * (p + p.T)
    mu_p[t_obs] = mu
    p_p[t_obs] = p
    mu_f[t_obs] = mu
    p_f[t_obs] = p
    return mu_f, p_f, mu_p, p_p


def cg_smoother(mu_f, p_f, mu_p, p_p, f):
    """Fixed-interval (RTS) smoother over the filter output."""
    t = mu_f.shape[0]
    mu_s = mu_f.copy()
    p_s = p_f.copy()
    for m in range(t - 2, -1, -1):
        pred = p_p[m + 1]
        gain = np.linalg.solve(pred.T, f @ p_f[m]).T  # P_f F' pred^-1
        mu_s[m] = mu_f[m] + gain @ (mu_s[m + 1] - mu_p[m + 1])
        p_s[m] = p_f[m] + gain @ (p_s[m + 1] - pred) @ gain.T
        p_s[m] = 0.5 * (p_s[m] + p_s[m].T)
    return mu_s, p_s


def cg_sample(mu_f, p_f, mu_p, p_p, f, normals):
    """Backward sampling pass drawing one posterior trajectory.

    ``normals`` is a (T, d) array of standard normal draws consumed from the
    last grid point backwards.
    """
    t, d = mu_f.shape
    path = np.zeros((t, d))
    path[t - 1] = mu_f[t - 1] + _psd_chol(p_f[t - 1]) @ normals[t - 1]
    for m in range(t - 2, -1, -1):
        pred = p_p[m + 1]
        gain = np.linalg.solve(pred.T, f @ p_f[m]).T
        mean = mu_f[m] + gain @ (path[m + 1] - mu_p[m + 1])
        cov = p_f[m] - gain @ pred @ gain.T
        cov = 0.5 * (cov + cov.T)
        path[m] = mean + _psd_chol(cov) @ normals[m]
    return path
