"""Sample loop for the syrinx model.

One source of truth: `syrinx_loop` is written in numba-compilable Python.
The synth runs the njit-compiled version; the test suite runs the same
function through the plain interpreter and requires bit-identical output,
which guards against compilation drift (the arithmetic is straight float64
with no reassociation in either engine).

State is packed into flat arrays so the loop stays allocation-free:

float scalar state `sc`:
  0 x_left, 1 vel_left, 2 x_right, 3 vel_right, 4 beak_lp,
  5 dc_x, 6 dc_y, 7..11 smoothed controls (p_lung, tension_l, tension_r,
  trachea_length_scale, trachea_radius_scale), 12 u_left, 13 u_right,
  14 p0_left, 15 p0_right, 16 p1
int state `ist`:
  0 write_pos (monotonic), 1 sample_count, 2 delay_old, 3 delay_new,
  4 xfade_pos, 5 hold_remaining
"""
import math

SC_XL, SC_VL, SC_XR, SC_VR, SC_LP = 0, 1, 2, 3, 4
SC_DCX, SC_DCY = 5, 6
SC_PLS, SC_TLS, SC_TRS, SC_LSS, SC_RSS = 7, 8, 9, 10, 11
SC_UL, SC_UR, SC_P0L, SC_P0R, SC_P1 = 12, 13, 14, 15, 16
SC_SIZE = 17

IS_W, IS_COUNT, IS_DOLD, IS_DNEW, IS_XPOS, IS_HOLD = 0, 1, 2, 3, 4, 5
IS_SIZE = 6

(P_DT, P_CAPT, P_CAPB, P_DB, P_Z0B, P_Z0T, P_RHO2, P_WMEM, P_H0, P_HMIN,
 P_AM, P_INVMASS, P_ZETA2, P_WREF, P_INVTREF, P_KSM, P_POLE, P_RBEAK,
 P_RLUNG, P_SRC, P_RDC, P_GAIN, P_NV, P_BLOCK, P_HOLDN, P_DLYT, P_OS,
 ) = range(27)
P_SIZE = 27


try:
    from numba import njit as _njit
    _HAVE_NUMBA = True
except ImportError:          # pragma: no cover - numba is a hard dep, but
    _HAVE_NUMBA = False      # the model must stay usable without it


def _solve_flow_py(d, a2, z):
    # simultaneous solution of the Bernoulli relation and the wave-junction
    # pressures: |U| satisfies U^2/a2 + z*|U| - |d| = 0
    b = a2 * z
    u = 0.5 * (-b + math.sqrt(b * b + 4.0 * a2 * abs(d)))
    if d < 0.0:
        return -u
    return u


if _HAVE_NUMBA:
    _solve_flow = _njit(cache=True)(_solve_flow_py)
else:
    _solve_flow = _solve_flow_py


def syrinx_loop(n, out, sc, ist, tf, tb, bfl, bbl, bfr, bbr, targ, par,
                clamp_membrane, tba_trace):
    """Advance the model n samples. Returns the absolute sample index of the
    first non-finite-state event in this call, or -1."""
    dt = par[P_DT]
    capt = int(par[P_CAPT])
    capb = int(par[P_CAPB])
    db = int(par[P_DB])
    z0b = par[P_Z0B]
    z0t_base = par[P_Z0T]
    rho2 = par[P_RHO2]
    wmem = par[P_WMEM]
    h0 = par[P_H0]
    hmin = par[P_HMIN]
    am = par[P_AM]
    invmass = par[P_INVMASS]
    zeta2 = par[P_ZETA2]
    wref = par[P_WREF]
    invtref = par[P_INVTREF]
    ksm = par[P_KSM]
    pole = par[P_POLE]
    rbeak = par[P_RBEAK]
    rlung = par[P_RLUNG]
    src = par[P_SRC]
    rdc = par[P_RDC]
    gain = par[P_GAIN]
    nv = int(par[P_NV])
    block = int(par[P_BLOCK])
    holdn = int(par[P_HOLDN])
    dlyt = par[P_DLYT]
    os_ = int(par[P_OS])

    blow = -1
    one_m_pole = 1.0 - pole

    for i in range(n):
        if ist[IS_COUNT] % block == 0:
            ok = (math.isfinite(sc[SC_XL]) and math.isfinite(sc[SC_VL])
                  and math.isfinite(sc[SC_XR]) and math.isfinite(sc[SC_VR])
                  and math.isfinite(sc[SC_LP]) and math.isfinite(sc[SC_DCY])
                  and math.isfinite(sc[SC_UL]) and math.isfinite(sc[SC_UR]))
            if not ok:
                for j in range(SC_SIZE):
                    sc[j] = 0.0
                for j in range(capt):
                    tf[j] = 0.0
                    tb[j] = 0.0
                for j in range(capb):
                    bfl[j] = 0.0
                    bbl[j] = 0.0
                    bfr[j] = 0.0
                    bbr[j] = 0.0
                ist[IS_DOLD] = ist[IS_DNEW]
                ist[IS_XPOS] = block
                ist[IS_HOLD] = holdn
                if blow < 0:
                    blow = ist[IS_COUNT]
            # geometry: re-derive the trachea delay from the smoothed scale
            d_target = int(math.floor(dlyt * sc[SC_LSS] + 0.5))
            if d_target < 1:
                d_target = 1
            d_target *= os_
            if d_target != ist[IS_DNEW]:
                ist[IS_DOLD] = ist[IS_DNEW]
                ist[IS_DNEW] = d_target
                ist[IS_XPOS] = 0

        # control smoothing (one pole toward targets)
        sc[SC_PLS] += ksm * (targ[0] - sc[SC_PLS])
        sc[SC_TLS] += ksm * (targ[1] - sc[SC_TLS])
        sc[SC_TRS] += ksm * (targ[2] - sc[SC_TRS])
        sc[SC_LSS] += ksm * (targ[3] - sc[SC_LSS])
        sc[SC_RSS] += ksm * (targ[4] - sc[SC_RSS])

        w = ist[IS_W]
        # arriving waves (reads happen before writes: transit = delay)
        if ist[IS_XPOS] < block:
            g = (ist[IS_XPOS] + 1.0) / block
            do = ist[IS_DOLD]
            dn = ist[IS_DNEW]
            tfa = (1.0 - g) * tf[(w - do) % capt] + g * tf[(w - dn) % capt]
            tba = (1.0 - g) * tb[(w - do) % capt] + g * tb[(w - dn) % capt]
            ist[IS_XPOS] += 1
        else:
            dn = ist[IS_DNEW]
            tfa = tf[(w - dn) % capt]
            tba = tb[(w - dn) % capt]
        fbl = bfl[(w - db) % capb]
        bbal = bbl[(w - db) % capb]
        fbr = bfr[(w - db) % capb]
        bbar = bbr[(w - db) % capb]

        if len(tba_trace) > 0:
            tba_trace[i] = tba

        rs = sc[SC_RSS]
        z0t = z0t_base / (rs * rs)
        z = z0b + z0t

        hl = h0 + sc[SC_XL]
        if hl < hmin:
            hl = hmin
        ul = 0.0
        ur = 0.0
        if clamp_membrane == 0:
            if nv == 1:
                a2l = (wmem * hl) * (wmem * hl) * rho2
                ul = _solve_flow(2.0 * fbl - tba, a2l, z)
            else:
                hr = h0 + sc[SC_XR]
                if hr < hmin:
                    hr = hmin
                a2l = (wmem * hl) * (wmem * hl) * rho2
                a2r = (wmem * hr) * (wmem * hr) * rho2
                ul = sc[SC_UL]
                ur = sc[SC_UR]
                for _ in range(4):
                    ul = _solve_flow(2.0 * fbl - tba - z0t * ur, a2l, z)
                    ur = _solve_flow(2.0 * fbr - tba - z0t * ul, a2r, z)
        utot = ul + ur
        p1 = tba + z0t * utot
        p0l = 2.0 * fbl - z0b * ul
        p0r = 2.0 * fbr - z0b * ur

        if clamp_membrane == 0:
            wl = wref * math.sqrt(sc[SC_TLS] * invtref)
            fl = am * (0.5 * (p0l + p1) - abs(p0l - p1))
            accl = -zeta2 * wl * sc[SC_VL] - wl * wl * sc[SC_XL] + fl * invmass
            sc[SC_VL] += dt * accl
            sc[SC_XL] += dt * sc[SC_VL]
            if nv == 2:
                wr = wref * math.sqrt(sc[SC_TRS] * invtref)
                fr = am * (0.5 * (p0r + p1) - abs(p0r - p1))
                accr = (-zeta2 * wr * sc[SC_VR] - wr * wr * sc[SC_XR]
                        + fr * invmass)
                sc[SC_VR] += dt * accr
                sc[SC_XR] += dt * sc[SC_VR]

        # beak: one-pole low pass, reflection -rbeak, radiation (1 - rbeak)
        sc[SC_LP] += one_m_pole * (tfa - sc[SC_LP])
        yraw = (1.0 - rbeak) * sc[SC_LP]
        dcy = yraw - sc[SC_DCX] + rdc * sc[SC_DCY]
        sc[SC_DCX] = yraw
        sc[SC_DCY] = dcy
        y = dcy * gain
        if y > 1.0:
            y = 1.0
        elif y < -1.0:
            y = -1.0
        if ist[IS_HOLD] > 0:
            ist[IS_HOLD] -= 1
            y = 0.0
        out[i] = y

        # writes
        wi_t = w % capt
        wi_b = w % capb
        bbl[wi_b] = fbl - z0b * ul
        bfl[wi_b] = rlung * bbal + src * sc[SC_PLS]
        if nv == 2:
            bbr[wi_b] = fbr - z0b * ur
            bfr[wi_b] = rlung * bbar + src * sc[SC_PLS]
        tf[wi_t] = z0t * utot
        tb[wi_t] = -rbeak * sc[SC_LP]

        sc[SC_UL] = ul
        sc[SC_UR] = ur
        sc[SC_P0L] = p0l
        sc[SC_P0R] = p0r
        sc[SC_P1] = p1

        ist[IS_W] = w + 1
        ist[IS_COUNT] += 1

    return blow


if _HAVE_NUMBA:
    _compiled_loop = _njit(cache=True)(syrinx_loop)
else:
    _compiled_loop = syrinx_loop


def get_kernel():
    """The njit-compiled loop, or the interpreted one if numba is missing."""
    return _compiled_loop


def kernel_is_compiled() -> bool:
    return _HAVE_NUMBA
