"""Physical model of the avian syrinx.

One or two pressure-controlled membrane valves sit between bronchus
waveguides and a shared trachea waveguide. Each valve is a single
transverse-mode oscillator driven by the net pressure on the membrane;
flow through the aperture follows the quasi-static Bernoulli relation,
solved simultaneously with the wave-junction pressures each sample (they
form an algebraic loop; the closed form is a quadratic in |U|).

This is one concrete Fletcher-style realization of the
valve/waveguide structure; every coefficient that is an engineering
choice rather than physics is a named constant below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel as K
from .errors import ConfigError, TooShort

# engineering constants of the realization
BEAK_POLE = 0.6              # one-pole low-pass inside the beak reflection
LUNG_REFLECTION = -0.7       # soft (pressure-release) lung termination
DC_BLOCK_R = 0.995           # output DC blocker pole, defined at 44.1 kHz
OUTPUT_GAIN = 1.0 / 128.0    # raw Pa -> full scale; headroom for the
                             # documented stable box (peak ~76 Pa raw)
CONTROL_SMOOTH_TAU = 0.010   # s, one-pole smoothing of control targets
BLOCK = 64                   # samples between geometry re-derivations
BLOWUP_HOLD_S = 0.050        # silence hold after a numerical fault
DRIVE_AREA_FACTOR = 50.0     # default membrane drive area = 50 * width^2
OPERATING_PRESSURE = 300.0   # Pa, documented operating point (onset for the
                             # default anatomy sits between 80 and 100 Pa)
REFERENCE_RATE = 44100.0     # rate at which the filter poles are defined


@dataclass
class MembraneConfig:
    mass: float = 5e-6            # kg
    rest_gap: float = 5e-4        # m, aperture at x = 0
    width: float = 3e-3           # m
    damping_ratio: float = 0.1
    f_ref: float = 600.0          # Hz, resonance at tension = t_ref
    t_ref: float = 1.0            # N/m, reference tension
    drive_area: float | None = None   # m^2; default DRIVE_AREA_FACTOR * w^2


@dataclass
class AirConfig:
    rho: float = 1.2              # kg/m^3
    c: float = 347.0              # m/s


@dataclass
class SyrinxConfig:
    sample_rate: float = 44100.0
    n_valves: int = 1
    trachea_length: float = 0.07
    trachea_radius: float = 0.0035
    bronchus_length: float = 0.02
    bronchus_radius: float = 0.0025
    membrane: MembraneConfig = field(default_factory=MembraneConfig)
    air: AirConfig = field(default_factory=AirConfig)
    beak_reflection: float = 0.85
    h_min: float = 1e-5

    def validate(self) -> "SyrinxConfig":
        m = self.membrane
        positives = [
            ("sample_rate", self.sample_rate),
            ("trachea_length", self.trachea_length),
            ("trachea_radius", self.trachea_radius),
            ("bronchus_length", self.bronchus_length),
            ("bronchus_radius", self.bronchus_radius),
            ("membrane.mass", m.mass),
            ("membrane.rest_gap", m.rest_gap),
            ("membrane.width", m.width),
            ("membrane.f_ref", m.f_ref),
            ("membrane.t_ref", m.t_ref),
            ("air.rho", self.air.rho),
            ("air.c", self.air.c),
            ("h_min", self.h_min),
        ]
        for name, v in positives:
            if not v > 0.0:
                raise ConfigError(f"{name} must be > 0, got {v}")
        if m.drive_area is not None and not m.drive_area > 0.0:
            raise ConfigError("membrane.drive_area must be > 0 when set")
        if not 0.0 < m.damping_ratio < 1.0:
            raise ConfigError("membrane.damping_ratio must be in (0, 1)")
        if not 0.0 < self.beak_reflection < 1.0:
            raise ConfigError("beak_reflection must be in (0, 1)")
        if self.n_valves not in (1, 2):
            raise ConfigError("n_valves must be 1 or 2")
        return self


@dataclass
class SyrinxControls:
    p_lung: float = 0.0
    tension_left: float = 1.0
    tension_right: float = 1.0       # ignored when n_valves = 1
    trachea_length_scale: float = 1.0
    trachea_radius_scale: float = 1.0

    def clamped(self) -> "SyrinxControls":
        """Controls forced into their documented ranges."""
        return SyrinxControls(
            p_lung=max(0.0, self.p_lung),
            tension_left=max(1e-9, self.tension_left),
            tension_right=max(1e-9, self.tension_right),
            trachea_length_scale=min(2.0, max(0.5, self.trachea_length_scale)),
            trachea_radius_scale=min(2.0, max(0.5, self.trachea_radius_scale)),
        )


@dataclass
class ValveState:
    x: float = 0.0            # m, membrane displacement
    x_vel: float = 0.0        # m/s
    u_flow: float = 0.0       # m^3/s through the aperture
    p_bronchial: float = 0.0  # Pa at the upstream valve face
    p_tracheal: float = 0.0   # Pa at the downstream valve face


@dataclass
class Coefficients:
    dt: float
    trachea_delay: int        # samples at the running (oversampled) rate
    bronchus_delay: int
    z0_trachea: float
    z0_bronchus: float
    omega_left: float
    omega_right: float
    beak_pole: float
    drive_area: float
    smooth_k: float
    dc_block_r: float
    oversample: int
    trachea_delay_base: float  # fs_base * L / c, for live re-derivation


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def derive_coefficients(config: SyrinxConfig, controls: SyrinxControls,
                        oversample: int = 1) -> Coefficients:
    """Delays, impedances, membrane resonances for the given geometry.

    Delays are derived at the base sample rate and scaled exactly by the
    oversampling factor so a 2x run models the identical tube lengths; the
    filter poles map as pole -> pole^(dt_new/dt_ref) to hold their corners.
    """
    config.validate()
    c = controls.clamped()
    fs = config.sample_rate
    os_ = int(oversample)
    if os_ < 1:
        raise ConfigError("oversample must be >= 1")

    dly_t = _round_half_up(fs * config.trachea_length
                           * c.trachea_length_scale / config.air.c)
    dly_b = _round_half_up(fs * config.bronchus_length / config.air.c)
    if dly_t < 1:
        raise ConfigError("trachea too short: delay rounds below 1 sample")
    if dly_b < 1:
        raise ConfigError("bronchus too short: delay rounds below 1 sample")

    m = config.membrane
    omega_l = 2.0 * math.pi * m.f_ref * math.sqrt(c.tension_left / m.t_ref)
    omega_r = 2.0 * math.pi * m.f_ref * math.sqrt(c.tension_right / m.t_ref)
    rt = config.trachea_radius * c.trachea_radius_scale
    z0t = config.air.rho * config.air.c / (math.pi * rt * rt)
    rb = config.bronchus_radius
    z0b = config.air.rho * config.air.c / (math.pi * rb * rb)

    dt = 1.0 / (fs * os_)
    ratio = REFERENCE_RATE * dt  # pole exponent keeping corners rate-free
    return Coefficients(
        dt=dt,
        trachea_delay=dly_t * os_,
        bronchus_delay=dly_b * os_,
        z0_trachea=z0t,
        z0_bronchus=z0b,
        omega_left=omega_l,
        omega_right=omega_r,
        beak_pole=BEAK_POLE ** ratio,
        drive_area=(m.drive_area if m.drive_area is not None
                    else DRIVE_AREA_FACTOR * m.width * m.width),
        smooth_k=1.0 - math.exp(-dt / CONTROL_SMOOTH_TAU),
        dc_block_r=DC_BLOCK_R ** ratio,
        oversample=os_,
        trachea_delay_base=fs * config.trachea_length / config.air.c,
    )


def valve_step(v: ValveState, p_upstream_wave: float,
               p_downstream_wave: float, config: SyrinxConfig,
               coeffs: Coefficients, omega: float,
               ) -> tuple[ValveState, float]:
    """One explicit valve update, standalone.

    p_upstream_wave is the forward pressure wave arriving from the
    bronchus; p_downstream_wave the backward wave arriving from the
    trachea. Returns the new state and the injected tracheal forward
    wave (Z0_t * U). This is the hand-written reference for the valve
    arithmetic inside the sample loop.
    """
    m = config.membrane
    h = m.rest_gap + v.x
    if h < config.h_min:
        h = config.h_min
    d = 2.0 * p_upstream_wave - p_downstream_wave
    z = coeffs.z0_bronchus + coeffs.z0_trachea
    a2 = (m.width * h) * (m.width * h) * (2.0 / config.air.rho)
    b = a2 * z
    u = 0.5 * (-b + math.sqrt(b * b + 4.0 * a2 * abs(d)))
    if d < 0.0:
        u = -u
    p0 = 2.0 * p_upstream_wave - coeffs.z0_bronchus * u
    p1 = p_downstream_wave + coeffs.z0_trachea * u
    p_bern = abs(p0 - p1)
    force = coeffs.drive_area * (0.5 * (p0 + p1) - p_bern)
    acc = (-2.0 * m.damping_ratio * omega * v.x_vel
           - omega * omega * v.x + force / m.mass)
    x_vel = v.x_vel + coeffs.dt * acc
    x = v.x + coeffs.dt * x_vel
    new = ValveState(x=x, x_vel=x_vel, u_flow=u, p_bronchial=p0,
                     p_tracheal=p1)
    return new, coeffs.z0_trachea * u


def _capacities(coeffs: Coefficients) -> tuple[int, int]:
    os_ = coeffs.oversample
    max_base = _round_half_up(coeffs.trachea_delay_base * 2.0)
    capt = (max_base + 2) * os_
    capb = coeffs.bronchus_delay + 2 * os_
    return capt, capb


def _param_vector(config: SyrinxConfig, coeffs: Coefficients) -> np.ndarray:
    m = config.membrane
    capt, capb = _capacities(coeffs)
    os_ = coeffs.oversample
    par = np.zeros(K.P_SIZE)
    par[K.P_DT] = coeffs.dt
    par[K.P_CAPT] = capt
    par[K.P_CAPB] = capb
    par[K.P_DB] = coeffs.bronchus_delay
    par[K.P_Z0B] = coeffs.z0_bronchus
    # kernel divides by the smoothed radius scale squared itself
    par[K.P_Z0T] = config.air.rho * config.air.c / (
        math.pi * config.trachea_radius * config.trachea_radius)
    par[K.P_RHO2] = 2.0 / config.air.rho
    par[K.P_WMEM] = m.width
    par[K.P_H0] = m.rest_gap
    par[K.P_HMIN] = config.h_min
    par[K.P_AM] = coeffs.drive_area
    par[K.P_INVMASS] = 1.0 / m.mass
    par[K.P_ZETA2] = 2.0 * m.damping_ratio
    par[K.P_WREF] = 2.0 * math.pi * m.f_ref
    par[K.P_INVTREF] = 1.0 / m.t_ref
    par[K.P_KSM] = coeffs.smooth_k
    par[K.P_POLE] = coeffs.beak_pole
    par[K.P_RBEAK] = config.beak_reflection
    par[K.P_RLUNG] = LUNG_REFLECTION
    par[K.P_SRC] = 0.5 * (1.0 - LUNG_REFLECTION)
    par[K.P_RDC] = coeffs.dc_block_r
    par[K.P_GAIN] = OUTPUT_GAIN
    par[K.P_NV] = config.n_valves
    par[K.P_BLOCK] = BLOCK * os_
    par[K.P_HOLDN] = _round_half_up(
        BLOWUP_HOLD_S * config.sample_rate * os_)
    par[K.P_DLYT] = coeffs.trachea_delay_base
    par[K.P_OS] = os_
    return par


@dataclass
class SyrinxState:
    """Whole synthesis memory, introspectable; arrays are shared with the
    loop, so mutating them (e.g. seeding an impulse) is supported."""
    sc: np.ndarray
    ist: np.ndarray
    trachea_fwd: np.ndarray
    trachea_bwd: np.ndarray
    bronchus_fwd: list
    bronchus_bwd: list

    @property
    def write_pos(self) -> int:
        return int(self.ist[K.IS_W])

    @property
    def sample_count(self) -> int:
        return int(self.ist[K.IS_COUNT])

    @property
    def beak_filter_state(self) -> float:
        return float(self.sc[K.SC_LP])

    @property
    def smoothed_controls(self) -> SyrinxControls:
        return SyrinxControls(
            p_lung=float(self.sc[K.SC_PLS]),
            tension_left=float(self.sc[K.SC_TLS]),
            tension_right=float(self.sc[K.SC_TRS]),
            trachea_length_scale=float(self.sc[K.SC_LSS]),
            trachea_radius_scale=float(self.sc[K.SC_RSS]),
        )

    @property
    def valves(self) -> list[ValveState]:
        sc = self.sc
        out = [ValveState(x=float(sc[K.SC_XL]), x_vel=float(sc[K.SC_VL]),
                          u_flow=float(sc[K.SC_UL]),
                          p_bronchial=float(sc[K.SC_P0L]),
                          p_tracheal=float(sc[K.SC_P1]))]
        out.append(ValveState(x=float(sc[K.SC_XR]), x_vel=float(sc[K.SC_VR]),
                              u_flow=float(sc[K.SC_UR]),
                              p_bronchial=float(sc[K.SC_P0R]),
                              p_tracheal=float(sc[K.SC_P1])))
        return out


def _fresh_arrays(config: SyrinxConfig, coeffs: Coefficients):
    capt, capb = _capacities(coeffs)
    sc = np.zeros(K.SC_SIZE)
    sc[K.SC_TLS] = 1.0
    sc[K.SC_TRS] = 1.0
    sc[K.SC_LSS] = 1.0
    sc[K.SC_RSS] = 1.0
    ist = np.zeros(K.IS_SIZE, dtype=np.int64)
    ist[K.IS_DOLD] = coeffs.trachea_delay
    ist[K.IS_DNEW] = coeffs.trachea_delay
    ist[K.IS_XPOS] = BLOCK * coeffs.oversample
    tf = np.zeros(capt)
    tb = np.zeros(capt)
    bfl = np.zeros(capb)
    bbl = np.zeros(capb)
    bfr = np.zeros(capb)
    bbr = np.zeros(capb)
    return sc, ist, tf, tb, bfl, bbl, bfr, bbr


def make_reference_state(config: SyrinxConfig,
                         coeffs: Coefficients) -> SyrinxState:
    sc, ist, tf, tb, bfl, bbl, bfr, bbr = _fresh_arrays(config, coeffs)
    return SyrinxState(sc=sc, ist=ist, trachea_fwd=tf, trachea_bwd=tb,
                       bronchus_fwd=[bfl, bfr], bronchus_bwd=[bbl, bbr])


_EMPTY = np.zeros(0)


def reference_process(state: SyrinxState, config: SyrinxConfig,
                      targets: SyrinxControls, n: int,
                      clamp_membrane: bool = False,
                      trace: dict | None = None,
                      coeffs: Coefficients | None = None) -> np.ndarray:
    """Pure-interpreter execution of the sample loop (cross-check route).

    clamp_membrane freezes the membranes and disables flow, isolating the
    tube/reflection plumbing for delay diagnostics. With trace given, the
    backward trachea wave arriving at the valve is recorded per sample
    under "trachea_bwd_at_valve".
    """
    if coeffs is None:
        coeffs = derive_coefficients(config, SyrinxControls())
    par = _param_vector(config, coeffs)
    # ring capacities must describe the arrays actually passed in
    par[K.P_CAPT] = len(state.trachea_fwd)
    par[K.P_CAPB] = len(state.bronchus_fwd[0])
    t = targets.clamped()
    targ = np.array([t.p_lung, t.tension_left, t.tension_right,
                     t.trachea_length_scale, t.trachea_radius_scale])
    out = np.empty(n)
    tba_trace = np.empty(n) if trace is not None else _EMPTY
    K.syrinx_loop(n, out, state.sc, state.ist, state.trachea_fwd,
                  state.trachea_bwd, state.bronchus_fwd[0],
                  state.bronchus_bwd[0], state.bronchus_fwd[1],
                  state.bronchus_bwd[1], targ, par,
                  1 if clamp_membrane else 0, tba_trace)
    if trace is not None:
        trace["trachea_bwd_at_valve"] = tba_trace
    return out


class Synth:
    """Kernel-backed synthesizer: owns its state, renders deterministic
    float64 samples in [-1, 1]."""

    def __init__(self, config: SyrinxConfig, oversample: int = 1):
        self.config = config.validate()
        self.oversample = int(oversample)
        self.coeffs = derive_coefficients(config, SyrinxControls(),
                                          oversample=self.oversample)
        self._par = _param_vector(config, self.coeffs)
        (self._sc, self._ist, self._tf, self._tb, self._bfl, self._bbl,
         self._bfr, self._bbr) = _fresh_arrays(config, self.coeffs)
        self._kernel = K.get_kernel()
        self.blowup_events: list[tuple[int, SyrinxControls]] = []

    def reset(self):
        (self._sc, self._ist, self._tf, self._tb, self._bfl, self._bbl,
         self._bfr, self._bbr) = _fresh_arrays(self.config, self.coeffs)
        self.blowup_events.clear()

    @property
    def sample_count(self) -> int:
        return int(self._ist[K.IS_COUNT]) // self.oversample

    @property
    def smoothed_controls(self) -> SyrinxControls:
        sc = self._sc
        return SyrinxControls(
            p_lung=float(sc[K.SC_PLS]),
            tension_left=float(sc[K.SC_TLS]),
            tension_right=float(sc[K.SC_TRS]),
            trachea_length_scale=float(sc[K.SC_LSS]),
            trachea_radius_scale=float(sc[K.SC_RSS]),
        )

    def seed_state(self, x: float = 0.0, x_vel: float = 0.0, lp: float = 0.0):
        """Test hook: place the model in a bounded non-rest state."""
        self._sc[K.SC_XL] = x
        self._sc[K.SC_VL] = x_vel
        self._sc[K.SC_LP] = lp

    def inject_non_finite(self):
        """Test hook: corrupt the state to exercise the blowup policy."""
        self._sc[K.SC_XL] = math.nan

    def process_block(self, n: int, targets: SyrinxControls) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be >= 0")
        t = targets.clamped()
        targ = np.array([t.p_lung, t.tension_left, t.tension_right,
                         t.trachea_length_scale, t.trachea_radius_scale])
        os_ = self.oversample
        n_int = n * os_
        out = np.empty(n_int)
        blow = self._kernel(n_int, out, self._sc, self._ist, self._tf,
                            self._tb, self._bfl, self._bbl, self._bfr,
                            self._bbr, targ, self._par, 0, _EMPTY)
        if blow >= 0:
            self.blowup_events.append((int(blow) // os_, replace(t)))
        if os_ > 1:
            out = out.reshape(n, os_).mean(axis=1)
        return out

    def tick(self, targets: SyrinxControls) -> float:
        return float(self.process_block(1, targets)[0])


# analysis utilities

def estimate_pitch(samples, sample_rate: float) -> float | None:
    """Autocorrelation f0 estimate; None when unvoiced.

    Voiced requires a normalized autocorrelation peak >= 0.5 in the lag
    band [fs/5000, fs/50]. Among peaks within 90% of the strongest, the
    smallest lag wins (guards against octave-down picks), then parabolic
    interpolation refines the lag.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = len(x)
    if n < 4096:
        raise TooShort(f"pitch estimation needs >= 4096 samples, got {n}")
    x = x - x.mean()
    spec = np.fft.rfft(x, 2 * n)
    r = np.fft.irfft(spec * np.conj(spec))[:n]
    if r[0] <= 0.0:
        return None
    lo = max(2, int(sample_rate / 5000.0))
    hi = min(int(sample_rate / 50.0), n - 2)
    if hi <= lo + 2:
        return None
    seg = r[lo:hi] / r[0]
    interior = (seg[1:-1] > seg[:-2]) & (seg[1:-1] >= seg[2:])
    peaks = np.nonzero(interior)[0] + 1
    if len(peaks) == 0:
        return None
    best = float(seg[peaks].max())
    if best < 0.5:
        return None
    candidates = peaks[seg[peaks] >= 0.9 * best]
    k = int(candidates.min()) + lo
    y0, y1, y2 = r[k - 1], r[k], r[k + 1]
    den = y0 - 2.0 * y1 + y2
    d = 0.5 * (y0 - y2) / den if den != 0.0 else 0.0
    return float(sample_rate / (k + d))


def _render_tail(config: SyrinxConfig, p_lung: float, tension: float,
                 seconds: float, discard: float) -> tuple[np.ndarray, bool]:
    synth = Synth(config)
    n = int(round(seconds * config.sample_rate))
    out = synth.process_block(n, SyrinxControls(
        p_lung=p_lung, tension_left=tension, tension_right=tension))
    cut = int(round(discard * config.sample_rate))
    return out[cut:], bool(synth.blowup_events)


def _spectral_db_at(x: np.ndarray, sample_rate: float, freq: float) -> float:
    w = np.hanning(len(x))
    mag = np.abs(np.fft.rfft(x * w))
    b = freq * len(x) / sample_rate
    i = int(round(b))
    lo, hi = max(0, i - 1), min(len(mag) - 1, i + 1)
    m = float(mag[lo:hi + 1].max())
    return 20.0 * math.log10(m + 1e-300)


def classify_regime(samples: np.ndarray, sample_rate: float) -> str:
    """silent / periodic / period-doubled / aperiodic, per the documented
    thresholds (silent: RMS < 1e-4; doubled: subharmonic within 3 dB)."""
    rms = float(np.sqrt(np.mean(samples ** 2)))
    if rms < 1e-4:
        return "silent"
    f0 = estimate_pitch(samples, sample_rate)
    if f0 is None:
        return "aperiodic"
    main_db = _spectral_db_at(samples, sample_rate, f0)
    half_db = _spectral_db_at(samples, sample_rate, 0.5 * f0)
    if half_db >= main_db - 3.0:
        return "period-doubled"
    return "periodic"


def stability_scan(config: SyrinxConfig, pressures, tensions,
                   seconds: float = 1.0, discard: float = 0.5,
                   ) -> tuple[list[str], list[bool]]:
    """Render each (pressure, tension) cell and classify its regime.

    Returns labels and blowup flags, row-major over pressures x tensions;
    cells that trip the blowup policy are labeled aperiodic and flagged.
    """
    if len(pressures) == 0 or len(tensions) == 0:
        raise ValueError("grids must be non-empty")
    labels: list[str] = []
    flags: list[bool] = []
    for p in pressures:
        for t in tensions:
            tail, blew = _render_tail(config, float(p), float(t),
                                      seconds, discard)
            if blew:
                labels.append("aperiodic")
                flags.append(True)
            else:
                labels.append(classify_regime(tail, config.sample_rate))
                flags.append(False)
    return labels, flags


def find_onset(config: SyrinxConfig, tension: float = 1.0,
               lo: float = 0.0, hi: float = OPERATING_PRESSURE,
               iterations: int = 24, seconds: float = 0.7) -> float:
    """Bisection for the lung pressure where oscillation starts.

    Oscillating means the RMS of the final quarter second exceeds 1e-3.
    The engine is deterministic, so repeated runs agree exactly.
    """
    def oscillates(p: float) -> bool:
        tail, blew = _render_tail(config, p, tension, seconds,
                                  seconds - 0.25)
        if blew:
            return True
        return float(np.sqrt(np.mean(tail ** 2))) >= 1e-3

    if oscillates(lo):
        return lo
    if not oscillates(hi):
        raise ValueError(f"no oscillation at p_lung = {hi}; widen the bracket")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if oscillates(mid):
            hi = mid
        else:
            lo = mid
    return hi
