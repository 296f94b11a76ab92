"""Clap / transient anchor detection: band-pass filter plus peak picking.

The band-pass is a 4th-order Butterworth realized as two biquads,
designed here from the analog prototype via the bilinear transform (see
``butter_bandpass_sos``); tests verify the coefficients against an
independently computed frequency response. The filtered signal is
reduced to a short-time energy envelope (20 ms windows, 10 ms hop) and
peaks above ``mean + k_sigma * std`` that are local maxima become
anchors; peaks closer than the minimum gap are suppressed keeping the
larger. Because the threshold is relative to the envelope's own
statistics, detection is invariant to overall gain.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from ..kernels import sosfilt
from ..media import pcm_to_float
from .contract import EvidenceItem


class ClapError(Exception):
    pass


class SampleRateTooLow(ClapError):
    pass


def butter_bandpass_sos(low_hz: float, high_hz: float, sample_rate: float) -> np.ndarray:
    """Design a 4th-order Butterworth band-pass as two second-order sections.

    Order-2 analog low-pass prototype poles are transformed to band-pass
    (each prototype pole yields a conjugate-symmetric pair), frequencies
    pre-warped, then mapped to z via the bilinear transform. Each
    section carries one zero at z=1 and one at z=-1; overall gain is
    normalized to unity at the geometric center frequency.
    """
    if not (0 < low_hz < high_hz < sample_rate / 2):
        raise ClapError(f"band ({low_hz}, {high_hz}) invalid for fs={sample_rate}")
    fs2 = 2.0 * sample_rate
    w1 = fs2 * math.tan(math.pi * low_hz / sample_rate)
    w2 = fs2 * math.tan(math.pi * high_hz / sample_rate)
    bw = w2 - w1
    w0sq = w1 * w2

    # prototype poles for N=2: exp(j*3pi/4), exp(j*5pi/4)
    proto = [cmath.exp(1j * math.pi * 3 / 4), cmath.exp(1j * math.pi * 5 / 4)]
    analog_poles = []
    for p in proto:
        pb = p * bw
        disc = cmath.sqrt(pb * pb - 4.0 * w0sq)
        analog_poles.append((pb + disc) / 2.0)
        analog_poles.append((pb - disc) / 2.0)

    digital_poles = [(fs2 + s) / (fs2 - s) for s in analog_poles]
    # group into conjugate pairs by imaginary part magnitude
    upper = sorted((p for p in digital_poles if p.imag >= 0), key=lambda p: p.real)

    sections = []
    for p in upper:
        a1 = -2.0 * p.real
        a2 = abs(p) ** 2
        sections.append([1.0, 0.0, -1.0, 1.0, a1, a2])
    sos = np.array(sections, dtype=np.float64)

    # unit gain at the band center (pre-warped analog center mapped back to z)
    wc = 2.0 * math.atan(math.sqrt(w0sq) / fs2)
    z = cmath.exp(1j * wc)
    gain = 1.0
    for b0, b1, b2, _, a1, a2 in sos:
        num = b0 + b1 / z + b2 / (z * z)
        den = 1.0 + a1 / z + a2 / (z * z)
        gain *= abs(num / den)
    sos[0, 0:3] /= gain
    return sos


def sos_frequency_response(sos: np.ndarray, freqs_hz: np.ndarray, sample_rate: float) -> np.ndarray:
    """|H(e^jw)| evaluated directly; used as the design's independent check."""
    w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / sample_rate
    z = np.exp(1j * w)
    resp = np.ones_like(z)
    for b0, b1, b2, _, a1, a2 in sos:
        resp *= (b0 + b1 / z + b2 / z**2) / (1.0 + a1 / z + a2 / z**2)
    return np.abs(resp)


def short_time_energy(x: np.ndarray, sample_rate: float, win_s: float = 0.020, hop_s: float = 0.010):
    """Mean squared energy per window; returns (energies, window center times)."""
    win = max(1, int(round(win_s * sample_rate)))
    hop = max(1, int(round(hop_s * sample_rate)))
    n = len(x)
    if n < win:
        return np.zeros(0), np.zeros(0)
    csum = np.concatenate([[0.0], np.cumsum(x * x)])
    starts = np.arange(0, n - win + 1, hop)
    energies = (csum[starts + win] - csum[starts]) / win
    centers = (starts + win / 2.0) / sample_rate
    return energies, centers


def detect_claps(
    pcm: np.ndarray,
    sample_rate: int,
    band: tuple[float, float] = (2000.0, 6000.0),
    min_gap_s: float = 0.3,
    k_sigma: float = 4.0,
    clip_id: str = "",
    view: str = "erp",
) -> list[EvidenceItem]:
    """Detect impulsive anchors in mono PCM; times are stream-relative."""
    if sample_rate < 8000:
        raise SampleRateTooLow(f"sample rate {sample_rate} < 8000")
    low, high = band
    # keep the band below Nyquist for low sample rates
    high = min(high, 0.45 * sample_rate)
    x = pcm_to_float(pcm) if pcm.dtype == np.int16 else np.asarray(pcm, dtype=np.float64)
    filtered = sosfilt(butter_bandpass_sos(low, high, sample_rate), x)
    env, centers = short_time_energy(filtered, sample_rate)
    if len(env) == 0:
        return []

    threshold = float(np.mean(env) + k_sigma * np.std(env))
    candidates = []
    for i in range(len(env)):
        e = env[i]
        if e <= threshold or e <= 0.0:
            continue
        left_ok = i == 0 or e > env[i - 1]
        right_ok = i == len(env) - 1 or e >= env[i + 1]
        if left_ok and right_ok:
            candidates.append(i)

    # min-gap suppression: strongest first, deterministic tiebreak on time
    candidates.sort(key=lambda i: (-env[i], centers[i]))
    accepted: list[int] = []
    for i in candidates:
        if all(abs(centers[i] - centers[j]) >= min_gap_s for j in accepted):
            accepted.append(i)
    accepted.sort(key=lambda i: centers[i])

    peak_env = max((env[i] for i in accepted), default=0.0)
    items = []
    for n, i in enumerate(accepted):
        t = float(centers[i])
        items.append(
            EvidenceItem(
                item_id=f"{clip_id or 'audio'}:clap_anchor:{n:03d}",
                clip_id=clip_id,
                view=view,
                cls="clap_anchor",
                t_start=t,
                t_end=t,
                confidence=float(env[i] / peak_env) if peak_env > 0 else 1.0,
                payload={"envelope_energy": float(env[i])},
                evidence_uris=[],
                suggested_action="none",
            )
        )
    return items
