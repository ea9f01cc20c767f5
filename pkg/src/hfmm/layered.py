"""Heterogeneous multipole-to-local translation for the scattered field.

The scattered part of the layered-media kernel is not translation
invariant, so its M2L operator A depends on the source-image/target
geometry (horizontal offset dx and interface height dy = y_t + y_s).
A is Toeplitz in the expansion orders, A_{p,m} = A(m - p), and each
entry is a Sommerfeld integral evaluated on the propagating/evanescent
split with fixed quadrature rules.  Near the interface the line-image
tail is translated separately (operator B with cutoff C).

Entries are cached in a table store keyed by (level, source y-index,
offset), since boxes at the same height and offset share the operator
exactly (the kernel is invariant under horizontal translation).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import greens
from .expansions import LocalExpansion, MultipoleExpansion, apply_translation
from .greens import (MediaConfig, Point2, QuadratureConvergenceError,
                     reflectance, spectral_breakpoints)
from .quadrature import SommerfeldRules, gauss_laguerre_generalized, gauss_legendre

__all__ = [
    "TranslationGeometry",
    "NearFieldSplit",
    "TableStore",
    "propagating_rule",
    "compute_A",
    "compute_B_tail",
    "m2l_heterogeneous",
    "precompute_tables",
    "save_tables",
    "load_tables",
]

_I_POWERS = np.array([1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j])


@dataclass(frozen=True)
class TranslationGeometry:
    """Geometry of one heterogeneous translation.

    dx is the target-center x minus the source-image-center x; dy is
    y_target_center + y_source_center (both measured from the
    interface).  level and offset_key identify the table slot the
    geometry came from; they are carried for keying only.
    """

    dx: float
    dy: float
    level: int = -1
    offset_key: tuple = (0, 0)

    def __post_init__(self):
        if self.dy <= 0:
            raise ValueError("heterogeneous translation requires dy > 0")


@dataclass(frozen=True)
class NearFieldSplit:
    """Near-interface handling for one source-box/target-box pair.

    cutoff is the arclength C where the line image is cut: [0, C] is
    integrated pairwise (near-field part I, together with the point
    image), [C, inf) is translated spectrally by the tail entries.
    cutoff == 0 means the full operator A applies and tail_entries
    covers the whole scattered field.
    """

    cutoff: float
    tail_entries: np.ndarray


def propagating_rule(media: MediaConfig, count: int):
    """Nodes/weights on [0, pi] for the propagating spectral integral.

    Plain Gauss-Legendre for smooth reflectance; for three-layer media
    the range is split at the branch-point kinks of sigma_1 and each
    segment gets a cosine-mapped rule of `count` nodes, preserving
    spectral accuracy.
    """
    pts = spectral_breakpoints(media, "propagating", np.pi)
    if not pts:
        r = gauss_legendre(count, 0.0, np.pi)
        return r.nodes, r.weights
    edges = [0.0] + pts + [np.pi]
    base = gauss_legendre(count, 0.0, 1.0)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        h = b - a
        nodes.append(a + 0.5 * h * (1.0 - np.cos(np.pi * base.nodes)))
        weights.append(0.5 * h * np.pi * np.sin(np.pi * base.nodes) * base.weights)
    return np.concatenate(nodes), np.concatenate(weights)


def _singularity_scale(media):
    """Distance from the evanescent contour to the nearest spectral singularity.

    Two-layer media have the reflectance pole at t = i*alpha and the
    branch point at t = i*k; three-layer media have branch points at
    t = i*sqrt(k1^2 - kj^2) for each slower layer.
    """
    k1 = media.k1
    scales = [k1]
    if media.variant == "two-layer":
        if media.alpha > 0.0:
            scales.append(media.alpha)
    elif media.variant == "three-layer":
        for kj in (media.k2, media.k3):
            if kj < k1:
                scales.append(float(np.sqrt(k1 * k1 - kj * kj)))
    return min(scales)


def _evan_entries_adaptive(media, dx, dy_eff, P, r_evan, tol=1e-12):
    """Evanescent entry integrals by adaptive geometric-panel Gauss-Legendre.

    Used when dy_eff is too small for the Laguerre rule to resolve the
    spectral structure near the origin.  The exponents of z^nu and the
    decay e^{-t dy} are combined before exponentiation, so intermediate
    factors never overflow even when the entries themselves are huge.
    Returns the integral without the (-i)^nu/(i pi) prefactor.
    """
    k = media.k1
    nu = np.arange(-2 * P, 2 * P + 1)
    sign_nu = np.where(nu % 2 == 0, 1.0, -1.0)
    n2 = 2 * P

    def log_env(t):
        # magnitude envelope of the dominant z^{-|nu|} e^{-t dy} factor
        return n2 * np.log((t + np.hypot(t, k)) / k) - t * dy_eff

    tstar = max(n2 / dy_eff, k)
    target = log_env(tstar) - 45.0
    hi = 2.0 * tstar + (45.0 + n2) / dy_eff
    while log_env(hi) > target:
        hi *= 2.0
    cutoff = brentq(lambda t: log_env(t) - target, tstar, hi)

    s0 = min(max(_singularity_scale(media), 1e-3), cutoff / 2.0)
    edges = [0.0, s0]
    while edges[-1] < cutoff:
        edges.append(min(2.0 * edges[-1], cutoff))
    # sigma_1 of a faster lower layer has a sqrt kink on the contour;
    # panels must break there to keep Gauss-Legendre spectral
    kinks = spectral_breakpoints(media, "evanescent", cutoff)
    if kinks:
        edges = sorted(set(edges) | set(kinks))

    prev = None
    count = 24
    while count <= 384:
        total = np.zeros(len(nu), dtype=complex)
        mass = np.zeros(len(nu))  # L1 mass: sets the roundoff floor
        xg, wg = np.polynomial.legendre.leggauss(count)
        ug = 0.5 * (xg + 1.0)
        for a, b in zip(edges[:-1], edges[1:]):
            # cosine map clusters nodes at the panel ends, keeping the
            # rule spectral across endpoint sqrt kinks
            t = a + 0.5 * (b - a) * (1.0 - np.cos(np.pi * ug))
            w = 0.25 * (b - a) * np.pi * np.sin(np.pi * ug) * wg
            root = np.hypot(t, k)
            lnz = np.log(k) - np.log(root + t)
            base = w * r_evan(t) / root
            psi = np.exp(1j * root * dx)
            up = np.exp(np.outer(nu, lnz) - t * dy_eff)
            dn = np.exp(np.outer(-nu, lnz) - t * dy_eff)
            terms = psi * up + np.conj(psi) * sign_nu[:, None] * dn
            total += terms @ base
            mass += np.abs(terms) @ np.abs(base)
        if prev is not None:
            # entries with heavy cancellation cannot beat the noise
            # floor of the real-axis contour; allow noise at that level
            allowed = tol * np.maximum(np.abs(total), 1.0) + 5e-12 * mass
            diff = np.abs(total - prev)
            if bool(np.all(diff <= allowed)):
                return total
        prev = total
        count *= 2
    # discretization error decays exponentially under doubling, so a
    # persistent change this far below the integrand mass is noise
    if bool(np.all(diff <= 1e-10 * mass)):
        return total
    raise QuadratureConvergenceError(
        "adaptive evanescent entry integration failed to converge "
        f"(dx={dx:.3g}, dy_eff={dy_eff:.3g}, P={P})")


def _spectral_entries(media, dx, dy, P, rules, r_prop, r_evan, decay_shift=0.0):
    """Assemble the (4P+1)-vector of plane-wave split entries.

    r_prop(tau) and r_evan(t) supply the spectral factor of the operator
    being built (full reflectance for A, tail factor for B).
    decay_shift adds extra exponential decay exp(-t*shift) handled by
    rescaling the Laguerre nodes, keeping them where the integrand
    actually lives.
    """
    k = media.k1
    nu = np.arange(-2 * P, 2 * P + 1)
    i_nu = _I_POWERS[nu % 4]
    neg_i_nu = np.conj(i_nu)
    sign_nu = np.where(nu % 2 == 0, 1.0, -1.0)

    tau, w_tau = propagating_rule(media, rules.propagating.count)
    base_p = w_tau * np.exp(1j * k * (dy * np.sin(tau) - dx * np.cos(tau))) * r_prop(tau)
    prop = (i_nu / np.pi) * (np.exp(-1j * np.outer(nu, tau)) @ base_p)

    dy_eff = dy + decay_shift
    if dy_eff * _singularity_scale(media) < 2.0:
        # the Laguerre rule cannot resolve the spectral structure when
        # the decay scale 1/dy_eff dwarfs the singularity distances
        raw = _evan_entries_adaptive(media, dx, dy_eff, P, r_evan)
        return prop + (neg_i_nu / (1j * np.pi)) * raw

    lag = rules.evanescent
    scale = dy_eff
    t = lag.nodes / scale
    root = np.sqrt(t * t + k * k)
    # z = (root - t)/k computed without cancellation
    lnz = np.log(k) - np.log(root + t)
    base_e = lag.weights * r_evan(t) / (root * scale)
    if lag.a_param != 0.0:
        base_e = base_e / lag.nodes ** lag.a_param
    psi = np.exp(1j * root * dx)
    zpow = np.exp(np.outer(nu, lnz))
    term = (psi * zpow + np.conj(psi) * sign_nu[:, None] / zpow) * base_e
    evan = (neg_i_nu / (1j * np.pi)) * term.sum(axis=1)
    return prop + evan


def _doubled_rules(rules: SommerfeldRules) -> SommerfeldRules:
    return SommerfeldRules(
        propagating=gauss_legendre(2 * rules.propagating.count, 0.0, np.pi),
        evanescent=gauss_laguerre_generalized(2 * rules.evanescent.count,
                                              rules.evanescent.a_param),
    )


def _verify_doubling(entries, doubled, where):
    scale = np.maximum(np.abs(entries), 1.0)
    err = float((np.abs(entries - doubled) / scale).max())
    if err > 1e-11:
        raise QuadratureConvergenceError(
            f"{where}: node doubling changes entries by {err:.2e} (> 1e-11)")


def compute_A(geom: TranslationGeometry, media: MediaConfig, P: int,
              rules: SommerfeldRules, verify: bool = False) -> np.ndarray:
    """Heterogeneous M2L entries A(nu), nu = -2P..2P.

    The assembled operator A_{p,m} = A(m - p) maps conjugated multipole
    coefficients of a source box to the scattered-field local expansion
    at a well-separated target box.
    """
    if media.variant == "free":
        raise ValueError("heterogeneous translation undefined in free space")

    def r_prop(tau):
        return reflectance(media, -1j * media.k1 * np.sin(tau))

    def r_evan(t):
        return reflectance(media, t.astype(complex))

    entries = _spectral_entries(media, geom.dx, geom.dy, P, rules, r_prop, r_evan)
    if verify:
        doubled = _spectral_entries(media, geom.dx, geom.dy, P,
                                    _doubled_rules(rules), r_prop, r_evan)
        _verify_doubling(entries, doubled, "compute_A")
    return entries


def compute_B_tail(geom: TranslationGeometry, C: float, media: MediaConfig, P: int,
                   rules: SommerfeldRules, verify: bool = False) -> np.ndarray:
    """Tail translation entries B(nu) for the truncated line image.

    The line-image spectral factor 2i*alpha/(kappa - i*alpha) is
    replaced by its analytically integrated tail
    2i*alpha*exp((i*alpha - kappa)C)/(kappa - i*alpha); the point-image
    term is excluded (it moves to near-field part I when C > 0).
    """
    if media.variant != "two-layer":
        raise ValueError("tail translation is defined for two-layer media only")
    if C <= 0:
        raise ValueError("tail cutoff must be positive (use compute_A when C = 0)")
    k, alpha = media.k1, media.alpha
    phase_c = np.exp(1j * alpha * C)

    def r_prop(tau):
        # kappa = -i k sin(tau): 2i*alpha*e^{(i alpha - kappa)C}/(kappa - i alpha)
        return -2.0 * alpha * phase_c * np.exp(1j * k * C * np.sin(tau)) \
            / (k * np.sin(tau) + alpha)

    def r_evan(t):
        # the e^{-tC} decay is folded into the Laguerre rescale
        return 2.0j * alpha * phase_c / (t - 1j * alpha)

    entries = _spectral_entries(media, geom.dx, geom.dy, P, rules,
                                r_prop, r_evan, decay_shift=C)
    if verify:
        doubled = _spectral_entries(media, geom.dx, geom.dy, P, _doubled_rules(rules),
                                    r_prop, r_evan, decay_shift=C)
        _verify_doubling(entries, doubled, "compute_B_tail")
    return entries


def m2l_heterogeneous(exp: MultipoleExpansion, entries: np.ndarray,
                      target_center: Point2) -> LocalExpansion:
    """Apply A (or B) to a multipole expansion: beta_p = sum_m A(m-p) conj(alpha_m).

    The conjugation happens here and nowhere else; it makes the
    operator anti-linear in the coefficients (exact for real source
    strengths; drivers handling complex strengths feed the image
    coefficients through apply_translation directly).
    """
    P = exp.order
    if len(entries) != 4 * P + 1:
        raise ValueError("entry vector length must be 4P+1")
    coeffs = apply_translation(entries, np.conj(exp.coeffs), "m-p")
    return LocalExpansion(center=target_center, order=P, coeffs=coeffs, k=exp.k)


class TableStore:
    """Read-mostly cache of A entries keyed by (level, y_index, ox, oy).

    The key determines the geometry exactly: with root lower-left
    (rx0, ry0) and box width w = 2^-level,
        dy = 2*ry0 + (2*iy_s + oy + 1) * w,   dx = ox * w.
    """

    def __init__(self, media: MediaConfig, P: int, root_y0: float,
                 rules: SommerfeldRules):
        self.media = media
        self.fingerprint = media.fingerprint()
        self.P = P
        self.root_y0 = root_y0
        self.rules = rules
        self.entries = {}
        self.hits = 0
        self.misses = 0

    def geometry(self, level: int, iy_s: int, ox: int, oy: int) -> TranslationGeometry:
        w = 0.5 ** level
        dy = 2.0 * self.root_y0 + (2 * iy_s + oy + 1) * w
        return TranslationGeometry(dx=ox * w, dy=dy, level=level, offset_key=(ox, oy))

    def get(self, level: int, iy_s: int, ox: int, oy: int) -> np.ndarray:
        key = (level, iy_s, ox, oy)
        found = self.entries.get(key)
        if found is not None:
            self.hits += 1
            return found
        self.misses += 1
        entries = compute_A(self.geometry(*key), self.media, self.P, self.rules)
        self.entries[key] = entries
        return entries


def precompute_tables(tree, media: MediaConfig, P: int, rules: SommerfeldRules,
                      include_near: bool = True) -> TableStore:
    """Build every table entry the tree's interaction structure needs.

    Covers all interaction-list offsets per level plus, when
    include_near is set, the 3x3 near-block offsets used for the
    scattered field of interface-separated neighbor boxes.  Entries are
    deduplicated by key, so horizontally translated box pairs share
    storage.
    """
    store = TableStore(media, P, tree.root_xy[1], rules)
    for node in tree.nodes.values():
        for src in node.interaction_list:
            ox = node.index[0] - src.index[0]
            oy = node.index[1] - src.index[1]
            store.get(node.level, src.index[1], ox, oy)
    if include_near:
        for leaf in tree.leaves:
            for nb in leaf.neighbor_list:
                ox = leaf.index[0] - nb.index[0]
                oy = leaf.index[1] - nb.index[1]
                store.get(leaf.level, nb.index[1], ox, oy)
    return store


_MAGIC = b"HFMMTB1\x00"


def save_tables(store: TableStore, path):
    """Serialize a table store (little-endian, complex as re/im f64 pairs)."""
    fp = store.fingerprint.encode()
    levels = [k[0] for k in store.entries] or [0]
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(fp)))
        f.write(fp)
        f.write(struct.pack("<IId", store.P, max(levels), store.root_y0))
        f.write(struct.pack("<Q", len(store.entries)))
        for (level, iy, ox, oy), vals in sorted(store.entries.items()):
            f.write(struct.pack("<iqiiI", level, iy, ox, oy, len(vals)))
            f.write(np.ascontiguousarray(vals, dtype="<c16").tobytes())


def load_tables(path, media: MediaConfig, P: int, rules: SommerfeldRules) -> TableStore:
    """Load a table store; the media fingerprint and P must match."""
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("not a translation table file")
        (fplen,) = struct.unpack("<I", f.read(4))
        fp = f.read(fplen).decode()
        p_stored, _max_level, root_y0 = struct.unpack("<IId", f.read(16))
        if fp != media.fingerprint():
            raise ValueError("table cache was built for different media")
        if p_stored != P:
            raise ValueError(f"table cache was built for P={p_stored}, not P={P}")
        store = TableStore(media, P, root_y0, rules)
        (count,) = struct.unpack("<Q", f.read(8))
        for _ in range(count):
            level, iy, ox, oy, nvals = struct.unpack("<iqiiI", f.read(24))
            raw = f.read(16 * nvals)
            store.entries[(level, iy, ox, oy)] = np.frombuffer(raw, dtype="<c16").copy()
    return store
