"""Exact quantum-optical state engine over a truncated multimode Fock space.

States are density operators stored sparsely in the occupation-number basis:
COO triplets ``(bra_code, ket_code, amplitude)`` where a basis code packs one
4-bit occupation digit per mode into an int64.  All operations are functional
and return new states; a :class:`DensityOperator` is treated as immutable.

The ``cutoff`` attribute bounds the photon number injected per mode by the
state-preparation operations.  Interference can transiently concentrate more
photons in one mode (two photons entering both ports of a balanced splitter
bunch into a single mode); the packed encoding supports occupations up to 15,
so passive transformations stay exactly trace preserving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._kernels import coalesce, expand_branches

PRUNE_TOL = 1e-14
BITS_PER_MODE = 4
MAX_OCC = (1 << BITS_PER_MODE) - 1
MAX_MODES = 15


class FockError(ValueError):
    """Invalid request to the Fock engine (bad register, bad parameter)."""


class TruncationError(FockError):
    """State preparation would put non-negligible weight above the cutoff."""


def _digits(codes: np.ndarray, pos: int) -> np.ndarray:
    return (codes >> (BITS_PER_MODE * pos)) & MAX_OCC


def _pack(occ: Sequence[int]) -> int:
    code = 0
    for i, n in enumerate(occ):
        if not 0 <= n <= MAX_OCC:
            raise FockError(f"occupation {n} outside [0, {MAX_OCC}]")
        code |= n << (BITS_PER_MODE * i)
    return code


def _unpack(code: int, n_modes: int) -> tuple[int, ...]:
    return tuple((code >> (BITS_PER_MODE * i)) & MAX_OCC for i in range(n_modes))


def _total_photons(codes: np.ndarray, positions: Sequence[int]) -> np.ndarray:
    tot = np.zeros(codes.shape[0], dtype=np.int64)
    for p in positions:
        tot += _digits(codes, p)
    return tot


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Sparse Hermitian operator over a truncated multimode Fock register.

    Attributes:
        modes: ordered mode labels; position in the tuple is the register index.
        cutoff: max photons injected per mode by state preparation.
        bra, ket: int64 packed occupation codes, canonically sorted.
        amp: complex amplitudes, pruned below ``PRUNE_TOL``.
    """

    modes: tuple[str, ...]
    cutoff: int
    bra: np.ndarray = field(repr=False)
    ket: np.ndarray = field(repr=False)
    amp: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.modes:
            raise FockError("register must contain at least one mode")
        if len(self.modes) > MAX_MODES:
            raise FockError(f"register limited to {MAX_MODES} modes")
        if len(set(self.modes)) != len(self.modes):
            raise FockError("mode labels must be unique")
        if self.cutoff < 1 or self.cutoff > MAX_OCC:
            raise FockError(f"cutoff must be in [1, {MAX_OCC}]")

    # -- bookkeeping -------------------------------------------------------

    @property
    def n_entries(self) -> int:
        return int(self.bra.shape[0])

    def position(self, mode: str) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise FockError(f"mode {mode!r} not in register {self.modes}") from None

    def positions(self, modes: Iterable[str]) -> list[int]:
        return [self.position(m) for m in modes]

    def trace(self) -> float:
        diag = self.bra == self.ket
        return float(np.real(self.amp[diag].sum()))

    def entry(self, occ_bra: Sequence[int], occ_ket: Sequence[int]) -> complex:
        b, k = _pack(occ_bra), _pack(occ_ket)
        hit = (self.bra == b) & (self.ket == k)
        idx = np.flatnonzero(hit)
        return complex(self.amp[idx[0]]) if idx.size else 0j

    def entries(self) -> Iterable[tuple[tuple[int, ...], tuple[int, ...], complex]]:
        n = len(self.modes)
        for b, k, a in zip(self.bra, self.ket, self.amp):
            yield _unpack(int(b), n), _unpack(int(k), n), complex(a)

    def renormalized(self) -> "DensityOperator":
        t = self.trace()
        if t <= 0:
            raise FockError("cannot renormalize a zero-trace state")
        return _make(self.modes, self.cutoff, self.bra, self.ket, self.amp / t)


def _make(modes, cutoff, bra, ket, amp) -> DensityOperator:
    bra, ket, amp = coalesce(
        np.asarray(bra, dtype=np.int64),
        np.asarray(ket, dtype=np.int64),
        np.asarray(amp, dtype=np.complex128),
        PRUNE_TOL,
    )
    return DensityOperator(tuple(modes), cutoff, bra, ket, amp)


# ---------------------------------------------------------------------------
# state construction
# ---------------------------------------------------------------------------

def vacuum(modes: Sequence[str], cutoff: int) -> DensityOperator:
    """Pure |0...0><0...0| over the given register."""
    if len(modes) == 0:
        raise FockError("register must contain at least one mode")
    if cutoff < 1:
        raise FockError("cutoff must be >= 1")
    return _make(modes, cutoff, [0], [0], [1.0 + 0j])


def pure_state(modes: Sequence[str], cutoff: int,
               kets: Mapping[Sequence[int], complex],
               normalize: bool = True) -> DensityOperator:
    """Density operator |psi><psi| from a sparse ket description."""
    occs = list(kets.keys())
    amps = np.array([kets[o] for o in occs], dtype=np.complex128)
    if normalize:
        norm = math.sqrt(float(np.sum(np.abs(amps) ** 2)))
        if norm == 0:
            raise FockError("ket has zero norm")
        amps = amps / norm
    codes = np.array([_pack(o) for o in occs], dtype=np.int64)
    bra = np.repeat(codes, codes.shape[0])
    ket = np.tile(codes, codes.shape[0])
    amp = np.repeat(amps, amps.shape[0]) * np.tile(np.conj(amps), amps.shape[0])
    return _make(modes, cutoff, bra, ket, amp)


def _compose_local(state: DensityOperator, positions: Sequence[int],
                   local_kets: Mapping[tuple[int, ...], complex]) -> DensityOperator:
    """Tensor a pure local factor into modes that are currently in vacuum."""
    for p in positions:
        if np.any(_digits(state.bra, p) != 0) or np.any(_digits(state.ket, p) != 0):
            raise FockError(
                f"mode {state.modes[p]!r} must be in vacuum before injection")
    codes = []
    amps = []
    for occ, a in local_kets.items():
        c = 0
        for p, n in zip(positions, occ):
            c |= n << (BITS_PER_MODE * p)
        codes.append(c)
        amps.append(a)
    codes = np.array(codes, dtype=np.int64)
    amps = np.array(amps, dtype=np.complex128)
    m = codes.shape[0]
    bra = np.repeat((state.bra[:, None] | codes[None, :]).ravel(), m)
    ket = np.repeat(state.ket, m * m) | np.tile(codes, m * state.n_entries)
    amp = np.repeat(state.amp, m * m) * np.tile(
        (amps[:, None] * np.conj(amps)[None, :]).ravel(), state.n_entries)
    return _make(state.modes, state.cutoff, bra, ket, amp)


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    """Truncated, renormalized coherent-state amplitudes alpha^n/sqrt(n!)."""
    n = np.arange(cutoff + 1)
    log_fact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, cutoff + 1)))))
    amps = np.exp(n * np.log(complex(alpha)) - 0.5 * log_fact) if alpha != 0 else \
        np.concatenate(([1.0 + 0j], np.zeros(cutoff, dtype=np.complex128)))
    amps = np.asarray(amps, dtype=np.complex128)
    return amps / math.sqrt(float(np.sum(np.abs(amps) ** 2)))


def poisson_tail_above(mean: float, cutoff: int) -> float:
    """P(n > cutoff) for a Poisson distribution with the given mean."""
    if mean == 0:
        return 0.0
    term = math.exp(-mean)
    total = term
    for k in range(1, cutoff + 1):
        term *= mean / k
        total += term
    return max(0.0, 1.0 - total)


def inject_coherent(state: DensityOperator, mode: str, amplitude: complex,
                    max_truncation_error: float = 1e-4) -> DensityOperator:
    """Put a truncated coherent state into a vacuum mode.

    Raises:
        TruncationError: Poisson weight above the cutoff exceeds
            ``max_truncation_error`` (the injected state would be unsound).
    """
    mean = abs(amplitude) ** 2
    tail = poisson_tail_above(mean, state.cutoff)
    if tail > max_truncation_error:
        raise TruncationError(
            f"coherent injection |amp|^2={mean:.4g} leaves {tail:.3g} beyond "
            f"cutoff {state.cutoff} (limit {max_truncation_error:g})")
    if amplitude == 0:
        return state
    p = state.position(mode)
    amps = coherent_amplitudes(amplitude, state.cutoff)
    kets = {(n,): amps[n] for n in range(state.cutoff + 1)}
    return _compose_local(state, [p], kets)


def inject_pair_source(state: DensityOperator, mode_a: str, mode_b: str,
                       pair_amplitude: float,
                       max_truncation_error: float = 1e-4) -> DensityOperator:
    """Two-mode squeezed vacuum sum_n lam^n |n,n> truncated at the cutoff."""
    if mode_a == mode_b:
        raise FockError("pair source requires two distinct modes")
    lam = float(pair_amplitude)
    if not 0 <= lam < 1:
        raise FockError("pair_amplitude must lie in [0, 1)")
    tail = lam ** (2 * (state.cutoff + 1))  # geometric weight above cutoff
    if tail > max_truncation_error:
        raise TruncationError(
            f"pair amplitude {lam} leaves {tail:.3g} beyond cutoff {state.cutoff}")
    if lam == 0:
        return state
    pa, pb = state.position(mode_a), state.position(mode_b)
    amps = np.array([lam ** n for n in range(state.cutoff + 1)], dtype=np.complex128)
    amps /= math.sqrt(float(np.sum(np.abs(amps) ** 2)))
    kets = {(n, n): amps[n] for n in range(state.cutoff + 1)}
    return _compose_local(state, [pa, pb], kets)


# ---------------------------------------------------------------------------
# passive transformations
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _unitary_images(u_key, occ: tuple[int, ...]):
    """Images of |occ> under a k-mode linear-optical unitary (column map).

    The creation operator of input mode j maps to sum_i U[i, j] b_i^dagger.
    Returns (occupations array, amplitudes array).
    """
    u = np.array(u_key, dtype=np.complex128)
    k = u.shape[0]
    poly: dict[tuple[int, ...], complex] = {(0,) * k: 1.0 + 0j}
    for j in range(k):
        for _ in range(occ[j]):
            nxt: dict[tuple[int, ...], complex] = {}
            for mono, c in poly.items():
                for i in range(k):
                    if u[i, j] == 0:
                        continue
                    m2 = list(mono)
                    m2[i] += 1
                    key = tuple(m2)
                    nxt[key] = nxt.get(key, 0j) + c * u[i, j]
            poly = nxt
    norm = math.sqrt(math.prod(math.factorial(n) for n in occ))
    outs = []
    amps = []
    for m, c in poly.items():
        a = c * math.sqrt(math.prod(math.factorial(x) for x in m)) / norm
        if abs(a) > PRUNE_TOL:
            outs.append(m)
            amps.append(a)
    return tuple(outs), np.array(amps, dtype=np.complex128)


def _local_codes(codes: np.ndarray, positions: Sequence[int]) -> np.ndarray:
    loc = np.zeros(codes.shape[0], dtype=np.int64)
    for i, p in enumerate(positions):
        loc |= _digits(codes, p) << (BITS_PER_MODE * i)
    return loc


def _branch_table(u: np.ndarray, local_values: np.ndarray,
                  positions: Sequence[int], conj: bool):
    """Flat branch table (start, stop, bits, amps) for each local input code."""
    u_key = tuple(map(tuple, u))
    starts = np.zeros(local_values.shape[0], dtype=np.int64)
    stops = np.zeros(local_values.shape[0], dtype=np.int64)
    bits_all = []
    amps_all = []
    k = len(positions)
    n = 0
    for r, lv in enumerate(local_values):
        occ = tuple((int(lv) >> (BITS_PER_MODE * i)) & MAX_OCC for i in range(k))
        outs, amps = _unitary_images(u_key, occ)
        starts[r] = n
        for m, a in zip(outs, amps):
            bits = 0
            for i, p in enumerate(positions):
                bits |= m[i] << (BITS_PER_MODE * p)
            bits_all.append(bits)
            amps_all.append(np.conj(a) if conj else a)
            n += 1
        stops[r] = n
    return (starts, stops, np.array(bits_all, dtype=np.int64),
            np.array(amps_all, dtype=np.complex128))


def _apply_side(state, positions, u, side: str) -> DensityOperator:
    mask = 0
    for p in positions:
        mask |= MAX_OCC << (BITS_PER_MODE * p)
    codes = state.bra if side == "bra" else state.ket
    other = state.ket if side == "bra" else state.bra
    loc = _local_codes(codes, positions)
    uniq, row = np.unique(loc, return_inverse=True)
    start, stop, bits, amps = _branch_table(u, uniq, positions, conj=(side == "ket"))
    keep_bits = codes & ~np.int64(mask)
    out_codes, out_other, out_amp = expand_branches(
        codes, other, state.amp, keep_bits, row.astype(np.int64),
        start, stop, bits, amps)
    if side == "bra":
        return _make(state.modes, state.cutoff, out_codes, out_other, out_amp)
    return _make(state.modes, state.cutoff, out_other, out_codes, out_amp)


def apply_mode_unitary(state: DensityOperator, modes: Sequence[str],
                       u: np.ndarray) -> DensityOperator:
    """Apply a k-mode linear-optical unitary (column convention: input mode j
    maps to sum_i u[i, j] times output mode i)."""
    u = np.asarray(u, dtype=np.complex128)
    k = len(modes)
    if u.shape != (k, k):
        raise FockError(f"unitary shape {u.shape} does not match {k} modes")
    if not np.allclose(u.conj().T @ u, np.eye(k), atol=1e-12):
        raise FockError("matrix is not unitary")
    positions = state.positions(modes)
    out = _apply_side(state, positions, u, "bra")
    return _apply_side(out, positions, u, "ket")


def beam_splitter_matrix(transmissivity: float, phase: float = 0.0) -> np.ndarray:
    t = math.sqrt(transmissivity)
    r = math.sqrt(1.0 - transmissivity)
    e = complex(math.cos(phase), math.sin(phase))
    return np.array([[t, -r / e], [r * e, t]], dtype=np.complex128)


def beam_splitter(state: DensityOperator, m1: str, m2: str,
                  transmissivity: float, phase: float = 0.0) -> DensityOperator:
    """Two-mode mixing: a1 -> sqrt(T) a1 + e^{i phase} sqrt(1-T) a2, etc.

    The inverse transformation is the same splitter with ``phase + pi``.
    """
    if m1 == m2:
        raise FockError("beam splitter requires two distinct modes")
    if not 0.0 <= transmissivity <= 1.0:
        raise FockError("transmissivity must lie in [0, 1]")
    if transmissivity == 1.0:
        return state
    return apply_mode_unitary(state, [m1, m2],
                              beam_splitter_matrix(transmissivity, phase))


def phase_shift(state: DensityOperator, mode: str, theta: float) -> DensityOperator:
    """|n> gains e^{i n theta} in the given mode."""
    p = state.position(mode)
    dn = _digits(state.bra, p) - _digits(state.ket, p)
    amp = state.amp * np.exp(1j * theta * dn)
    return _make(state.modes, state.cutoff, state.bra, state.ket, amp)


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

def loss_channel(state: DensityOperator, mode: str, survival: float) -> DensityOperator:
    """Pure attenuation: beam-split with a vacuum ancilla, trace the ancilla."""
    if not 0.0 <= survival <= 1.0:
        raise FockError("survival must lie in [0, 1]")
    if survival == 1.0 or state.n_entries == 0:
        return state
    p = state.position(mode)
    nb = _digits(state.bra, p)
    nk = _digits(state.ket, p)
    shift = np.int64(1) << np.int64(BITS_PER_MODE * p)
    bras, kets, amps = [], [], []
    kmax = int(min(nb.max(initial=0), nk.max(initial=0)))
    for k in range(kmax + 1):
        sel = (nb >= k) & (nk >= k)
        if not np.any(sel):
            continue
        nb_s = nb[sel].astype(np.float64)
        nk_s = nk[sel].astype(np.float64)
        f = np.sqrt(_comb(nb_s, k) * _comb(nk_s, k)) \
            * survival ** ((nb_s + nk_s) / 2.0 - k) * (1.0 - survival) ** k
        bras.append(state.bra[sel] - k * shift)
        kets.append(state.ket[sel] - k * shift)
        amps.append(state.amp[sel] * f)
    return _make(state.modes, state.cutoff,
                 np.concatenate(bras), np.concatenate(kets), np.concatenate(amps))


def _comb(n: np.ndarray, k: int) -> np.ndarray:
    out = np.ones_like(n)
    for i in range(k):
        out *= (n - i) / (i + 1)
    return out


def dephase_number(state: DensityOperator, modes: Sequence[str],
                   strength: float) -> DensityOperator:
    """Damp coherences between total-photon-number sectors of ``modes``.

    Off-diagonal entries with photon-number difference d over the listed
    modes are multiplied by ``strength ** d``.  strength=1 is the identity,
    strength=0 fully dephases in that number observable.
    """
    if not 0.0 <= strength <= 1.0:
        raise FockError("dephasing strength must lie in [0, 1]")
    positions = state.positions(modes)
    d = np.abs(_total_photons(state.bra, positions)
               - _total_photons(state.ket, positions))
    if strength == 0.0:
        keep = d == 0
        return _make(state.modes, state.cutoff, state.bra[keep],
                     state.ket[keep], state.amp[keep])
    amp = state.amp * strength ** d
    return _make(state.modes, state.cutoff, state.bra, state.ket, amp)


# ---------------------------------------------------------------------------
# measurement and reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdDetectorParams:
    """Click/no-click detector: efficiency, dark-click probability per gate,
    dead time in ns (dead time is enforced by the protocol layer)."""

    efficiency: float = 0.9
    dark_click_probability: float = 0.0
    dead_time_ns: float = 50.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise FockError("detector efficiency must lie in [0, 1]")
        if not 0.0 <= self.dark_click_probability <= 1.0:
            raise FockError("dark click probability must lie in [0, 1]")
        if self.dead_time_ns < 0:
            raise FockError("dead time must be >= 0")


def _threshold_factors(state, positions, efficiency, dark):
    """(sqrt(E0) weights on bra, on ket) for the no-click POVM element
    E0 = (1 - dark) (1 - eta)^n over the listed modes."""
    nb = _total_photons(state.bra, positions).astype(np.float64)
    nk = _total_photons(state.ket, positions).astype(np.float64)
    base = 1.0 - efficiency
    wb = np.sqrt(1.0 - dark) * base ** (nb / 2.0)
    wk = np.sqrt(1.0 - dark) * base ** (nk / 2.0)
    return wb, wk


def threshold_split(state: DensityOperator, modes: Sequence[str] | str,
                    params: ThresholdDetectorParams):
    """POVM split for a threshold detector watching one or more modes.

    Returns ``(p_click, rho_click, rho_noclick)`` with unnormalized posterior
    states (Lueders update with the square roots of the POVM elements); their
    traces are the click/no-click probabilities.
    """
    mode_list = [modes] if isinstance(modes, str) else list(modes)
    positions = state.positions(mode_list)
    wb, wk = _threshold_factors(state, positions, params.efficiency,
                                params.dark_click_probability)
    amp0 = state.amp * wb * wk
    no_click = _make(state.modes, state.cutoff, state.bra, state.ket, amp0)
    amp1 = state.amp * np.sqrt(np.maximum(0.0, 1.0 - wb * wb)) \
        * np.sqrt(np.maximum(0.0, 1.0 - wk * wk))
    click = _make(state.modes, state.cutoff, state.bra, state.ket, amp1)
    return click.trace(), click, no_click


def measure_threshold(state: DensityOperator, modes: Sequence[str] | str,
                      params: ThresholdDetectorParams, rng_draw):
    """Sample a threshold detection; returns (clicked, normalized posterior).

    ``rng_draw`` is either a uniform variate in [0, 1) or a numpy Generator.
    """
    total = state.trace()
    if total <= 0:
        raise FockError("cannot measure a zero-trace state")
    u = rng_draw.random() if hasattr(rng_draw, "random") else float(rng_draw)
    p_click, rho_click, rho_noclick = threshold_split(state, modes, params)
    if u < p_click / total:
        return True, rho_click.renormalized()
    return False, rho_noclick.renormalized()


def partial_trace(state: DensityOperator, keep: Sequence[str]) -> DensityOperator:
    """Reduced state on the kept modes (trace preserved)."""
    keep = list(keep)
    if not keep:
        raise FockError("must keep at least one mode")
    keep_pos = state.positions(keep)
    drop_pos = [i for i in range(len(state.modes)) if i not in keep_pos]
    drop_mask = 0
    for p in drop_pos:
        drop_mask |= MAX_OCC << (BITS_PER_MODE * p)
    drop_mask = np.int64(drop_mask)
    sel = (state.bra & drop_mask) == (state.ket & drop_mask)
    bra, ket, amp = state.bra[sel], state.ket[sel], state.amp[sel]
    new_bra = np.zeros_like(bra)
    new_ket = np.zeros_like(ket)
    for new_i, p in enumerate(keep_pos):
        new_bra |= _digits(bra, p) << (BITS_PER_MODE * new_i)
        new_ket |= _digits(ket, p) << (BITS_PER_MODE * new_i)
    return _make([state.modes[p] for p in keep_pos], state.cutoff,
                 new_bra, new_ket, amp)


def extend_register(state: DensityOperator, new_modes: Sequence[str]) -> DensityOperator:
    """Append fresh vacuum modes to the register."""
    modes = state.modes + tuple(new_modes)
    return DensityOperator(modes, state.cutoff, state.bra, state.ket, state.amp)


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

def fidelity_to_pure(state: DensityOperator,
                     target: Mapping[Sequence[int], complex]) -> float:
    """<psi|rho|psi> / tr(rho) for a normalized sparse target ket."""
    total = state.trace()
    if total <= 0:
        raise FockError("zero-trace state has no fidelity")
    codes = {}
    norm = 0.0
    for occ, a in target.items():
        codes[_pack(occ)] = complex(a)
        norm += abs(a) ** 2
    if abs(norm - 1.0) > 1e-9:
        raise FockError(f"target ket norm {norm:.6f} != 1")
    val = 0j
    for b, k, a in zip(state.bra, state.ket, state.amp):
        cb = codes.get(int(b))
        ck = codes.get(int(k))
        if cb is not None and ck is not None:
            val += np.conj(cb) * a * ck
    return float(np.real(val)) / total


def photon_number_expectation(state: DensityOperator, mode: str) -> float:
    p = state.position(mode)
    diag = state.bra == state.ket
    n = _digits(state.bra[diag], p)
    return float(np.real(np.sum(state.amp[diag] * n)))


def number_diagonal(state: DensityOperator,
                    modes: Sequence[str]) -> dict[tuple[int, ...], float]:
    """Joint photon-number pmf over the listed modes (marginalizing others)."""
    positions = state.positions(modes)
    diag = state.bra == state.ket
    bra = state.bra[diag]
    amp = np.real(state.amp[diag])
    pmf: dict[tuple[int, ...], float] = {}
    for code, a in zip(bra, amp):
        occ = tuple(int((code >> (BITS_PER_MODE * p)) & MAX_OCC) for p in positions)
        pmf[occ] = pmf.get(occ, 0.0) + float(a)
    return pmf


def mix(parts: Sequence[tuple[float, DensityOperator]]) -> DensityOperator:
    """Weighted sum of operators on identical registers."""
    first = parts[0][1]
    for _, s in parts[1:]:
        if s.modes != first.modes:
            raise FockError("mix requires identical registers")
    bra = np.concatenate([s.bra for _, s in parts])
    ket = np.concatenate([s.ket for _, s in parts])
    amp = np.concatenate([w * s.amp for w, s in parts])
    return _make(first.modes, first.cutoff, bra, ket, amp)


def project_span(state: DensityOperator,
                 kets: Sequence[Sequence[int]]) -> DensityOperator:
    """Compression P rho P onto the span of the given basis occupations."""
    codes = {_pack(occ) for occ in kets}
    sel = np.array([int(b) in codes and int(k) in codes
                    for b, k in zip(state.bra, state.ket)], dtype=bool)
    return _make(state.modes, state.cutoff,
                 state.bra[sel], state.ket[sel], state.amp[sel])


def to_dense(state: DensityOperator, max_dim: int = 4096) -> np.ndarray:
    """Dense matrix over the minimal per-mode basis covering the support."""
    n_modes = len(state.modes)
    occ_max = 0
    for p in range(n_modes):
        occ_max = max(occ_max,
                      int(_digits(state.bra, p).max(initial=0)),
                      int(_digits(state.ket, p).max(initial=0)))
    base = occ_max + 1
    dim = base ** n_modes
    if dim > max_dim:
        raise FockError(f"dense dimension {dim} exceeds limit {max_dim}")
    def flat(codes):
        out = np.zeros(codes.shape[0], dtype=np.int64)
        for p in range(n_modes):
            out = out * base + _digits(codes, n_modes - 1 - p)
        return out
    rho = np.zeros((dim, dim), dtype=np.complex128)
    rho[flat(state.bra), flat(state.ket)] = state.amp
    return rho


def states_allclose(a: DensityOperator, b: DensityOperator,
                    tol: float = 1e-12) -> bool:
    if a.modes != b.modes:
        return False
    diff = mix([(1.0, a), (-1.0, b)])
    return diff.n_entries == 0 or float(np.abs(diff.amp).max()) <= tol
