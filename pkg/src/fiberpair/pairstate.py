"""Two-photon modal state built from the enumerated mixing processes.

Each process contributes an amplitude proportional to the overlap tensor
element with two pump indices, S_(signal, pump, pump, idler); the vector
is then normalized. Residual phase mismatch is ignored by default (the
leading-order perturbative amplitude); a sinc(delta_beta L / 2) weight
can be switched on for sensitivity studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coupling import CouplingTensor
from .modes import parse_mode_label
from .phasematch import FwmProcess


class PairStateError(ValueError):
    pass


@dataclass
class TwoPhotonState:
    """Normalized modal superposition of one signal/idler photon pair."""

    basis: list[tuple[str, str]]        # (signal_mode, idler_mode) labels
    amplitudes: np.ndarray              # complex, sum |a|^2 = 1
    lambda_s_m: float
    lambda_i_m: float

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if len(self.basis) != len(self.amplitudes):
            raise PairStateError("basis and amplitude lengths differ")
        if len(self.basis) == 0:
            raise PairStateError("empty state")
        norm = np.sum(np.abs(self.amplitudes) ** 2)
        if abs(norm - 1.0) > 1e-9:
            raise PairStateError(f"state not normalized: sum |a|^2 = {norm}")

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_file(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# lambda_s_nm={self.lambda_s_m * 1e9:.4f} "
                     f"lambda_i_nm={self.lambda_i_m * 1e9:.4f}\n")
            fh.write("signal_mode,idler_mode,probability,amplitude_re,amplitude_im\n")
            for (s, i), a in zip(self.basis, self.amplitudes):
                fh.write(f"{s},{i},{abs(a) ** 2:.9f},{a.real:.9f},{a.imag:.9f}\n")

    @classmethod
    def from_file(cls, path) -> "TwoPhotonState":
        lam_s = lam_i = None
        basis, amps = [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("#"):
                    for tok in line[1:].split():
                        if tok.startswith("lambda_s_nm="):
                            lam_s = float(tok.split("=")[1]) * 1e-9
                        elif tok.startswith("lambda_i_nm="):
                            lam_i = float(tok.split("=")[1]) * 1e-9
                    continue
                if not line or line.startswith("signal_mode"):
                    continue
                s, i, _, re, im = line.split(",")
                basis.append((s, i))
                amps.append(complex(float(re), float(im)))
        if lam_s is None or lam_i is None:
            raise PairStateError(f"{path}: missing wavelength header")
        return cls(basis, np.array(amps), lam_s, lam_i)


def equal_weight_state(basis: list[tuple[str, str]], lambda_s_m: float,
                       lambda_i_m: float) -> TwoPhotonState:
    n = len(basis)
    return TwoPhotonState(basis, np.full(n, 1.0 / np.sqrt(n), dtype=complex),
                          lambda_s_m, lambda_i_m)


def _merge_key(signal: str, idler: str) -> tuple[str, str]:
    """Collapse degenerate orientation-diagonal pairs to bare labels."""
    ls, ms, os_ = parse_mode_label(signal)
    li, mi, oi = parse_mode_label(idler)
    if ls >= 1 and li >= 1 and os_ == oi and os_ in ("a", "b"):
        return (f"LP{ls}{ms}", f"LP{li}{mi}")
    return (signal, idler)


def build_state(processes: list[FwmProcess], tensor: CouplingTensor,
                pump_mode: str, merge_orientations: bool = False,
                sinc_weight_length_m: float | None = None) -> TwoPhotonState:
    """State amplitudes from the nonlinear overlap of each process.

    The raw amplitude of process (s, i) is the tensor element with index
    convention (k, l, m, n) = (signal, pump, pump, idler). Orientation
    pairs like (LP11a, LP11a)/(LP11b, LP11b) are degenerate in every
    observable downstream of the sorter; ``merge_orientations`` combines
    them into a single bare-label term (probabilities add).
    ``sinc_weight_length_m`` applies sinc(delta_beta L / 2) to each raw
    amplitude.
    """
    if not processes:
        raise PairStateError("no processes supplied")
    lam_s = processes[0].lambda_s_m
    lam_i = processes[0].lambda_i_m
    pump_label = pump_mode
    if parse_mode_label(pump_mode)[0] >= 1 and not pump_mode[-1] in "ab":
        pump_label = pump_mode + "a"

    terms: dict[tuple[str, str], float] = {}
    for p in processes:
        if abs(p.lambda_s_m - lam_s) > 1e-12 or abs(p.lambda_i_m - lam_i) > 1e-12:
            raise PairStateError("processes must share one (lambda_s, lambda_i) channel")
        amp = tensor.element(p.signal_mode, pump_label, pump_label, p.idler_mode)
        if sinc_weight_length_m is not None:
            amp *= np.sinc(p.delta_beta * sinc_weight_length_m / (2.0 * np.pi))
        key = _merge_key(p.signal_mode, p.idler_mode) if merge_orientations \
            else (p.signal_mode, p.idler_mode)
        if merge_orientations:
            # orientation partners add in probability (orthogonal final states)
            terms[key] = np.hypot(terms.get(key, 0.0), amp)
        else:
            terms[key] = terms.get(key, 0.0) + amp

    basis = sorted(terms)
    raw = np.array([terms[b] for b in basis], dtype=complex)
    norm = np.linalg.norm(raw)
    if norm == 0.0:
        raise PairStateError(
            "all process amplitudes vanish (parity-forbidden set); no state"
        )
    return TwoPhotonState(basis, raw / norm, lam_s, lam_i)


def schmidt_summary(state: TwoPhotonState) -> dict:
    """Per-pair probabilities and the participation-ratio dimension."""
    p = state.probabilities
    return {
        "probabilities": {basis: float(prob) for basis, prob in zip(state.basis, p)},
        "effective_dimension": float(1.0 / np.sum(p**2)),
    }
