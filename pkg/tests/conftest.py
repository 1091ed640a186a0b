import numpy as np
import pytest

from fiberpair.dispersion import DispersionTable, ModeDispersion
from fiberpair.modes import omega_from_lambda


def synthetic_delay_table(entries, reference="LP01"):
    """DispersionTable with prescribed group delays.

    ``entries``: {mode_label: {lambda_m: tau_s_per_m}}. Values are held
    piecewise constant in a small neighborhood of each wavelength.
    """
    modes = {}
    for label, by_lambda in entries.items():
        oms, taus = [], []
        for lam, tau in by_lambda.items():
            om = omega_from_lambda(lam)
            oms.extend([om * (1 - 2e-3), om * (1 + 2e-3)])
            taus.extend([tau, tau])
        order = np.argsort(oms)
        om_arr = np.array(oms)[order]
        tau_arr = np.array(taus)[order]
        beta = np.cumsum(np.full_like(om_arr, 5.0))  # placeholder, unused
        modes[label] = ModeDispersion(label, om_arr, beta, tau_arr,
                                      np.zeros_like(om_arr))
    return DispersionTable(modes, reference=reference)


# the sorter geometry used throughout: LP01 the reference, LP11 and LP02
# later by 0.5 and 1.5 ns/km at the signal wavelength, LP11 later by
# 0.5 ns/km at the idler wavelength, chromatic offset ~68 ns/km
NS = 1e-12  # ns/km in s/m


@pytest.fixture(scope="session")
def paper_delays():
    lam_s, lam_i = 542e-9, 968.3e-9
    return synthetic_delay_table({
        "LP01": {lam_s: 4.930e-9 + 68.4 * NS, lam_i: 4.930e-9},
        "LP11": {lam_s: 4.930e-9 + 68.9 * NS, lam_i: 4.930e-9 + 0.5 * NS},
        "LP02": {lam_s: 4.930e-9 + 69.9 * NS, lam_i: 4.930e-9},
    })
