import numpy as np
import pytest

from fiberpair.coupling import (CouplingGridError, build_coupling_tensor,
                                effective_area_m2, quartic_overlap,
                                radial_quartic_integral)
from fiberpair.modes import expand_orientations, solve_modes
from fiberpair.profiles import builtin_profile

SMF = builtin_profile("smf28")


@pytest.fixture(scope="module")
def smf_modes_695():
    return expand_orientations(solve_modes(SMF, 695e-9))


@pytest.fixture(scope="module")
def tensor(smf_modes_695):
    return build_coupling_tensor(smf_modes_695, SMF.core_radius_m)


def brute_force_polar_quadrature(labels, grid, n_phi=64):
    """Direct 2D quadrature on an (r, phi) product grid, no separability
    assumed in the integrand and no boundary corrections; the fields come
    from an independent eigensolve on the supplied grid. The phi grid is
    exact for the trigonometric content (harmonics up to 4*l_max)."""
    fine = expand_orientations(solve_modes(SMF, 695e-9, grid))
    by_label = {m.label: m for m in fine}
    modes = [by_label[lab] for lab in labels]
    r = modes[0].r_grid
    h_r = r[1] - r[0]
    phi = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False)
    K = len(modes)
    out = np.zeros((K, K, K, K))
    for lo in range(0, len(r), 8192):  # chunked to bound memory
        sl = slice(lo, lo + 8192)
        fields = []
        for mo in modes:
            f_r = mo.radial_field[sl]
            if mo.l == 0:
                f2d = np.repeat(f_r[:, None], n_phi, axis=1) / np.sqrt(2 * np.pi)
            else:
                trig = np.sin(mo.l * phi) if mo.orientation == "b" else np.cos(mo.l * phi)
                f2d = f_r[:, None] * trig[None, :] / np.sqrt(np.pi)
            fields.append(f2d)
        F = np.stack(fields)
        w = (r[sl] * h_r)[:, None] * (2 * np.pi / n_phi)
        out += np.einsum("krp,lrp,mrp,nrp,rp->klmn", F, F, F, F,
                         np.broadcast_to(w, F.shape[1:]), optimize=True)
    return out


def test_tensor_matches_brute_force_2d_quadrature():
    # eigensolver fields converge as O(h^2), so the 1e-6 comparison needs a
    # well-resolved radial grid on the production side and 4x that for the
    # brute-force reference
    from fiberpair.modes import SolverGrid

    build_grid = SolverGrid(points_per_radius=18432, r_max_factor=6.0)
    modes = expand_orientations(solve_modes(SMF, 695e-9, build_grid))
    tensor = build_coupling_tensor(modes, SMF.core_radius_m)
    oracle_grid = SolverGrid(points_per_radius=4 * 18432, r_max_factor=6.0)
    want = brute_force_polar_quadrature([m.label for m in modes], oracle_grid)
    got = tensor.physical()
    scale = np.max(np.abs(want))
    assert np.max(np.abs(got - want)) <= 1e-6 * scale


def test_single_mode_element_is_inverse_effective_area():
    lp01 = solve_modes(SMF, 695e-9)[0]
    s0000 = quartic_overlap(lp01, lp01, lp01, lp01)
    assert s0000 > 0
    a_eff = 1.0 / s0000
    # few-mode silica core at 695 nm: effective area in the tens of um^2
    assert 1e-11 < a_eff < 6e-11
    assert effective_area_m2(lp01) == pytest.approx(a_eff)
    # independent radial formula for the l = 0 self-overlap (plain midpoint
    # sum, so it agrees only to the quadrature-scheme difference)
    r, f = lp01.r_grid, lp01.radial_field
    h = r[1] - r[0]
    direct = np.sum(f**4 * r) * h / (2 * np.pi)
    assert s0000 == pytest.approx(direct, rel=1e-5)


def test_parity_forbidden_elements_vanish(tensor):
    s = tensor.s
    i01, i11a = tensor.index("LP01"), tensor.index("LP11a")
    i11b = tensor.index("LP11b")
    peak = np.max(np.abs(s))
    # three even modes with one LP11: integrand odd in phi
    assert abs(s[i01, i01, i01, i11a]) < 1e-12 * peak
    assert abs(s[i01, i01, i01, i11b]) < 1e-12 * peak
    # cross-orientation pair against an even pump
    assert abs(s[i01, i01, i11a, i11b]) < 1e-12 * peak


def test_permutation_symmetries(tensor):
    s = tensor.s
    assert np.allclose(s, np.swapaxes(s, 0, 3), rtol=0, atol=1e-15)  # k <-> n
    assert np.allclose(s, np.swapaxes(s, 1, 2), rtol=0, atol=1e-15)  # l <-> m


def test_dimensionless_bound(tensor):
    assert np.max(np.abs(tensor.s)) <= 1.0


def test_coarse_grid_rejected(smf_modes_695):
    # a 3-core-radii window sampled with very few points cannot hold the norm
    with pytest.raises(CouplingGridError, match="refine the transverse grid"):
        build_coupling_tensor(smf_modes_695, SMF.core_radius_m, grid_points=12)
    with pytest.raises(CouplingGridError, match="3 core radii"):
        build_coupling_tensor(smf_modes_695, SMF.core_radius_m, half_width_factor=2.0)


def test_duplicate_labels_rejected(smf_modes_695):
    with pytest.raises(CouplingGridError, match="duplicate"):
        build_coupling_tensor(smf_modes_695 + smf_modes_695[:1], SMF.core_radius_m)


def test_unresolved_orientation_rejected():
    bare = solve_modes(SMF, 695e-9)
    with pytest.raises(CouplingGridError, match="orientation"):
        build_coupling_tensor(bare, SMF.core_radius_m)


def test_modes_must_share_radial_grid(smf_modes_695):
    from fiberpair.modes import SolverGrid
    other = expand_orientations(solve_modes(SMF, 695e-9, SolverGrid(points_per_radius=240)))
    with pytest.raises(CouplingGridError, match="radial solver grid"):
        radial_quartic_integral((smf_modes_695[0], other[0], other[0], other[0]))
