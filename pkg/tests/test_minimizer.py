"""Energy, gradient, descent loop, and stationarity diagnostics."""

import numpy as np
import pytest

from defectoscope.elastic import PowerModulus, TabulatedModulus
from defectoscope.fields import GridSpec, generate, perturb, smooth_random
from defectoscope.manifolds import (BUILTIN_TARGETS, norm_tree, retract,
                                    tangent_project)
from defectoscope.minimizer import (MinimizeOptions, PenalizedOptions,
                                    discrete_energy, energy_gradient,
                                    minimize, minimize_penalized,
                                    stationarity_residual)

RP2 = BUILTIN_TARGETS["RP2"]
S2 = BUILTIN_TARGETS["S2"]
MOD = PowerModulus(p=1.5, b=1.0)


def test_energy_nonnegative_and_zero_on_constants():
    g = GridSpec.cube(10, dims=3, shape="ball")
    f = generate("constant", g, RP2)
    assert discrete_energy(f, MOD) == pytest.approx(0.0, abs=1e-14)
    f2 = generate("random", g, RP2, seed=1)
    assert discrete_energy(f2, MOD) > 0.0


def test_energy_scale_invariance_of_vortex():
    # E is an integral, so refinement only shifts it by a discretization
    # error; near the vortex core that error decays sublinearly in h, hence
    # the loose tolerance.
    vals = []
    for n in (32, 64):
        g = GridSpec.cube(n, dims=2, shape="ball")
        f = generate("vortex2d", g, S2)
        vals.append(discrete_energy(f, PowerModulus(p=1.5, b=0.0)))
    assert vals[0] == pytest.approx(vals[1], rel=0.1)


def test_gradient_matches_directional_derivative():
    # energy_gradient returns the tangent gradient on free nodes, so the
    # probe must walk along retracted tangent directions: compare
    # (E(retract(u, s w)) - E(u)) / s against <grad, w>, normalized by
    # |grad| |w| so near-orthogonal draws do not inflate the ratio.
    g = GridSpec.cube(10, dims=2)
    f = generate("random", g, S2, seed=3)
    grad, e0 = energy_gradient(f, MOD)
    assert e0 == pytest.approx(discrete_energy(f, MOD), rel=1e-12)
    gnorm = float(np.sqrt(np.sum(grad * grad)))
    rng = np.random.default_rng(4)
    s = 1e-6
    for _ in range(20):
        w = rng.standard_normal(f.values.shape)
        w = tangent_project(f.values, w)
        w[~f.free] = 0.0
        fp = f.with_values(retract(f.values, s * w))
        fd = (discrete_energy(fp, MOD) - e0) / s
        dg = float(np.sum(grad * w))
        wnorm = float(np.sqrt(np.sum(w * w)))
        assert abs(fd - dg) <= 1e-5 * gnorm * wnorm


def test_gradient_vanishes_outside_free_nodes():
    g = GridSpec.cube(10, dims=3, shape="ball")
    f = generate("random", g, RP2, seed=5)
    grad, _ = energy_gradient(f, MOD)
    assert np.all(grad[~f.free] == 0.0)


def test_minimize_decreases_energy_monotonically():
    g = GridSpec.cube(12, dims=2)
    f = generate("random", g, S2, seed=6)
    res = minimize(f, MOD, MinimizeOptions(max_iters=60))
    energies = [row[1] for row in res.trace]
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))
    assert res.energy <= energies[0]
    # boundary bits preserved exactly
    assert np.array_equal(res.field.values[f.boundary],
                          f.values[f.boundary])
    assert np.allclose(norm_tree(res.field.values), 1.0, atol=1e-12)


def test_minimize_converges_on_easy_problem():
    # perturbed constant data relaxes back to (numerically) zero energy;
    # grad_tol below ~1e-7 is unreachable here because the energy hits
    # exact 0.0 and the line search can no longer resolve a decrease
    g = GridSpec.cube(10, dims=2)
    f = generate("constant", g, S2)
    f = perturb(f, 0.05, seed=7)
    res = minimize(f, MOD, MinimizeOptions(max_iters=500, grad_tol=1e-7))
    assert res.status == "converged"
    assert res.energy == pytest.approx(0.0, abs=1e-12)


def test_minimize_requires_boundary_and_admissible_modulus():
    g = GridSpec.cube(10, dims=2)
    f = generate("random", g, S2, seed=8)
    tab = TabulatedModulus(1.5, lambda t: (t * t + 1) ** 0.75 - 1)
    with pytest.raises(ValueError):
        minimize(f, tab)  # unchecked tabulated modulus


def test_minimize_iteration_cap_reports_unconverged():
    g = GridSpec.cube(12, dims=2)
    f = generate("random", g, S2, seed=9)
    res = minimize(f, MOD, MinimizeOptions(max_iters=3))
    assert res.status == "unconverged"
    assert res.iterations == 3


def test_options_validation():
    with pytest.raises(ValueError):
        minimize(generate("random", GridSpec.cube(8, dims=2), S2), MOD,
                 MinimizeOptions(armijo_c=1.5))
    with pytest.raises(ValueError):
        PenalizedOptions(epsilon=-0.1).validate()


def test_minimize_penalized_tracks_constraint():
    g = GridSpec.cube(10, dims=2)
    f = generate("disclination", g, RP2)
    res = minimize_penalized(f, MOD, PenalizedOptions(
        max_iters=150, epsilon=0.3))
    assert res.q_values is not None
    assert res.penalty_energy >= 0.0
    # projected output is unit-norm and canonical
    assert np.allclose(norm_tree(res.field.values), 1.0, atol=1e-12)
    energies = [row[1] for row in res.trace]
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_penalized_energy_below_constrained():
    # The penalized objective lives on the 6-component tensor embedding,
    # so the comparable "constrained" value is the penalized objective at
    # the embedded constrained minimizer (penalty exactly zero there):
    # relaxing the constraint can only lower that infimum.
    g = GridSpec.cube(10, dims=2)
    f = generate("disclination", g, RP2)
    hard = minimize(f, MOD, MinimizeOptions(max_iters=400, grad_tol=1e-6))
    assert hard.status == "converged"
    soft = minimize_penalized(f, MOD, PenalizedOptions(
        max_iters=400, grad_tol=1e-6, epsilon=0.25))
    assert soft.status == "converged"
    # trace row 0 evaluates the objective at the embedded input field
    probe = minimize_penalized(hard.field, MOD, PenalizedOptions(
        max_iters=1, epsilon=0.25))
    embedded_hard = probe.trace[0][1]
    assert soft.energy <= embedded_hard + 1e-9


def test_stationarity_residual_decreases_for_minimizer():
    # smooth data so descent reaches the asymptotic regime; white noise
    # stalls in kinks of the nonsmooth cell energy with a large residual
    g = GridSpec.cube(12, dims=2)
    f = smooth_random(g, S2, seed=10)
    before = stationarity_residual(f, MOD)
    res = minimize(f, MOD, MinimizeOptions(max_iters=3000, grad_tol=1e-8))
    after = stationarity_residual(res.field, MOD)
    assert after[0] < 0.05 * before[0]


def test_scale_aware_defaults_resolve():
    opts = MinimizeOptions()
    g = GridSpec.cube(16, dims=2)
    f = generate("random", g, S2, seed=11)
    res = minimize(f, MOD, MinimizeOptions(max_iters=5))
    assert res.iterations == 5  # explicit cap wins over the default
    assert opts.max_iters is None  # dataclass default untouched
