import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

import oracles
from fracorlicz.domain import Ball, GridFunction, build_grid, build_kernel
from fracorlicz.energy import (
    Form,
    Nonlinearity,
    Problem,
    RegimeError,
    SolverConfig,
    bump_function,
    canonical_problem,
    eval_H,
    eval_I,
    eval_J,
    grad_I,
    lambda1_estimate,
    log_quotient,
    minimize,
    seed_nontrivial,
    stationarity_residual,
)
from fracorlicz.nfunction import NFunction
from fracorlicz.operator import OperatorContext
from fracorlicz.orlicz import gagliardo_seminorm

# converged energy of the canonical 200-node problem (first verified run)
CANONICAL_ENERGY = -0.00014201897689242486

NONLINEARITIES = [
    Nonlinearity.pure_power(1.0, 1.5),
    Nonlinearity.pure_power(0.7, 2.5, theta1=1.0),
    Nonlinearity.shifted_power(1.5, 1.0, 1.5, eps=0.5),
    Nonlinearity.custom([-10.0, -1.0, 0.0, 1.0, 10.0], [-15.0, -1.2, 0.0, 1.2, 15.0], 2.0, 1.0, 2.0),
]
nl_ids = ["pure", "pure-q2.5", "shifted", "custom"]
NFS = [NFunction.power(1.5), NFunction.power_normalized(2.0), NFunction.power(3.0),
       NFunction.power_log(2.0)]


@pytest.fixture(scope="module")
def canonical():
    ctx, nl = canonical_problem()
    return ctx, nl, minimize(ctx, nl)


@pytest.fixture(scope="module")
def small():
    gd = build_grid(1, (0.0, 2.0), 2 / 39, (0.5, 1.5), (0.75, 1.25))
    return OperatorContext(NFunction.power_normalized(2.0), build_kernel(gd, 0.5))


# -- J, H, I -----------------------------------------------------------------------


def test_J_examples(grid1d, kernel1d, random_function):
    ctx = OperatorContext(NFunction.power(3.0), kernel1d)
    assert eval_J(ctx, GridFunction.zeros(grid1d)) == 0.0
    u = random_function(grid1d)
    ref = oracles.power_gagliardo_modular(grid1d.nodes, u.values, grid1d.h, 0.5, 3.0)
    assert eval_J(ctx, u) == pytest.approx(ref, rel=1e-12)
    assert eval_J(OperatorContext(NFunction.power_log(2.0), kernel1d), u) >= 0.0


def test_H_examples(grid1d):
    nl = Nonlinearity.pure_power(2.0, 1.5)
    assert eval_H(nl, grid1d, GridFunction.zeros(grid1d)) == 0.0
    c = 0.9
    u = GridFunction(grid1d, np.where(grid1d.omega0_mask, c, 0.0))
    assert eval_H(nl, grid1d, u) == pytest.approx(2.0 / 1.5 * c**1.5 * grid1d.omega0_measure,
                                                  rel=1e-14)


@pytest.mark.parametrize("nl", NONLINEARITIES, ids=nl_ids)
def test_H_matches_quadrature_of_f(grid1d, random_function, nl):
    u = random_function(grid1d, 3.0)
    in0 = grid1d.omega0_mask[grid1d.omega_mask]
    ref = 0.0
    for t, inside in zip(u.omega_values, in0):
        ref += quad(lambda x: float(nl.f(np.array(x), inside)), 0.0, t, epsabs=1e-14,
                    epsrel=1e-13, points=[-1.0, 0.0, 1.0] if -1 < t < 1 else None, limit=200)[0]
    assert eval_H(nl, grid1d, u) == pytest.approx(ref * grid1d.h, rel=1e-10)


def test_I_examples(grid1d, kernel1d, random_function):
    ctx = OperatorContext(NFunction.power_normalized(2.0), kernel1d)
    nl = Nonlinearity.pure_power(1.0, 1.5)
    assert eval_I(ctx, nl, GridFunction.zeros(grid1d)) == 0.0
    u = random_function(grid1d)
    J = oracles.power_gagliardo_modular(grid1d.nodes, u.values, grid1d.h, 0.5, 2.0, 0.5)
    H = float(np.sum(np.abs(u.omega_values) ** 1.5) / 1.5) * grid1d.h
    assert eval_I(ctx, nl, u) == pytest.approx(J - H, rel=1e-12)


# -- gradient -------------------------------------------------------------------------


def test_gradient_vanishes_at_zero_for_q_above_2(grid1d, kernel1d):
    ctx = OperatorContext(NFunction.power_log(2.0), kernel1d)
    g = grad_I(ctx, Nonlinearity.pure_power(1.0, 2.5), GridFunction.zeros(grid1d))
    assert not np.any(g.values)


@pytest.mark.parametrize("nf", NFS, ids=lambda nf: f"{nf.kind.value}-{nf.p}")
@pytest.mark.parametrize("nl", NONLINEARITIES, ids=nl_ids)
def test_gradient_directional_consistency(grid1d, kernel1d, random_function, nf, nl):
    ctx = OperatorContext(nf, kernel1d)
    for _ in range(3):
        u, v = random_function(grid1d), random_function(grid1d)
        eps = 1e-6 * (1.0 + np.max(np.abs(u.values)))
        fd = (eval_I(ctx, nl, u + eps * v) - eval_I(ctx, nl, u - eps * v)) / (2 * eps)
        an = float(np.sum(grad_I(ctx, nl, u).values * v.values))
        assert an == pytest.approx(fd, rel=1e-5)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_gradient_power_oracle(grid2d, kernel2d, random_function, p):
    ctx = OperatorContext(NFunction.power(p), kernel2d)
    nl = Nonlinearity.pure_power(1.0, 1.5)
    u = random_function(grid2d)
    lap = oracles.power_frac_laplacian(grid2d.nodes, u.values, grid2d.h, kernel2d.s, p)
    ref = (lap[grid2d.omega_mask] - np.sign(u.omega_values) * np.abs(u.omega_values) ** 0.5) \
        * grid2d.cell_volume
    assert np.allclose(grad_I(ctx, nl, u).omega_values, ref, rtol=1e-11, atol=0)


# -- nonlinearities ---------------------------------------------------------------


def test_nonlinearity_validation():
    with pytest.raises(ValueError):
        Nonlinearity.pure_power(2.0, 1.5, theta1=1.0)  # theta2 > theta1
    with pytest.raises(ValueError):
        Nonlinearity.pure_power(1.0, 1.0)
    with pytest.raises(ValueError):
        Nonlinearity.shifted_power(1.0, 1.0, 1.5, eps=2.0)
    with pytest.raises(ValueError):  # |f| exceeds theta1 (1 + |t|^{q-1})
        Nonlinearity.custom([-1.0, 0.0, 1.0], [-5.0, 0.0, 5.0], 1.0, 1.0, 2.0)
    with pytest.raises(ValueError):  # |f| below theta2 |t|^{q-1}
        Nonlinearity.custom([-4.0, 0.0, 4.0], [-1.0, 0.0, 1.0], 1.0, 1.0, 2.0)


def test_custom_unsigned_growth_warns():
    with pytest.warns(UserWarning, match="signed"):
        Nonlinearity.custom([-4.0, 0.0, 4.0], [4.0, 0.0, -4.0], 1.0, 1.0, 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        Nonlinearity.custom([-4.0, 0.0, 4.0], [-4.0, 0.0, 4.0], 1.0, 1.0, 2.0)


@pytest.mark.parametrize("nl", NONLINEARITIES[:3], ids=nl_ids[:3])
def test_builtin_growth_conditions(nl):
    checks = nl.growth_checks()
    assert checks == {"f1": True, "f2": True, "f2_signed": True}


def test_shifted_power_regions():
    nl = Nonlinearity.shifted_power(2.0, 1.0, 1.5, eps=0.25)
    t = np.array([4.0, 4.0])
    assert np.allclose(nl.f(t, np.array([True, False])), [2.0, 2.0 * (0.25 + 2.0)])
    assert np.allclose(nl.F(t, np.array([True, False])), [8 / 1.5, 2.0 * (1.0 + 8 / 1.5)])


def test_form_names():
    assert Form.from_name("PurePower") is Form.PURE_POWER
    assert Form.from_name("shifted-power") is Form.SHIFTED_POWER
    with pytest.raises(ValueError):
        Form.from_name("cubic")


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(grad_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(armijo_c=1.5)
    with pytest.raises(ValueError):
        SolverConfig(seed_scan=(0.5, 1.0))
    assert SolverConfig().seed_scan[0] == 1.0 and len(SolverConfig().seed_scan) == 21


# -- seeding and minimization --------------------------------------------------------


def test_seed_finds_negative_energy(canonical):
    ctx, nl, _ = canonical
    bump = bump_function(ctx.gd)
    t, val = seed_nontrivial(ctx, nl, bump)
    assert val < 0 and t in SolverConfig().seed_scan
    assert eval_I(ctx, nl, t * bump) == pytest.approx(val, rel=1e-14)


def test_seed_fails_without_source(canonical):
    ctx, _, _ = canonical
    nl = Nonlinearity.pure_power(0.0, 1.5, theta1=1.0)
    assert seed_nontrivial(ctx, nl, bump_function(ctx.gd)) is None


def test_seed_rejects_bump_outside_omega0(canonical):
    ctx, nl, _ = canonical
    gd = ctx.gd
    x = gd.nodes[:, 0]
    wide = np.where(gd.omega_mask, np.clip(1 - 4 * (x - 1.0) ** 2, 0, 1), 0.0)
    with pytest.raises(ValueError, match="Omega_0"):
        seed_nontrivial(ctx, nl, GridFunction(gd, wide))
    with pytest.raises(ValueError):
        seed_nontrivial(ctx, nl, 2.0 * bump_function(gd))


def test_bump_shapes(grid2d):
    b = bump_function(grid2d)
    assert b.values.max() <= 1.0 and b.values.min() >= 0.0
    assert not np.any(b.values[~grid2d.omega0_mask])
    ball = bump_function(grid2d, Ball((0.5, 0.5), 0.1))
    assert ball.values.max() == pytest.approx(1.0)


def test_canonical_existence(canonical):
    ctx, nl, sol = canonical
    assert sol.converged and sol.nontrivial
    assert sol.energy < 0 and sol.grad_norm <= 1e-6
    assert sol.seed_t is not None
    assert sol.energy == pytest.approx(CANONICAL_ENERGY, rel=1e-6)
    assert np.all(np.diff(sol.energies) <= 0.0)
    assert eval_I(ctx, nl, sol.u) == pytest.approx(sol.energy, rel=1e-12)


def test_canonical_stationarity(canonical, rng):
    ctx, nl, sol = canonical
    gd = ctx.gd
    n_omega = int(gd.omega_mask.sum())
    for _ in range(20):
        v = GridFunction.from_omega(gd, rng.uniform(-1, 1, n_omega))
        res = stationarity_residual(ctx, nl, sol.u, v)
        assert abs(res) <= 1e-6 * np.max(np.abs(v.values)) * n_omega


def test_canonical_refinement(canonical):
    _, _, sol = canonical
    ctx, nl = canonical_problem(400)
    fine = minimize(ctx, nl)
    assert fine.converged and fine.nontrivial
    assert fine.energy <= sol.energy or abs(fine.energy - sol.energy) <= 0.05 * abs(sol.energy)


def test_coercivity_surrogate(canonical, rng):
    ctx, nl, _ = canonical
    gd = ctx.gd
    q = nl.q
    lam = oracles.first_eigenvalue_p2(gd.nodes, gd.omega_mask, gd.h, ctx.s)
    # sum |u|^q h <= |Omega|^{1 - q/2} (sum u^2 h)^{q/2} <= |Omega|^{1-q/2} lam^{-q/2} [u]^q
    C = gd.omega_measure ** (1 - q / 2) * lam ** (-q / 2)
    checked = 0
    while checked < 50:
        u = GridFunction.from_omega(gd, rng.standard_normal(gd.omega_mask.sum()) * 10.0 ** rng.uniform(-1, 2))
        norm = gagliardo_seminorm(ctx.nf, ctx.kt, u)
        if norm <= 1.0:
            continue
        assert eval_I(ctx, nl, u) >= norm**2 - nl.theta1 * C * norm**q - nl.theta1 * gd.omega_measure
        checked += 1


def test_trivial_solution_without_source(canonical):
    ctx, _, _ = canonical
    sol = minimize(ctx, Nonlinearity.pure_power(0.0, 1.5, theta1=1.0))
    assert sol.converged and not sol.nontrivial
    assert sol.energy == 0.0 and not np.any(sol.u.values)
    assert sol.seed_t is None


def test_regime_errors(small):
    with pytest.raises(RegimeError):
        minimize(small, Nonlinearity.pure_power(1.0, 2.5))
    with pytest.raises(RegimeError):
        minimize(small, Nonlinearity.pure_power(1.0, 2.0, theta1=5.0), lambda1=10.0)
    sol = minimize(small, Nonlinearity.pure_power(1.0, 2.0, theta1=1.0), lambda1=10.0)
    assert sol.converged


def test_solution_metadata(canonical):
    _, _, sol = canonical
    text = sol.metadata({"operator.s": "0.5"})
    fields = dict(line.split("=", 1) for line in text.splitlines())
    assert float(fields["energy"]) == sol.energy
    assert fields["nontrivial"] == "true" and fields["config.operator.s"] == "0.5"


def test_problem_matches_public_functions(canonical, random_function):
    ctx, nl, _ = canonical
    u = random_function(ctx.gd)
    prob = Problem(ctx, nl)
    assert prob.energy(u.omega_values) == eval_I(ctx, nl, u)
    assert np.array_equal(prob.gradient(u.omega_values), grad_I(ctx, nl, u).omega_values)


# -- lambda_1 -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def lam_small(small):
    return lambda1_estimate(small, rng=np.random.default_rng(7))


def test_lambda1_matches_eigenvalue_oracle(small, lam_small):
    gd = small.gd
    exact = oracles.first_eigenvalue_p2(gd.nodes, gd.omega_mask, gd.h, small.s)
    assert lam_small.is_upper_bound
    assert lam_small.value >= exact * (1 - 1e-9)
    assert lam_small.value == pytest.approx(exact, rel=0.02)
    assert len(lam_small.start_values) == 20


def test_lambda1_internal_consistency(small, lam_small):
    q = math.exp(log_quotient(small, lam_small.u.omega_values))
    assert q == pytest.approx(lam_small.value, rel=1e-12)
    assert lam_small.value <= min(lam_small.start_values) * (1 + 1e-12)


def test_lambda1_beats_explicit_test_function(small, lam_small):
    gd = small.gd
    x = gd.nodes[gd.omega_mask, 0]
    tent = 0.5 - np.abs(x - 1.0)
    assert lam_small.value <= math.exp(log_quotient(small, tent))


@pytest.mark.parametrize("c", [-3.0, 0.01, 250.0])
def test_quotient_scale_invariance(small, rng, c):
    x = rng.standard_normal(small.gd.omega_mask.sum())
    assert log_quotient(small, c * x) == pytest.approx(log_quotient(small, x), abs=1e-9)


def test_log_quotient_gradient(small, rng):
    x = rng.random(small.gd.omega_mask.sum()) + 0.2
    d = rng.standard_normal(x.size)
    val, g = log_quotient(small, x, with_grad=True)
    eps = 1e-6
    fd = (log_quotient(small, x + eps * d) - log_quotient(small, x - eps * d)) / (2 * eps)
    assert float(g @ d) == pytest.approx(fd, rel=1e-5)


def test_lambda1_seed_stability(small, lam_small):
    other = lambda1_estimate(small, rng=np.random.default_rng(12345), starts=5)
    assert other.value == pytest.approx(lam_small.value, rel=0.05)


def test_lambda1_initial_scaling(small):
    gd = small.gd
    x0 = np.sin(np.pi * (gd.nodes[gd.omega_mask, 0] - 0.5))
    a = lambda1_estimate(small, starts=1, initial=x0)
    b = lambda1_estimate(small, starts=1, initial=40.0 * x0)
    assert b.value == pytest.approx(a.value, rel=1e-9)


def test_lambda1_powerlog_runs(small):
    ctx = OperatorContext(NFunction.power_log(2.0), small.kt)
    est = lambda1_estimate(ctx, starts=3, max_iters=100)
    assert est.value > 0 and math.isfinite(est.value)
