from dataclasses import replace

import numpy as np
import pytest

from stagfem import levelset as lsm
from stagfem.assembly import ProblemData
from stagfem.driver import (EXACT_LEVEL, ExactSolution, ProblemSpec, SlabFailure, convergence_study,
                            diameter_points, domain_integral, domain_measure, error_norms, first_contact_slab,
                            fit_rate, manufactured_solution, project_initial, run, square_hole_problem,
                            two_disk_problem)
from stagfem.mesh import TimeSlabbing, build_mesh
from stagfem.spaces import interpolate_space

from conftest import Slab, disk_mesh


def constant_spec(c=2.5, n_slabs=3, **kw):
    const = lambda x, t: c + 0 * x[:, 0]
    return ProblemSpec(disk_mesh(8), lsm.moving_square_complement(), TimeSlabbing.uniform(n_slabs / 8, n_slabs),
                       1, 1, ProblemData(g_D=const), u0=const, **kw)


def linear_spec():
    u = lambda x, t: 1.0 + 2.0 * x[:, 0] - x[:, 1] + 3.0 * t
    data = ProblemData(f=lambda x, t: 3.0 + 0 * x[:, 0], g_D=u)
    exact = ExactSolution(u, lambda x, t: np.tile([2.0, -1.0], (len(x), 1)),
                          lambda x, t: np.zeros((len(x), 2, 2)))
    spec = ProblemSpec(disk_mesh(8), lsm.moving_disk_complement(), TimeSlabbing.uniform(0.375, 3),
                       1, 1, data, u0=u)
    return spec, exact


def test_project_initial_examples(disk_slab):
    space, geom = disk_slab.space, disk_slab.geom
    const = project_initial(space, geom, lambda x, t: 3.0 + 0 * x[:, 0])
    assert np.allclose(const.values, 3.0, atol=1e-12)
    fun = interpolate_space(space, lambda x, t: 1.0 + x[:, 0] * x[:, 1] - 2 * x[:, 1], 0.0)
    back = project_initial(space, geom, lambda x, t: fun(x))
    assert np.allclose(back.values, fun.values, atol=1e-12)


def test_project_initial_sign_on_two_disks():
    spec = two_disk_problem(nx=24, ny=49, n_slabs=30)
    s = Slab(spec.mesh, spec.levelset, spec.slabbing.slab(1), n_samples=spec.samples)
    u0 = project_initial(s.space, s.geom, spec.u0)
    assert abs(domain_integral(s.space, s.geom, u0, 0.0)) <= 1e-12 * domain_measure(s.geom, 0.0)


def test_constant_solution_is_preserved():
    res = run(constant_spec())
    assert len(res.slabs) == 3
    for rec in res.slabs:
        assert np.allclose(rec.solution.coeffs, 2.5, atol=1e-10)
        assert rec.residual <= 1e-10


def test_consecutive_slabs_share_traces():
    res = run(constant_spec(c=1.0))
    assert res.slabs[0].prev is res.initial
    for a, b in zip(res.slabs, res.slabs[1:]):
        assert np.array_equal(b.prev.values, a.trace(a.space.slab[1]).values)


def test_error_norms_vanish_for_discrete_solution():
    spec, exact = linear_spec()
    err = error_norms(run(spec), exact)
    assert err["accumulated_dg"] <= 1e-9 and err["l2_final"] <= 1e-10


def test_error_norms_constant_offset_closed_form():
    spec = constant_spec(c=1.0, n_slabs=2)
    res = run(spec)
    d = 0.5
    off = ExactSolution(lambda x, t: 1.0 + d + 0 * x[:, 0], lambda x, t: np.zeros((len(x), 2)),
                        lambda x, t: np.zeros((len(x), 2, 2)))
    err = error_norms(res, off, c_mu=1.0)
    last = res.slabs[-1]
    tN = last.space.slab[1]
    l2 = d ** 2 * domain_measure(last.geom, tN)
    beta = spec.data.beta(1, spec.mesh.hmax)
    bnd = 0.0
    for rec in res.slabs:
        ts, ws = rec.geom.time_rule(5)
        for t, w in zip(ts, ws):
            cells = rec.space.cls.active_cells
            length = rec.geom.interface(t, 4, cells).total + rec.geom.boundary(t, 4, cells).total
            bnd += w * beta * d ** 2 * length
    assert err["l2_final"] == pytest.approx(np.sqrt(l2), rel=1e-12)
    assert err["jumps"] <= 1e-10
    assert err["accumulated_dg"] ** 2 == pytest.approx(l2 + bnd, rel=1e-9)


def test_error_norms_need_derivatives():
    res = run(constant_spec(n_slabs=1))
    with pytest.raises(ValueError):
        error_norms(res, ExactSolution(lambda x, t: 0 * x[:, 0], None, None))


def test_manufactured_smoke_run():
    spec, exact = square_hole_problem(3, 1, 1)
    res = run(spec)
    assert len(res.slabs) == 8
    err = error_norms(res, exact)
    assert np.isfinite(err["accumulated_dg"]) and 0 < err["accumulated_dg"] < 1.0
    assert max(r.residual for r in res.slabs) <= 1e-10


def test_manufactured_error_decreases_at_rate_one():
    tab = convergence_study([3, 4], 1, 1)
    assert not tab.exact
    assert 0.75 <= tab.dg_rate <= 1.5


def test_exactly_reproduced_solution_flagged():
    u = lambda x, t: 1.0 + x[:, 0] + 0 * t
    exact = ExactSolution(u, lambda x, t: np.tile([1.0, 0.0], (len(x), 1)),
                          lambda x, t: np.zeros((len(x), 2, 2)))
    tab = convergence_study([2, 3], 1, 1, exact=exact, f=lambda x, t: 0 * x[:, 0], t_end=0.5)
    assert tab.exact and np.isnan(tab.dg_rate)
    assert max(tab.dg_error) < EXACT_LEVEL


def test_fit_rate():
    h = np.array([0.5, 0.25, 0.125])
    assert fit_rate(h, 3 * h ** 2) == pytest.approx(2.0)
    assert np.isnan(fit_rate(h, [1.0, 0.0, 1.0]))


def test_manufactured_solution_satisfies_pde(rng):
    mu = 0.7
    exact, f = manufactured_solution(mu)
    x = rng.uniform(0, 1, (10, 2))
    t, e = 0.3, 1e-5
    ut = (exact.u(x, t + e) - exact.u(x, t - e)) / (2 * e)
    lap = np.trace(exact.hess(x, t), axis1=1, axis2=2)
    assert np.allclose(ut - mu * lap, f(x, t), rtol=1e-7)
    g = exact.grad(x, t)
    gx = (exact.u(x + [e, 0], t) - exact.u(x - [e, 0], t)) / (2 * e)
    assert np.allclose(g[:, 0], gx, rtol=1e-7)


def test_causality():
    ls = lsm.moving_disk_complement()
    t_cut = 0.25
    late = lsm.FunctionLevelSet(lambda x, t: ls.value(x, t) - 0.3 * np.maximum(t - t_cut, 0.0) ** 2,
                                lambda x, t: ls.dt(x, t) - 0.6 * np.maximum(t - t_cut, 0.0))
    a = run(replace(constant_spec(n_slabs=4), levelset=ls))
    b = run(replace(constant_spec(n_slabs=4), levelset=late))
    for ra, rb in zip(a.slabs[:2], b.slabs[:2]):
        assert np.array_equal(ra.solution.coeffs, rb.solution.coeffs)


def test_slab_failure_reports_index():
    mesh = build_mesh([(0, 1), (0, 1)], (4, 4))
    # the domain leaves the box during the third slab
    ls = lsm.half_plane(offset=0.9, speed=-1.0)
    spec = ProblemSpec(mesh, ls, TimeSlabbing.uniform(1.0, 4), 1, 1, ProblemData(), u0=lambda x, t: 0 * x[:, 0])
    with pytest.raises(SlabFailure) as info:
        run(spec)
    assert info.value.n >= 2


def test_two_disk_run_completes():
    spec = two_disk_problem()
    res = run(spec, keep=False)
    assert len(res.slabs) == 1 and res.slabs[-1].n == 60
    assert first_contact_slab(spec) is not None
    pts = diameter_points(0.0)
    assert np.allclose(pts[:, 0], 0.0) and np.all(pts[:, 1] > 0.25)
