import numpy as np
import pytest

from meshadapt import BarrierError, build_structured_mesh
from meshadapt.functionals import (
    FunctionalSpec,
    balancing_P,
    discrete_energy,
    eval_hr,
    eval_huang,
    eval_winslow,
)
from meshadapt.metric import MetricField

from helpers import fd_grad_wrt_J, fd_scalar, perturbed_mesh, random_jacobian, random_spd

HUANG = FunctionalSpec("huang")
HR = FunctionalSpec("hr")


# -- closed-form unit values ---------------------------------------------------


def test_winslow_identity():
    out = eval_winslow(np.eye(2), 1.0, np.eye(2))
    assert out.G == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(out.dG_dJ, np.eye(2), atol=1e-12)
    assert out.dG_ddetJ == 0.0


def test_winslow_diagonal():
    out = eval_winslow(np.diag([2.0, 1.0]), 2.0, np.eye(2))
    assert out.G == pytest.approx(2.5, abs=1e-12)
    np.testing.assert_allclose(out.dG_dJ, np.diag([2.0, 1.0]), atol=1e-12)


def test_winslow_scalar_metric():
    out = eval_winslow(np.eye(2), 1.0, 4.0 * np.eye(2))
    assert out.G == pytest.approx(0.25, abs=1e-12)
    np.testing.assert_allclose(out.dG_dJ, 0.25 * np.eye(2), atol=1e-12)


def test_winslow_singular_metric_raises():
    with pytest.raises(np.linalg.LinAlgError):
        eval_winslow(np.eye(2), 1.0, np.diag([1.0, 0.0]))


def test_huang_identity():
    out = eval_huang(np.eye(2), 1.0, np.eye(2), HUANG)
    assert out.G == pytest.approx(8.0 / 3.0, abs=1e-12)
    np.testing.assert_allclose(out.dG_dJ, (8.0 / 3.0) * np.eye(2), atol=1e-12)
    assert out.dG_ddetJ == pytest.approx(8.0 / 3.0, abs=1e-12)


def test_huang_harmonic_map_limit():
    # theta = 1/2, d*p = 2: the volume term drops and G is the harmonic energy
    spec = FunctionalSpec("huang", p=1.0, theta=0.5)
    rng = np.random.default_rng(91)
    for _ in range(10):
        J = random_jacobian(rng, 2)
        M = random_spd(rng, 2)
        out = eval_huang(J, np.linalg.det(J), M, spec)
        explicit = 0.5 * np.sqrt(np.linalg.det(M)) * np.trace(
            J @ np.linalg.inv(M) @ J.T
        )
        assert out.G == pytest.approx(explicit, rel=1e-12)


def test_huang_negative_detJ_noninteger_p():
    spec = FunctionalSpec("huang", p=1.5)
    with pytest.raises(ValueError):
        eval_huang(np.diag([1.0, -1.0]), -1.0, np.eye(2), spec)


def test_hr_identity():
    out = eval_hr(np.eye(2), 1.0, np.eye(2), HR, sigma=1.0)
    assert out.G == pytest.approx(4.1, abs=1e-12)
    np.testing.assert_allclose(out.dG_dJ, np.zeros((2, 2)), atol=1e-12)
    assert out.dG_ddetJ == pytest.approx(16.0 / 3.0 + 8.0 / 3.0 - 0.1, abs=1e-12)


def test_hr_barrier_blows_up_as_detJ_vanishes():
    g = [
        eval_hr(np.diag([eps, 1.0]), eps, np.eye(2), HR, sigma=1.0).G
        for eps in (1e-2, 1e-4, 1e-6)
    ]
    assert g[0] < g[1] < g[2]
    assert g[2] > 1e5


def test_hr_rejects_nonpositive_detJ():
    with pytest.raises(BarrierError) as err:
        eval_hr(np.diag([-1.0, 1.0]), -1.0, np.eye(2), HR, sigma=1.0)
    assert err.value.elements == (0,)


def test_spec_validation_warnings():
    with pytest.warns(UserWarning):
        FunctionalSpec("huang", theta=0.9).validate(2)
    with pytest.warns(UserWarning):
        FunctionalSpec("hr", thetas=(0.5, 0.6, 1.0, 0.1)).validate(2)
    FunctionalSpec("huang").validate(2)  # defaults are in range
    FunctionalSpec("hr").validate(3)
    with pytest.raises(ValueError):
        FunctionalSpec("brackbill")


# -- balancing function ---------------------------------------------------------


def test_balancing_P_values():
    assert balancing_P(FunctionalSpec("winslow"), 4.0 * np.eye(2)) == pytest.approx(4.0)
    assert balancing_P(FunctionalSpec("winslow"), np.eye(2)) == pytest.approx(1.0)
    assert balancing_P(HUANG, 4.0 * np.eye(2)) == pytest.approx(4.0)
    assert balancing_P(HR, 9.0 * np.eye(2)) == pytest.approx(81.0 ** 0.5)


# -- finite-difference oracle ----------------------------------------------------


def _evaluator(spec, M, sigma):
    if spec.kind == "winslow":
        return lambda J, detJ: eval_winslow(J, detJ, M)
    if spec.kind == "huang":
        return lambda J, detJ: eval_huang(J, detJ, M, spec)
    return lambda J, detJ: eval_hr(J, detJ, M, spec, sigma)


@pytest.mark.parametrize("kind", ["winslow", "huang", "hr"])
@pytest.mark.parametrize("d", [2, 3])
def test_derivatives_match_finite_differences(kind, d):
    spec = FunctionalSpec(kind)
    rng = np.random.default_rng(101 + d)
    for _ in range(100):
        J = random_jacobian(rng, d)
        detJ = float(np.linalg.det(J))
        M = random_spd(rng, d)
        sigma = rng.uniform(0.5, 2.0)
        ev = _evaluator(spec, M, sigma)
        out = ev(J, detJ)

        fd_J = fd_grad_wrt_J(lambda Jp: ev(Jp, detJ).G, J)
        np.testing.assert_allclose(out.dG_dJ, fd_J.T, rtol=1e-5, atol=1e-8)

        fd_det = fd_scalar(lambda s: ev(J, s).G, detJ)
        assert out.dG_ddetJ == pytest.approx(fd_det, rel=1e-5, abs=1e-8)


# -- discrete energy --------------------------------------------------------------


def identity_metric(mesh, scale=1.0):
    tensors = np.broadcast_to(
        scale * np.eye(mesh.dim), (mesh.n_vertices, mesh.dim, mesh.dim)
    ).copy()
    from meshadapt.metric import metric_sigma

    return MetricField(tensors, alpha=1.0, sigma=metric_sigma(mesh, tensors))


@pytest.mark.parametrize("dim", [2, 3])
def test_energy_identity_configuration(dim):
    mesh = build_structured_mesh(dim, 3)
    e = discrete_energy(mesh, mesh, identity_metric(mesh), FunctionalSpec("winslow"))
    assert e == pytest.approx(dim / 2.0, rel=1e-12)


def test_winslow_energy_scales_inversely_with_metric():
    phys = perturbed_mesh(2, 4, seed=111)
    comp = perturbed_mesh(2, 4, seed=112)
    spec = FunctionalSpec("winslow")
    e1 = discrete_energy(phys, comp, identity_metric(phys, 1.0), spec)
    e10 = discrete_energy(phys, comp, identity_metric(phys, 10.0), spec)
    assert e10 == pytest.approx(e1 / 10.0, rel=1e-12)


def test_energy_propagates_barrier_error():
    phys = build_structured_mesh(2, 3)
    bad = phys.vertices.copy()
    k = np.flatnonzero(phys.boundary_kind == 0)[0]
    bad[k] += 0.5
    comp = phys.with_vertices(bad)
    with pytest.raises(BarrierError):
        discrete_energy(phys, comp, identity_metric(phys), HR)
