import numpy as np
import pytest

from robinspec.errors import BasisError, ConvergenceError
from robinspec.fields import bump_basis
from robinspec.geometry import Interval, build_mesh, make_sigma
from robinspec.inversion import (BoundarySpectralData, BSDEntry, InversionParams, assemble_bsd,
                                 compare_bsd, default_eta, fit_density, patch_basis,
                                 recover_cluster_traces, recover_trace_magnitude)
from robinspec.oracle import ForwardOracle, SpectralOracle
from robinspec.spectral import ForwardModel, boundary_trace, cluster_eigenvalues


class FlatOracle(SpectralOracle):
    """Eigenvalues that ignore the impedance entirely."""

    def __init__(self, n_boundary, K):
        self.n_boundary, self.K = n_boundary, K

    def _query(self, omega):
        return np.arange(self.K, dtype=float)


def test_interval_endpoint_densities(interval_model):
    sigma = make_sigma(interval_model.bmesh, 0.0, 1.0)
    assert sigma.size == 2
    oracle = ForwardOracle(interval_model, 4)
    mag = recover_trace_magnitude(oracle, np.zeros(2), 2, bump_basis(sigma, 2))
    assert mag.rho == pytest.approx([2.0, 2.0], rel=1e-3)
    assert mag.clipped_mass == 0.0 and not mag.resolution_failure


def test_square_cosine_mode_magnitude(square_model, square_bottom):
    w0 = np.zeros(square_model.bmesh.size)
    oracle = ForwardOracle(square_model, 6)
    k = 4  # the simple (1, 1) mode, 2 pi^2
    mag = recover_trace_magnitude(oracle, w0, k, bump_basis(square_bottom, 40))
    es = square_model.eigensystem(w0, 6)
    ref = np.abs(square_bottom.restrict(boundary_trace(es, k)))
    w = square_bottom.weights
    err = np.sqrt(((mag.magnitude - ref) ** 2) @ w / (ref**2 @ w))
    assert err <= 0.02
    closed = 2.0 * np.abs(np.cos(np.pi * square_bottom.arc))
    assert np.sqrt(((mag.magnitude - closed) ** 2) @ w / (closed**2 @ w)) <= 0.02


def test_vanishing_moments_flag_resolution_failure(caplog):
    mesh, bm = build_mesh(Interval(1.0, 11))
    sigma = make_sigma(bm, 0.0, 1.0)
    mag = recover_trace_magnitude(FlatOracle(2, 4), np.zeros(2), 2, bump_basis(sigma, 2))
    assert mag.resolution_failure
    assert np.all(mag.rho == 0)
    assert "resolution failure" in caplog.text


def test_fit_density_rejects_rank_deficiency():
    C = np.ones((2, 5))
    with pytest.raises(BasisError):
        fit_density(C, np.ones(5), np.ones(2))


def test_fit_density_exact_for_nodal_basis():
    rho = np.linspace(1.0, 2.0, 7)
    w = np.full(7, 0.5)
    out, reg, resid = fit_density(np.eye(7), w, rho * w, reg=1e-14)
    assert out == pytest.approx(rho, rel=1e-10) and resid < 1e-10


def test_size_one_cluster_reduces_to_simple(interval_model):
    sigma = make_sigma(interval_model.bmesh, 0.0, 1.0)
    oracle = ForwardOracle(interval_model, 5)
    bumps = bump_basis(sigma, 2)
    cl = cluster_eigenvalues(oracle(np.zeros(2)))[2]
    rec = recover_cluster_traces(oracle, np.zeros(2), cl, np.ones(2), [0.1], bumps)
    direct = recover_trace_magnitude(oracle, np.zeros(2), 3, bumps)
    assert np.array_equal(rec.magnitudes[0].rho, direct.rho)


def test_single_step_schedule_cannot_converge(small_square):
    model = small_square
    sigma = make_sigma(model.bmesh, 0.0, 1.0)
    oracle = ForwardOracle(model, 6)
    w0 = np.zeros(model.bmesh.size)
    cl = cluster_eigenvalues(oracle(w0))[1]
    assert cl.multiplicity == 2
    with pytest.raises(ConvergenceError) as info:
        recover_cluster_traces(oracle, w0, cl, default_eta(sigma), [0.05], bump_basis(sigma, 10))
    assert len(info.value.history) == 1


def test_borg_levinson_data_on_interval():
    mesh, bm = build_mesh(Interval(1.0, 2001))
    model = ForwardModel(mesh, bm)
    sigma = make_sigma(model.bmesh, 0.0, 0.5)
    bsd = assemble_bsd(ForwardOracle(model, 8), np.zeros(2), 6, sigma)
    assert bsd.eigenvalues[1:] == pytest.approx((np.arange(1, 6) * np.pi) ** 2, rel=1e-3)
    mags = np.abs(bsd.traces()[:, 0])
    assert mags == pytest.approx([1.0] + [np.sqrt(2)] * 5, rel=1e-3)
    assert all(e.sign_ambiguous and e.status == "ok" for e in bsd.entries)


def test_empty_request(interval_model):
    sigma = make_sigma(interval_model.bmesh, 0.0, 0.5)
    oracle = ForwardOracle(interval_model, 3)
    bsd = assemble_bsd(oracle, np.zeros(2), 0, sigma)
    assert bsd.K == 0 and oracle.n_solves == 0
    assert bsd.traces().shape == (0, 1)


def test_params_round_trip():
    p = InversionParams.from_dict({"J": 12, "zero_tol": 0.02, "unrelated": 1})
    assert p.J == 12 and p.zero_tol == 0.02
    assert p.schedule()[:3] == [0.05, 0.025, 0.0125] and len(p.schedule()) == 9


def test_patch_basis_handles_single_node(interval_model):
    sigma = make_sigma(interval_model.bmesh, 0.0, 0.5)
    bb = patch_basis(sigma, 40)
    assert bb.fields.shape == (1, 2) and bb.fields[0, 0] == 1.0


@pytest.fixture
def toy_bsd():
    mesh, bm = build_mesh(Interval(1.0, 11))
    sigma = make_sigma(bm, 0.0, 1.0)
    truth = np.array([[1.0, -2.0], [0.5, 0.5]])
    vals = np.array([1.0, 4.0])

    def make(traces):
        return BoundarySpectralData(sigma, [BSDEntry(k + 1, vals[k], traces[k], traces[k] ** 2)
                                            for k in range(2)])
    return sigma, vals, truth, make


def test_compare_identity_and_sign_quotient(toy_bsd):
    sigma, vals, truth, make = toy_bsd
    for rec in (make(truth), make(-truth), make(np.array([truth[0], -truth[1]]))):
        res = compare_bsd(rec, vals, truth)
        assert res["max_trace_err"] == 0.0 and res["max_eig_abs_err"] == 0.0


def test_compare_triangle_bound(toy_bsd):
    sigma, vals, truth, make = toy_bsd
    delta = np.array([[1e-3, -2e-3], [5e-4, 0.0]])
    res = compare_bsd(make(truth + delta), vals, truth)
    w = sigma.weights
    for p, d, phi in zip(res["per_k"], delta, truth):
        assert p["trace_err"] <= np.sqrt(d**2 @ w) / np.sqrt(phi**2 @ w) + 1e-15


def test_compare_shape_mismatch(toy_bsd):
    sigma, vals, truth, make = toy_bsd
    with pytest.raises(ValueError):
        compare_bsd(make(truth), vals[:1], truth)
