import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from homog.errors import ConfigError, LawUnsuitableError, StudyInconsistencyError
from homog.field import MarginalLaw, TriadicCube, constant_field, sample_field
from homog.stats import (closed_form_abar, compute_omega, convergence_study, estimate_abar, estimate_tau,
                         harmonic_mean_error_delta, harmonic_mean_error_exact, implied_alpha, suppressive_exponents,
                         run_multiscale_study, run_scale_study, suppressive_profile, truncated_moment,
                         truncated_moment_mc)
from oracles import brute_force_omega, enumerated_harmonic_error

LAW = MarginalLaw.two_point(1, 4, 0.5)


def test_constant_law_study():
    st_ = run_scale_study(MarginalLaw.constant(3.0), 1, 4, 2, 0, 2)
    np.testing.assert_allclose(st_.abar_n, 3.0 * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(st_.se_a, 0.0, atol=1e-12)


def test_study_rejects_small_N():
    with pytest.raises(ConfigError):
        run_scale_study(LAW, 1, 1)


def test_one_dimensional_abar_n():
    studies = run_multiscale_study(LAW, [0, 1, 2], 200, 2, 3, 1)
    for s in studies:
        se = float(np.linalg.inv(s.mean_a_star_inv)[0, 0] ** 2 * s.se_a_star_inv[0, 0])
        assert abs(s.abar_n[0, 0] - 1.6) < 3 * se


def test_one_dimensional_tau_dual_part_vanishes():
    s0, s1 = run_multiscale_study(LAW, [0, 1], 30, 2, 1, 1)
    tau = estimate_tau(s0, s1)
    assert tau.coupled
    # E[a_*^-1] = E[1/b] at every scale; coupled samples make the difference exact up to roundoff
    assert abs(tau.mu_star_part_raw) < 0.2
    assert tau.tau >= 0


def test_tau_of_constant_law_is_zero():
    s0, s1 = run_multiscale_study(MarginalLaw.constant(2.0), [0, 1], 3, 2, 1, 2)
    assert estimate_tau(s0, s1).tau == pytest.approx(0.0, abs=1e-12)


def test_tau_needs_consecutive_scales():
    s0, _, s2 = run_multiscale_study(LAW, [0, 1, 2], 3, 2, 1, 1)
    with pytest.raises(ConfigError):
        estimate_tau(s0, s2)


def test_monotone_means():
    studies = run_multiscale_study(LAW, [0, 1, 2], 40, 2, 4, 2)
    for a, b in zip(studies[:-1], studies[1:]):
        for p in ([1, 0], [0, 1], [1, 1]):
            d = np.array([x - y for x, y in zip(
                0.5 * np.einsum("i,kij,j->k", p, a.a_samples, p), 0.5 * np.einsum("i,kij,j->k", p, b.a_samples, p))])
            assert d.mean() >= -2 * d.std(ddof=1) / math.sqrt(d.size)
            m0, _ = a.mean_mu_star(p)
            m1, _ = b.mean_mu_star(p)
            dd = 0.5 * np.einsum("i,kij,j->k", p, a.a_star_inv_samples - b.a_star_inv_samples, p)
            assert m0 - m1 >= -2 * dd.std(ddof=1) / math.sqrt(dd.size)


def test_abar_bracket_and_ordering():
    studies = run_multiscale_study(LAW, [0, 1, 2], 30, 2, 5, 2)
    est = estimate_abar(studies)
    assert est.basic_bracket == pytest.approx((1.6, 2.5))
    for s in studies:
        for a, b_inv in zip(s.a_samples, s.a_star_inv_samples):
            assert np.linalg.eigvalsh(a - np.linalg.inv(b_inv))[0] >= -1e-10
    lo, hi = est.refined_bracket
    assert lo <= hi


def test_bracket_violation_is_reported():
    studies = run_multiscale_study(LAW, [0, 1], 10, 2, 5, 2)
    studies[-1].mean_a = 10.0 * np.eye(2)
    with pytest.raises(StudyInconsistencyError):
        estimate_abar(studies)


def test_closed_forms():
    np.testing.assert_allclose(closed_form_abar(LAW, 2), 2.0 * np.eye(2))
    np.testing.assert_allclose(closed_form_abar(LAW, 1), [[1.6]])
    assert closed_form_abar(MarginalLaw.two_point(1, 4, 0.3), 2) is None


def test_omega_examples():
    fld = constant_field(1.0, TriadicCube.centered(2, 2))
    assert compute_omega(fld, 1, np.eye(2)) == 0.0
    assert compute_omega(fld, 1, 2 * np.eye(2)) == 16 / 9


def test_omega_matches_brute_force():
    fld = sample_field(LAW, 21, TriadicCube.centered(2, 2))
    assert compute_omega(fld, 2, 2 * np.eye(2), 2) == pytest.approx(brute_force_omega(fld, 2, 2 * np.eye(2), 2),
                                                                  abs=1e-10)


def test_omega_top_term_vanishes_with_own_matrix():
    from homog.cell import matrices

    fld = sample_field(LAW, 22, TriadicCube.centered(1, 2))
    a = matrices(fld, TriadicCube.centered(1, 2), 2).a_U
    full = compute_omega(fld, 1, a, 2)
    cells = fld.cells_meeting(TriadicCube.centered(1, 2)).ravel()
    low = (1 / 3) * math.sqrt(sum(float(np.linalg.norm(c * np.eye(2) - a, 2)) for c in cells) / 9)
    assert full == pytest.approx(low ** 2, rel=1e-12)


def test_omega_rejects_indefinite_reference():
    fld = constant_field(1.0, TriadicCube.centered(1, 2))
    with pytest.raises(ConfigError):
        compute_omega(fld, 1, -np.eye(2))


def test_harmonic_error_enumeration():
    for n in (0, 1, 2):
        assert harmonic_mean_error_exact(LAW, n) == pytest.approx(enumerated_harmonic_error(1, 4, 0.5, n), rel=1e-12)
    assert harmonic_mean_error_delta(LAW, 0) == pytest.approx(0.9216)


def test_convergence_study_constant_law():
    rep = convergence_study(MarginalLaw.constant(2.0), [0, 1], 30, 2, 0, 2)
    assert all(e == pytest.approx(0.0, abs=1e-20) for e in rep.err2)


def test_convergence_study_requires_30():
    with pytest.raises(ConfigError):
        convergence_study(LAW, [0, 1], 10)


def test_suppressive_profile_bounded_law():
    prof = suppressive_profile(LAW, 1.5, 1.5, 4)
    assert prof.delta[0] == prof.M[0] == 1.0
    assert all(a > b for a, b in zip(prof.delta, prof.delta[1:]))
    assert all(a < b for a, b in zip(prof.M, prof.M[1:]))
    assert all(m == 0.0 for m in prof.moment[2:])
    assert all(m <= prof.L * math.exp(-n) * (1 + 1e-12) for n, m in zip(prof.n, prof.moment))


def test_suppressive_profile_constant_law():
    prof = suppressive_profile(MarginalLaw.constant(1.0), 1.0, 1.0, 3)
    assert all(m == 0.0 for m in prof.moment[1:])


def test_truncated_moment_discrete_matches_monte_carlo():
    val, _ = truncated_moment(LAW, 9, 2 ** -1.5, 2 ** 1.5)
    mc, se = truncated_moment_mc(LAW, 9, 2 ** -1.5, 2 ** 1.5, 40000, seed=3)
    assert abs(val - mc) < 4 * se


def test_suppressive_exponents():
    bp, gp, alpha = suppressive_exponents(12.0, 12.0)
    assert 1 / 12 + 1 / 12 < alpha < 1 / 3
    assert bp == pytest.approx(1 / 12 + 0.5 * (alpha - 1 / 6))
    with pytest.raises(LawUnsuitableError):
        suppressive_exponents(4.0, 4.0)


def test_implied_alpha_rejects_heavy_tails():
    with pytest.raises(LawUnsuitableError):
        implied_alpha(MarginalLaw.weibull_tail(6, 6))


def test_workers_do_not_change_results():
    a = run_multiscale_study(LAW, [0, 1], 6, 2, 9, 2, workers=1)
    b = run_multiscale_study(LAW, [0, 1], 6, 2, 9, 2, workers=3)
    for x, y in zip(a, b):
        assert x.mean_a.tobytes() == y.mean_a.tobytes()
        assert x.se_a.tobytes() == y.se_a.tobytes()
        assert x.abar_n.tobytes() == y.abar_n.tobytes()


def test_golden_study(golden_dir):
    import json

    doc = json.loads((golden_dir / "study_two_point_seed7.json").read_text())
    for s in run_multiscale_study(LAW, [0, 1], 6, 4, 7, 2):
        ref = doc[f"n{s.n}"]
        np.testing.assert_allclose(s.mean_a, ref["mean_a"], rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(s.abar_n, ref["abar_n"], rtol=1e-12, atol=1e-15)


@given(st.floats(1.1, 10), st.floats(1.1, 10))
def test_two_point_bracket_property(a1, a2):
    law = MarginalLaw.two_point(a1, a2, 0.5)
    lo = 1 / (0.5 / a1 + 0.5 / a2)
    hi = 0.5 * (a1 + a2)
    fld = sample_field(law, 4, TriadicCube.centered(1, 2))
    from homog.cell import matrices

    ev = np.linalg.eigvalsh(matrices(fld, TriadicCube.centered(1, 2), 2).a_U)
    assert min(a1, a2) - 1e-10 <= ev[0] and ev[-1] <= max(a1, a2) + 1e-10
    assert lo <= hi * (1 + 1e-12)


def test_convergence_study_takes_dimension_from_supplied_studies():
    studies = run_multiscale_study(LAW, [0, 1], 30, 2, 1, 1)
    rep = convergence_study(LAW, [0, 1], 30, studies=studies)
    np.testing.assert_allclose(rep.abar_ref, [[1.6]])
