import numpy as np
import pytest

from conftest import linear_pair_matrices
from switchcert.certify import (AbsorbingSetCertificate,
                                CertificateRejectedError, CertificationQuery,
                                EquilibriumError, GammaInfeasibleError,
                                SwitchedSystem, VerificationReport, classify,
                                cqlf_bisection, escalate,
                                find_absorbing_lyapunov, find_common_lyapunov,
                                minimize_gamma, tighten_beta,
                                verify_certificate)
from switchcert.poly import parse_expression


def status_of(result):
    if result.feasible:
        return "feasible"
    return "infeasible" if result.proven_infeasible else "marginal"


class TestFindAbsorbingLyapunov:
    def test_scalar_stable_system(self):
        system = SwitchedSystem.from_matrices([np.array([[-1.0]])])
        query = CertificationQuery(ell=1, delta=1.0, degree=2, beta=0.0)
        result = find_absorbing_lyapunov(system, query)
        assert result.feasible
        # V is proportional to x^2
        assert set(result.lyapunov.terms) == {(2,)}
        assert result.lyapunov.coefficient((2,)) >= 1.0

    def test_affine_pair_at_reported_beta(self, affine_pair):
        query = CertificationQuery(ell=2, delta=1.0, degree=4, beta=3.3)
        result = find_absorbing_lyapunov(affine_pair, query)
        assert result.feasible
        assert result.lyapunov.is_homogeneous()
        assert result.lyapunov.degree() == 4

    def test_cubic_3d_degree_tradeoff(self, cubic_3d_pair):
        q4 = CertificationQuery(ell=2, delta=1.0, degree=4, beta=0.0)
        assert find_absorbing_lyapunov(cubic_3d_pair, q4).proven_infeasible
        q6 = CertificationQuery(ell=2, delta=1.0, degree=6, beta=0.0)
        assert find_absorbing_lyapunov(cubic_3d_pair, q6).feasible

    def test_requires_fixed_beta(self, affine_pair):
        query = CertificationQuery(ell=2, degree=4, beta=None, beta_max=4.0)
        with pytest.raises(ValueError):
            find_absorbing_lyapunov(affine_pair, query)


class TestMinimizeGamma:
    def test_norm_ball_level_set(self):
        system = SwitchedSystem.from_matrices(
            [np.array([[-1.0, 0.0], [0.0, -1.0]])])
        V = parse_expression("x1^2 + x2^2", 2)
        out = minimize_gamma(system, V, beta=1.0, deg_q=0)
        assert out.gamma == pytest.approx(1.0, abs=1e-5)

    def test_published_pair_value(self, affine_pair, published_v_affine_pair):
        out = minimize_gamma(affine_pair, published_v_affine_pair, beta=3.3)
        assert out.gamma == pytest.approx(8725.0, rel=0.05)

    def test_published_triple_value(self, affine_triple,
                                    published_v_affine_triple):
        out = minimize_gamma(affine_triple, published_v_affine_triple,
                             beta=2.0)
        assert out.gamma == pytest.approx(38.43, rel=0.05)

    def test_monotone_in_q_degree(self, affine_pair, affine_triple,
                                  published_v_affine_pair,
                                  published_v_affine_triple):
        for system, V, beta in ((affine_pair, published_v_affine_pair, 3.3),
                                (affine_triple, published_v_affine_triple,
                                 2.0)):
            gammas = []
            for deg_q in (2, 4):
                gammas.append(
                    minimize_gamma(system, V, beta, deg_q=deg_q).gamma)
            slack = 1e-6 * (1.0 + abs(gammas[0]))
            assert gammas[1] <= gammas[0] + slack

    def test_degree_zero_q_infeasible_for_quartic(self, affine_pair,
                                                  published_v_affine_pair):
        # a constant q cannot cancel the quartic top of V
        with pytest.raises(GammaInfeasibleError):
            minimize_gamma(affine_pair, published_v_affine_pair, beta=3.3,
                           deg_q=0)


class TestTightenBeta:
    def test_scalar_system_reaches_zero(self):
        system = SwitchedSystem.from_matrices([np.array([[-1.0]])])
        query = CertificationQuery(ell=1, delta=1.0, degree=2, beta_max=2.0)
        out = tighten_beta(system, query)
        assert out.beta_star == 0.0
        assert not out.monotonicity_violations

    def test_affine_pair_tightens_below_reported(self, affine_pair):
        query = CertificationQuery(ell=2, delta=1.0, degree=4, beta_max=3.3,
                                   beta_tol=0.05)
        out = tighten_beta(affine_pair, query)
        assert out.beta_star <= 3.3
        assert out.result.feasible
        assert not out.monotonicity_violations

    def test_infeasible_beta_max_rejected(self, affine_pair):
        query = CertificationQuery(ell=2, delta=1.0, degree=4, beta_max=0.5)
        with pytest.raises(ValueError):
            tighten_beta(affine_pair, query)

    def test_van_der_pol_tightens_to_fourteen_or_less(self, vdp_pair):
        query = CertificationQuery(ell=1, delta=1e-4, degree=6,
                                   beta_max=14.0, beta_tol=1.0)
        out = tighten_beta(vdp_pair, query)
        assert out.beta_star <= 14.0
        assert out.result.feasible


class TestCommonLyapunov:
    def test_cqlf_feasible_then_infeasible(self):
        for b, expected in ((5.0, "feasible"), (6.0, "infeasible")):
            system = SwitchedSystem.from_matrices(linear_pair_matrices(b))
            query = CertificationQuery(ell=1, delta=1.0, degree=2, beta=0.0)
            assert status_of(find_common_lyapunov(system, query)) == expected

    def test_equilibrium_precondition(self, affine_pair):
        query = CertificationQuery(ell=2, delta=1.0, degree=4, beta=0.0)
        with pytest.raises(EquilibriumError):
            find_common_lyapunov(affine_pair, query)

    def test_high_degree_homogeneous_instance(self):
        system = SwitchedSystem.from_matrices(linear_pair_matrices(12.0))
        query = CertificationQuery(ell=6, delta=0.001, degree=12, beta=0.0)
        result = find_common_lyapunov(system, query)
        assert result.feasible
        assert result.lyapunov.is_homogeneous()
        assert result.lyapunov.degree() == 12


class TestCqlfBisection:
    def test_reported_threshold(self):
        out = cqlf_bisection(linear_pair_matrices, (0.5, 20.0), tol=0.01)
        assert out.b_max == pytest.approx(5.36, abs=0.05)
        # independent algebraic oracle: no real negative eigenvalue of A1 A2
        # exactly when b is below the threshold
        A1 = linear_pair_matrices(1.0)[0]
        for b, expect in ((out.b_max - 0.2, False), (out.b_max + 0.2, True)):
            A2 = linear_pair_matrices(b)[1]
            eigs = np.linalg.eigvals(A1 @ A2)
            has_neg_real = bool(np.any((np.abs(eigs.imag) < 1e-9)
                                       & (eigs.real < 0)))
            assert has_neg_real == expect

    def test_identical_stable_matrices_whole_interval(self):
        out = cqlf_bisection(lambda b: [-np.eye(2), -np.eye(2)], (0.5, 30.0))
        assert out.b_max == 30.0

    def test_infeasible_left_end(self):
        with pytest.raises(ValueError):
            cqlf_bisection(linear_pair_matrices, (20.0, 30.0))


class TestVerifyCertificate:
    def test_published_pair_all_checks(self, affine_pair,
                                       published_v_affine_pair):
        cert = AbsorbingSetCertificate(
            dimension=2, n_subsystems=2, lyapunov=published_v_affine_pair,
            beta=3.3, delta=1.0, ell=2, gamma=8725.0)
        report = verify_certificate(affine_pair, cert, sample_count=2000,
                                    residual_tol=1e-5)
        assert report.passed
        assert report.negativity_margin > 0
        assert report.containment_ok

    def test_published_triple_all_checks(self, affine_triple,
                                         published_v_affine_triple):
        cert = AbsorbingSetCertificate(
            dimension=2, n_subsystems=3, lyapunov=published_v_affine_triple,
            beta=2.0, delta=1.0, ell=2, gamma=38.43)
        report = verify_certificate(affine_triple, cert, sample_count=2000,
                                    residual_tol=1e-5)
        assert report.passed

    def test_rotation_field_fails_negativity(self):
        system = SwitchedSystem.from_matrices(
            [np.array([[0.0, 1.0], [-1.0, 0.0]])])
        cert = AbsorbingSetCertificate(
            dimension=2, n_subsystems=1,
            lyapunov=parse_expression("x1^2 + x2^2", 2),
            beta=1.0, delta=1.0, ell=1, gamma=4.0)
        with pytest.raises(CertificateRejectedError) as err:
            verify_certificate(system, cert, sample_count=500)
        assert any("negativity" in f or "identity" in f
                   for f in err.value.report.failures)

    def test_shrunk_gamma_fails_containment(self, affine_pair,
                                            published_v_affine_pair):
        cert = AbsorbingSetCertificate(
            dimension=2, n_subsystems=2, lyapunov=published_v_affine_pair,
            beta=3.3, delta=1.0, ell=2, gamma=100.0)
        with pytest.raises(CertificateRejectedError) as err:
            verify_certificate(affine_pair, cert, sample_count=2000,
                               residual_tol=1e-5)
        assert any("containment" in f for f in err.value.report.failures)

    def test_dimension_mismatch(self, affine_pair):
        cert = AbsorbingSetCertificate(
            dimension=3, n_subsystems=2,
            lyapunov=parse_expression("x1^2 + x2^2 + x3^2", 3),
            beta=1.0, delta=1.0, ell=1, gamma=1.0)
        with pytest.raises(ValueError):
            verify_certificate(affine_pair, cert)


class TestClassify:
    def _verified_stub(self, **kwargs):
        report = VerificationReport(
            identity_residuals={}, gram_margins={}, negativity_margin=1.0,
            containment_ok=True, containment_slack=0.0, sample_count=1,
            seed=0, failures=(), residual_tol=1e-6, eig_tol=1e-7)
        return AbsorbingSetCertificate(report=report, **kwargs)

    def test_linear_hurwitz_pair_is_gas(self):
        system = SwitchedSystem.from_matrices(linear_pair_matrices(12.0))
        cert = self._verified_stub(
            dimension=2, n_subsystems=2,
            lyapunov=parse_expression("x1^2 + x2^2", 2),
            beta=0.0, delta=1.0, ell=1, gamma=1e-6)
        verdict = classify(system, cert)
        assert verdict.kind == "GLOBALLY_ASYMPTOTICALLY_STABLE"
        assert any("periodic" in note for note in verdict.notes)

    def test_non_hurwitz_never_gas(self):
        # one subsystem has an eigenvalue with positive real part; even a
        # (stub) verified certificate must not upgrade to GAS
        system = SwitchedSystem.from_matrices(
            [np.array([[-1.0, 0.0], [0.0, -1.0]]),
             np.array([[0.5, 0.0], [0.0, -1.0]])])
        cert = self._verified_stub(
            dimension=2, n_subsystems=2,
            lyapunov=parse_expression("x1^2 + x2^2", 2),
            beta=1.0, delta=1.0, ell=1, gamma=2.0)
        assert classify(system, cert).kind == "ULTIMATELY_BOUNDED"

    def test_nonlinear_is_ultimately_bounded(self, vdp_pair):
        cert = self._verified_stub(
            dimension=2, n_subsystems=2,
            lyapunov=parse_expression("x1^2 + x2^2", 2),
            beta=14.0, delta=1e-4, ell=1, gamma=22.0)
        verdict = classify(vdp_pair, cert)
        assert verdict.kind == "ULTIMATELY_BOUNDED"
        assert any("absorbing set" in note for note in verdict.notes)

    def test_requires_verified_report(self, vdp_pair):
        cert = AbsorbingSetCertificate(
            dimension=2, n_subsystems=2,
            lyapunov=parse_expression("x1^2 + x2^2", 2),
            beta=14.0, delta=1e-4, ell=1, gamma=22.0)
        with pytest.raises(ValueError):
            classify(vdp_pair, cert)


class TestEscalate:
    def test_scalar_terminates_at_degree_two(self):
        system = SwitchedSystem.from_matrices([np.array([[-1.0]])])
        out = escalate(system, CertificationQuery(ell=1, beta=0.0))
        assert out.degree == 2
        assert out.verdict.kind == "GLOBALLY_ASYMPTOTICALLY_STABLE"

    def test_infeasible_at_cap(self):
        system = SwitchedSystem.from_matrices(linear_pair_matrices(20.0))
        from switchcert.certify import InfeasibleAtCapError
        with pytest.raises(InfeasibleAtCapError):
            escalate(system, CertificationQuery(
                ell=1, beta=0.0, degree_cap=4))

    def test_full_pipeline_affine_pair(self, affine_pair):
        out = escalate(affine_pair, CertificationQuery(
            ell=2, delta=1.0, degree=4, beta=3.3))
        cert = out.certificate
        assert cert.report.passed
        assert cert.gamma > 0
        # the second subsystem is affine, not linear, so no GAS upgrade
        assert out.verdict.kind == "ULTIMATELY_BOUNDED"
        assert len(out.logs) >= 2

    def test_beta_zero_equivalence_gamma_small(self):
        # a common Lyapunov certificate allows an arbitrarily small gamma
        system = SwitchedSystem.from_matrices(linear_pair_matrices(5.0))
        out = escalate(system, CertificationQuery(ell=1, degree=2, beta=0.0))
        assert out.certificate.gamma <= 1e-3

    def test_containment_samples(self, affine_pair):
        out = escalate(affine_pair, CertificationQuery(
            ell=2, delta=1.0, degree=4, beta=3.3, verify_samples=10000))
        report = out.certificate.report
        assert report.containment_ok
        assert report.containment_slack is not None
