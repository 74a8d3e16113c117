import numpy as np
import pytest

from qres.errors import DomainError, ResourceError, ValidationError, WitnessRejected
from qres.models import (Assemblage, Behaviour, GeneralisedMeasurementSet, Povm, QuantumInputSet,
                         StandardMeasurementSet, controlled_povm, default_tomographic_inputs, embed_standard,
                         teleportation_assemblage)
from qres.operators import max_entangled
from qres.robustness import (Witness, behaviour_lp, check_behaviour_witness, check_incompat_witness,
                             check_teleport_witness, rob_behaviour, rob_buscemi, rob_incompat_generalised,
                             rob_incompat_standard, rob_teleport_choi, rob_teleport_classical_inputs, witness_lift)
from qres.robustness.exact import assemblage_residual, incompat_residual
from qres.sampling import random_povm
from qres.theorems import noisy_trine, noisy_xz

from helpers import (compatible_set, lhs_assemblage, local_behaviour, separable_buscemi_instance,
                     separable_teleport_instance)

Z0, Z1 = np.diag([1.0, 0]), np.diag([0, 1.0])


def pr_box():
    p = np.zeros((2, 2, 2, 2))
    for a, b, x, y in np.ndindex(2, 2, 2, 2):
        p[a, b, x, y] = 0.5 * ((a ^ b) == (x & y))
    return p


@pytest.fixture(scope="module")
def xz_result():
    return rob_incompat_standard(noisy_xz(1.0))


class TestIncompatibility:
    def test_xz_matches_oracle(self, xz_result, frozen):
        assert abs(xz_result.value - frozen["xz_incompat"]) <= 1e-6
        assert xz_result.bound == "exact"

    def test_xz_matches_seesaw_oracle(self, xz_result, frozen):
        assert abs(frozen["xz_incompat_seesaw"]["best"] - xz_result.value) <= 1e-5

    def test_trine_matches_oracle(self, frozen):
        assert abs(rob_incompat_standard(noisy_trine(1.0)).value - frozen["trine_incompat"]) <= 1e-6

    def test_identical_measurements(self):
        assert rob_incompat_standard(StandardMeasurementSet([[Z0, Z1], [Z0, Z1]])).value <= 1e-8

    @pytest.mark.parametrize("seed", range(4))
    def test_compatible_decomposition_is_clean(self, seed):
        res = rob_incompat_standard(compatible_set(np.random.default_rng(seed)))
        assert res.value <= 1e-8
        assert res.diagnostics["decomposition_residual"] <= 1e-7

    def test_single_measurement(self, rng):
        assert rob_incompat_standard(StandardMeasurementSet([random_povm(3, 3, rng)])).value <= 1e-8

    def test_decomposition_and_witness(self, xz_result):
        d = xz_result.diagnostics
        assert d["decomposition_residual"] <= 1e-7
        assert d["witness_gap"] <= 1e-6
        assert xz_result.witness.valid

    def test_residual_recomputed(self, xz_result):
        M = noisy_xz(1.0).arrays()
        assert incompat_residual(M, xz_result.value, xz_result.decomposition) <= 1e-7

    def test_monotone_under_mixing_with_own_free_model(self, xz_result):
        dec = xz_result.decomposition
        free = np.einsum("kax,kij->xaij", dec["strategies"], dec["parent"])
        M = noisy_xz(1.0).arrays()
        values = [rob_incompat_standard(StandardMeasurementSet((1 - t) * M + t * free)).value
                  for t in np.linspace(0, 1, 6)]
        assert all(b <= a + 1e-7 for a, b in zip(values, values[1:]))
        assert values[-1] <= 1e-7

    def test_cap(self):
        from qres.config import RobustnessSettings

        with pytest.raises(ResourceError):
            rob_incompat_standard(noisy_trine(1.0), RobustnessSettings(enum_cap=4))

    def test_corrupted_witness_is_invalid(self, xz_result):
        w = xz_result.witness
        bad = Witness(w.kind, w.operators * 3, w.dims, dict(w.normalisation), np.nan)
        assert not check_incompat_witness(bad, noisy_xz(1.0).arrays()).valid


class TestAssemblages:
    def test_product_form_is_free(self, rng):
        rb = np.diag([0.3, 0.7])
        tau = [[p * rb for p in row] for row in ([0.2, 0.8], [0.6, 0.4])]
        assert rob_teleport_classical_inputs(Assemblage(tau)).value <= 1e-8

    def test_xz_at_phi_plus_equals_incompatibility(self, xz_result):
        tau = teleportation_assemblage(embed_standard(noisy_xz(1.0)), max_entangled(2))
        res = rob_teleport_classical_inputs(tau)
        assert abs(res.value - xz_result.value) <= 1e-6
        assert res.diagnostics["witness_gap"] <= 1e-6
        assert assemblage_residual(tau.arrays(), res.value, res.decomposition) <= 1e-7

    def test_compatible_set_assemblage(self, rng):
        m = compatible_set(rng)
        assert rob_incompat_standard(m).value <= 1e-8
        tau = teleportation_assemblage(embed_standard(m), max_entangled(2))
        assert rob_teleport_classical_inputs(tau).value <= 1e-8

    @pytest.mark.parametrize("seed", range(3))
    def test_lhs_model(self, seed):
        assert rob_teleport_classical_inputs(lhs_assemblage(np.random.default_rng(seed))).value <= 1e-7


@pytest.fixture(scope="module")
def controlled():
    return controlled_povm(noisy_xz(1.0)), max_entangled(2)


class TestTeleportChoi:
    def test_exact_on_controlled_povm(self, controlled, xz_result, fast):
        res = rob_teleport_choi(*controlled, "exact", fast)
        assert abs(res.value - xz_result.value) <= 1e-6
        assert res.witness.valid and res.diagnostics["witness_gap"] <= 1e-6
        assert res.diagnostics["decomposition_residual"] <= 1e-7

    def test_sandwich(self, controlled, xz_result, fast):
        lower = rob_teleport_choi(*controlled, "ppt_lower", fast)
        upper = rob_teleport_choi(*controlled, "seesaw_upper", fast)
        assert lower.bound == "lower" and upper.bound == "upper"
        assert lower.value <= xz_result.value + 1e-6
        assert upper.value >= xz_result.value - 1e-6
        assert upper.diagnostics["decomposition_residual"] <= 1e-7
        assert lower.witness.valid

    def test_separable_state(self, fast):
        Ma, rho = separable_teleport_instance(np.random.default_rng(5))
        for mode in ("ppt_lower", "seesaw_upper"):
            res = rob_teleport_choi(Ma, rho, mode, fast)
            assert res.value <= 1e-7
            assert res.value >= 0

    def test_exact_needs_controlled_povm(self, rng, fast):
        Ma = Povm(random_povm(4, 2, rng), (2, 2))
        with pytest.raises(DomainError):
            rob_teleport_choi(Ma, max_entangled(2), "exact", fast)

    def test_unknown_mode(self, controlled):
        with pytest.raises(ValidationError):
            rob_teleport_choi(*controlled, "fastest")

    def test_inflated_witness_rejected(self, controlled, fast):
        res = rob_teleport_choi(*controlled, "exact", fast)
        w = res.witness
        from qres.operators import choi_teleportation

        J = choi_teleportation(controlled[0], controlled[1])
        bad = Witness(w.kind, w.operators * 5, w.dims, {"Z": w.normalisation["Z"] * 5}, np.nan)
        assert not check_teleport_witness(bad, J, np.eye(2) / 2, 500).valid


class TestBuscemi:
    def test_separable_is_free(self, fast):
        dp = separable_buscemi_instance(np.random.default_rng(2))
        for mode in ("ppt_lower", "seesaw_upper"):
            res = rob_buscemi(dp, mode, fast)
            assert 0 <= res.value <= 1e-7

    def test_exact_mode_not_offered(self, fast):
        with pytest.raises(ValidationError):
            rob_buscemi(separable_buscemi_instance(np.random.default_rng(2)), "exact", fast)


class TestWitnessLift:
    def test_zero_witness(self):
        z = np.zeros((2, 4, 4), dtype=complex)
        tw = Witness("teleportation", z, (2, 2), {"Z": np.zeros((4, 4), dtype=complex)}, 0.0)
        lifted = witness_lift(tw, 2, samples=1000)
        assert np.abs(lifted.operators).max() == 0
        assert lifted.evidence["sampled_pairing_min"] == 0

    def test_trace_bound_violation_rejected(self):
        W = np.array([40 * np.eye(4), np.zeros((4, 4))], dtype=complex)
        tw = Witness("teleportation", W, (2, 2), {"Z": 40 * np.eye(4, dtype=complex)}, np.nan)
        with pytest.raises(WitnessRejected) as info:
            witness_lift(tw, 2, samples=0)
        assert info.value.diagnostics["trace_sum"] > info.value.diagnostics["trace_bound"]

    def test_dimension_checked(self):
        tw = Witness("teleportation", np.zeros((2, 4, 4)), (2, 2), {"Z": np.zeros((4, 4))}, 0.0)
        with pytest.raises(ValidationError):
            witness_lift(tw, 3)


class TestBehaviours:
    def test_pr_box_matches_vertex_lp(self, frozen):
        res = behaviour_lp(pr_box())
        assert abs(res.value - frozen["pr_box_local"]) <= 1e-6
        assert res.witness.valid and res.diagnostics["witness_gap"] <= 1e-6
        assert res.diagnostics["decomposition_residual"] <= 1e-7

    def test_deterministic_local(self):
        p = np.zeros((2, 2, 2, 2))
        for x, y in np.ndindex(2, 2):
            p[x, 1 - y, x, y] = 1
        assert rob_behaviour(Behaviour(p)).value <= 1e-8

    @pytest.mark.parametrize("seed", range(3))
    def test_local_model(self, seed):
        assert rob_behaviour(local_behaviour(np.random.default_rng(seed))).value <= 1e-8

    def test_quantum_inputs_use_seesaw(self, fast):
        # |0> and |+>: not orthogonal, so the responses must come from POVMs
        states = default_tomographic_inputs(2).states
        inp = QuantumInputSet([states[0].matrix, states[2].matrix])
        p = np.full((2, 2, 2, 2), 0.25)
        res = rob_behaviour(Behaviour(p, inp, inp), settings=fast)
        assert res.bound == "upper" and res.value <= 1e-7
        assert res.diagnostics["decomposition_residual"] <= 1e-7

    def test_unconstrained_reading(self, fast):
        inp = default_tomographic_inputs(2)
        res = rob_behaviour(Behaviour(np.full((2, 2, 6, 6), 0.25), inp, inp), unconstrained_pmf=True, settings=fast)
        assert res.bound == "exact" and res.diagnostics["reading"] == "unconstrained-pmf"

    def test_invalid_witness(self):
        w = Witness("behaviour", np.full((2, 2, 2, 2), 1.0), (2, 2, 2, 2), {}, np.nan)
        assert not check_behaviour_witness(w, pr_box()).valid


class TestGeneralised:
    def test_embedded_xz_equals_standard(self, xz_result, fast):
        for mode in ("exact", "ppt_lower", "seesaw_upper"):
            assert abs(rob_incompat_generalised(embed_standard(noisy_xz(1.0)), mode, fast).value
                       - xz_result.value) <= 1e-6

    def test_embedded_compatible_is_zero(self, rng, fast):
        g = embed_standard(compatible_set(rng))
        for mode in ("ppt_lower", "seesaw_upper"):
            assert rob_incompat_generalised(g, mode, fast).value <= 1e-7

    def test_quantum_inputs_bound_ordering(self, fast):
        rng = np.random.default_rng(21)
        parent = Povm(random_povm(4, 2, rng, kind="projective"), (2, 2))
        g = GeneralisedMeasurementSet(parent, default_tomographic_inputs(2))
        lower = rob_incompat_generalised(g, "ppt_lower", fast)
        upper = rob_incompat_generalised(g, "seesaw_upper", fast)
        assert lower.value <= upper.value + 1e-6
        assert upper.diagnostics["decomposition_residual"] <= 1e-7

    def test_exact_needs_orthogonal_inputs(self, rng, fast):
        parent = Povm(random_povm(4, 2, rng), (2, 2))
        g = GeneralisedMeasurementSet(parent, default_tomographic_inputs(2))
        with pytest.raises(DomainError):
            rob_incompat_generalised(g, "exact", fast)
