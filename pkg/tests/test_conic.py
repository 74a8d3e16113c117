import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qres.conic import (ConicProgram, SolverSettings, extract_dual_witness, kron, ptrace, ptranspose, realify,
                        require_optimal, solve, solve_log, unrealify)
from qres.errors import ExtractionError, SolverError, ValidationError
from qres.operators import partial_trace, partial_transpose
from qres.sampling import random_hermitian, random_state

seeds = st.integers(0, 2**32 - 1)


def trace_one_program(d=2):
    prog = ConicProgram("trace-one")
    X = prog.hermitian("X", d)
    prog.add_psd("X", X)
    prog.add_eq("trace", X.trace() - 1)
    prog.minimize(X.trace())
    return prog, X


class TestSmallPrograms:
    def test_trace_one(self):
        prog, X = trace_one_program()
        sol = solve(prog)
        assert sol.status == "optimal"
        assert abs(sol.primal_value - 1) < 1e-9
        (y,) = sol.duals["trace"]
        assert abs(complex(np.ravel(y)[0]) - 1) < 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_max_eigenvalue(self, seed):
        A = random_hermitian(3, np.random.default_rng(seed))
        prog = ConicProgram("max-eig")
        X = prog.hermitian("X", 3)
        prog.add_psd("X", X)
        prog.add_eq("trace", X.trace() - 1)
        prog.maximize((A @ X).trace().real())
        sol = require_optimal(solve(prog), "max-eig")
        assert abs(sol.primal_value - np.linalg.eigvalsh(A)[-1]) < 1e-7
        assert sol.gap <= 1e-7

    def test_min_eigenvalue_via_real_variable(self):
        A = random_hermitian(4, np.random.default_rng(9))
        prog = ConicProgram("min-eig")
        t = prog.real("t")
        prog.add_psd("shift", A - kron(t, np.eye(4)))
        prog.maximize(t)
        assert abs(solve(prog).primal_value - np.linalg.eigvalsh(A)[0]) < 1e-7

    def test_partial_trace_and_transpose_expressions(self, rng):
        rho = random_state(4, rng)
        prog = ConicProgram("maps")
        X = prog.hermitian("X", 4, dims=(2, 2))
        prog.add_eq("fix", X - rho)
        prog.minimize(X.trace())
        sol = solve(prog)
        assert np.abs(sol.value(ptrace(X, [0])) - partial_trace(rho, [0], (2, 2))).max() < 1e-8
        assert np.abs(sol.value(ptranspose(X, [1])) - partial_transpose(rho, 1, (2, 2))).max() < 1e-8

    def test_infeasible(self):
        prog = ConicProgram("infeasible")
        X = prog.hermitian("X", 2)
        prog.add_psd("X", X)
        prog.add_eq("trace", X.trace() + 1)
        prog.minimize(X.trace())
        sol = solve(prog)
        assert sol.status == "infeasible"
        with pytest.raises(ExtractionError):
            extract_dual_witness(sol, "trace")
        with pytest.raises(SolverError):
            require_optimal(sol, "infeasible program")

    def test_unknown_group(self):
        prog, _ = trace_one_program()
        with pytest.raises(ExtractionError):
            extract_dual_witness(solve(prog), "nope")

    def test_non_hermitian_psd_rejected(self):
        prog = ConicProgram("bad")
        X = prog.hermitian("X", 2)
        with pytest.raises(ValidationError):
            prog.add_psd("bad", X @ np.array([[1, 1], [0, 1]]))

    def test_deterministic(self):
        A = random_hermitian(3, np.random.default_rng(3))

        def run():
            prog = ConicProgram("det")
            X = prog.hermitian("X", 3)
            prog.add_psd("X", X)
            prog.add_eq("trace", X.trace() - 1)
            prog.maximize((A @ X).trace().real())
            return solve(prog).primal_value

        assert abs(run() - run()) <= 1e-9

    def test_solve_log_records_every_solve(self):
        with solve_log() as log:
            solve(trace_one_program()[0])
            solve(trace_one_program(3)[0])
        assert [e["status"] for e in log] == ["optimal", "optimal"]
        assert all(e["residual_primal"] <= 1e-8 and e["gap"] <= 1e-7 for e in log)

    def test_verification_thresholds_are_enforced(self):
        prog, _ = trace_one_program()
        strict = SolverSettings(tol_feas=1e-3, tol_gap_abs=1e-3, tol_gap_rel=1e-3, max_iter=2,
                                verify_feas=1e-15, verify_gap=1e-15, retry=False)
        assert solve(prog, settings=strict).status != "optimal"

    def test_json_dump(self):
        prog, _ = trace_one_program()
        data = json.loads(prog.to_json())
        assert data["variables"] and data["constraints"]


class TestRealify:
    @settings(max_examples=40, deadline=None)
    @given(seeds, st.integers(1, 4))
    def test_linear(self, seed, d):
        rng = np.random.default_rng(seed)
        a, b = random_hermitian(d, rng), random_hermitian(d, rng)
        c = rng.normal()
        assert np.abs(realify(a + c * b) - realify(a) - c * realify(b)).max() < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(seeds, st.integers(1, 4))
    def test_spectrum_doubles(self, seed, d):
        h = random_hermitian(d, np.random.default_rng(seed))
        ev = np.linalg.eigvalsh(h)
        assert np.allclose(np.linalg.eigvalsh(realify(h)), np.sort(np.repeat(ev, 2)), atol=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(seeds, st.integers(2, 4))
    def test_psd_both_directions(self, seed, d):
        rng = np.random.default_rng(seed)
        psd = random_state(d, rng)
        assert np.linalg.eigvalsh(realify(psd))[0] > -1e-12
        shifted = psd - 1.01 * np.linalg.eigvalsh(psd)[-1] * np.eye(d)
        assert np.linalg.eigvalsh(realify(shifted))[0] < 0

    @settings(max_examples=40, deadline=None)
    @given(seeds, st.integers(1, 4))
    def test_unrealify_is_the_adjoint(self, seed, d):
        rng = np.random.default_rng(seed)
        h = random_hermitian(d, rng)
        s = rng.normal(size=(2 * d, 2 * d))
        s = s + s.T
        assert abs(np.trace(unrealify(s) @ h) - np.sum(s * realify(h))) < 1e-10

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValidationError):
            realify(np.array([[0, 1], [0, 0]]))
