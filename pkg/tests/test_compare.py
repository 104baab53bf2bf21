import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fewshot_ci.adapters import Oracle, evaluate_tasks
from fewshot_ci.compare import (
    Cell,
    SignificanceMatrix,
    compare_runs,
    conclusiveness_report,
    emit_matrix,
    matrix_from_json,
    matrix_to_json,
    matrix_to_text,
)
from fewshot_ci.errors import DataError
from fewshot_ci.samplers import sample_until_depleted, sample_with_replacement
from fewshot_ci.stats import Verdict
from fewshot_ci.tasks import RunManifest, TaskSpec, pool_from_arrays

P, Z, M = Verdict.PLUS, Verdict.ZERO, Verdict.MINUS


@pytest.fixture(scope="module")
def pool():
    rng = np.random.default_rng(0)
    return pool_from_arrays([rng.normal(c, 1, size=200) for c in range(10)])


@pytest.fixture(scope="module")
def tasks(pool):
    return sample_until_depleted(pool, 5, 5, 15, seed=1)


def manifest(pool, tasks, accs, method, mode="depletion", seed=1):
    T = len(tasks) if mode == "with_replacement" else None
    return RunManifest(seed, TaskSpec(5, 5, 15, T), mode, method, tasks, list(accs), pool.fingerprint())


class TestCompareRuns:
    def test_constant_shift(self, pool, tasks):
        a = np.random.default_rng(2).uniform(0.3, 0.8, len(tasks))
        mat = compare_runs([manifest(pool, tasks, a, "A"), manifest(pool, tasks, a + 0.1, "B")])
        cell = mat.cells[0][1]
        assert cell.paired is M
        assert mat.cells[1][0].paired is P

    def test_self_comparison(self, pool, tasks):
        a = np.random.default_rng(3).uniform(0.3, 0.8, len(tasks))
        mat = compare_runs([manifest(pool, tasks, a, "A"), manifest(pool, tasks, a, "A2")])
        c = mat.cells[0][1]
        assert (c.closed, c.open, c.paired) == (Z, Z, Z)

    def test_signature_pattern(self, pool):
        big = sample_with_replacement(pool, TaskSpec(5, 5, 15, 600), seed=4)
        a = evaluate_tasks(Oracle(0.765, seed=1), big, pool)
        b = evaluate_tasks(Oracle(0.75, seed=2), big, pool)
        mat = compare_runs([manifest(pool, big, a, "A", "depletion"), manifest(pool, big, b, "B", "depletion")])
        c = mat.cells[0][1]
        assert c.open is Z and c.paired is P

    def test_paired_needs_same_tasks(self, pool, tasks):
        other = sample_until_depleted(pool, 5, 5, 15, seed=2)
        a = manifest(pool, tasks, [0.5] * len(tasks), "A")
        b = manifest(pool, other, [0.6] * len(other), "B", seed=2)
        c = compare_runs([a, b]).cells[0][1]
        assert c.paired is None and c.open is not None

    def test_no_comparable_pairs(self, pool, tasks):
        rng = np.random.default_rng(1)
        other_pool = pool_from_arrays([rng.normal(c, 1, size=200) for c in range(10)])
        other = sample_until_depleted(other_pool, 5, 5, 15, seed=2)
        a = manifest(pool, tasks, [0.5] * len(tasks), "A")
        b = manifest(other_pool, other, [0.6] * len(other), "B", seed=2)
        with pytest.raises(DataError, match="no comparable"):
            compare_runs([a, b])

    def test_needs_two_methods(self, pool, tasks):
        with pytest.raises(DataError):
            compare_runs([manifest(pool, tasks, [0.5] * len(tasks), "A")])

    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
    def test_antisymmetric(self, shifts):
        pool_ = pool_from_arrays([np.arange(40.0) + 100 * c for c in range(10)])
        ts = sample_until_depleted(pool_, 5, 5, 15, seed=1)
        rng = np.random.default_rng(9)
        ms = [manifest(pool_, ts, np.clip(rng.uniform(0, 0.5, len(ts)) + s * 0.5, 0, 1), f"m{i}")
              for i, s in enumerate(shifts)]
        mat = compare_runs(ms)
        for i in range(3):
            assert mat.cells[i][i] is None
            for j in range(3):
                if i != j:
                    assert mat.cells[i][j] == mat.cells[j][i].flipped()


def _mat(cell):
    return SignificanceMatrix(["a", "b"], [[None, cell], [cell.flipped(), None]])


class TestReport:
    def test_all_zero(self):
        rep = conclusiveness_report([_mat(Cell(Z, Z, Z))])
        assert rep.conclusive == {"closed": 0, "open": 0, "paired": 0}
        assert rep.comparisons == 1

    def test_inversion_flagged(self):
        rep = conclusiveness_report([_mat(Cell(P, Z, M))])
        assert len(rep.inversions) == 1
        assert "closed + vs paired -" in rep.inversions[0]

    def test_negative_correlation_labelled(self):
        rep = conclusiveness_report([_mat(Cell(Z, Z, Z, correlation=-0.4))])
        assert len(rep.negative_correlation) == 1
        assert "negatively correlated pairs" in rep.to_text()

    def test_oracle_suite_paired_beats_open(self, pool):
        mats = []
        for k in range(5):
            ts = sample_with_replacement(pool, TaskSpec(5, 5, 15, 600), seed=100 + k)
            ms = [manifest(pool, ts, evaluate_tasks(Oracle(base, seed=10 * k + i), ts, pool), f"m{i}")
                  for i, base in enumerate((0.74, 0.75, 0.76, 0.77))]
            mats.append(compare_runs(ms))
        rep = conclusiveness_report(mats)
        assert rep.conclusive["paired"] >= rep.conclusive["open"]
        assert not rep.inversions


class TestEmit:
    def test_text_cells(self):
        text = matrix_to_text(_mat(Cell(P, Z, None)))
        assert "+0." in text and "-0." in text

    def test_json_roundtrip(self):
        mat = _mat(Cell(P, Z, M, correlation=0.5))
        assert matrix_from_json(matrix_to_json(mat)) == mat
        assert matrix_to_json(matrix_from_json(matrix_to_json(mat))) == matrix_to_json(mat)

    def test_csv(self):
        lines = emit_matrix(_mat(Cell(P, Z, M)), "csv").splitlines()
        assert lines[0] == "row,col,closed,open,paired"
        assert lines[1] == "a,b,+,0,-"

    def test_unknown_format(self):
        with pytest.raises(DataError):
            emit_matrix(_mat(Cell(P, Z, M)), "xml")

    def test_malformed_json(self):
        with pytest.raises(DataError):
            matrix_from_json('{"methods": ["a"]}')
