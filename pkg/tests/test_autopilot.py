"""autopilot: aggregates vs engine, OLS vs closed form, scheduler timing."""

import random

import pytest

from gridmesh.autopilot import (
    JobSpec,
    compute_aggregate,
    linear_trend,
    next_due_after,
    parse_range_text,
    validate_job_spec,
)
from gridmesh.errors import AuthDenied, BadJobSpec, InsufficientData, NoSuchJob
from gridmesh.sheet import (
    CellAddress,
    Err,
    ErrorCode,
    Num,
    Number,
    Sheet,
    Text,
    parse_address,
    parse_save_string,
)
from gridmesh.store import SheetKey
from oracle import ols_line


def sheet_with(cells):
    sheet = Sheet("s")
    for label, content in cells.items():
        sheet.set_cell(parse_address(label), content)
    return sheet


class TestAggregates:
    def test_mean_of_obtained_marks(self):
        # marks-obtained column: 24 and 33 (the middle row is still pending)
        sheet = sheet_with({"E2": Number(24.0), "E3": Text("NOT YET OUT"),
                            "E4": Number(33.0)})
        got = compute_aggregate(sheet, parse_address("E2"), parse_address("E4"), "MEAN")
        assert got == Num(28.5)

    def test_countif_attendance_column(self):
        sheet = sheet_with({f"C{r}": Text(v) for r, v in
                            zip(range(1, 6), ["P", "A", "P", "P", "A"])})
        start, end = parse_address("C1"), parse_address("C5")
        assert compute_aggregate(sheet, start, end, "COUNTIF", "P") == Num(3.0)
        assert compute_aggregate(sheet, start, end, "COUNTIF", "A") == Num(2.0)

    def test_count_empty_range(self):
        sheet = Sheet("s")
        assert compute_aggregate(sheet, parse_address("A1"), parse_address("B5"),
                                 "COUNT") == Num(0.0)

    def test_matches_formula_engine_on_random_sheets(self):
        from genlib import random_sheet
        from gridmesh.formula import parse_formula, evaluate_formula, SheetResolver
        rng = random.Random(4242)
        kinds = ["SUM", "MEAN", "MIN", "MAX", "COUNT"]
        for _ in range(200):
            sheet = random_sheet(rng, max_cells=20, cols=5, rows=6)
            a = CellAddress(rng.randint(1, 5), rng.randint(1, 6))
            b = CellAddress(rng.randint(1, 5), rng.randint(1, 6))
            start = CellAddress(min(a.col, b.col), min(a.row, b.row))
            end = CellAddress(max(a.col, b.col), max(a.row, b.row))
            kind = rng.choice(kinds)
            name = "AVERAGE" if kind == "MEAN" else kind
            source = f"{name}({start}:{end})"
            want = evaluate_formula(parse_formula(source), SheetResolver(sheet))
            assert compute_aggregate(sheet, start, end, kind) == want


class TestLinearTrend:
    def test_exact_line(self):
        t = linear_trend([2.0, 4.0, 6.0])
        assert (t.slope, t.intercept, t.next_prediction) == (2.0, 0.0, 8.0)

    def test_flat(self):
        t = linear_trend([5.0, 5.0, 5.0])
        assert (t.slope, t.intercept, t.next_prediction) == (0.0, 5.0, 5.0)

    def test_hand_derived_case(self):
        # frozen from the normal-equation oracle: slope .6, intercept .5, next 3.5
        assert ols_line([1.0, 2.0, 2.0, 3.0]) == (0.6, 0.5, 3.5)
        t = linear_trend([1.0, 2.0, 2.0, 3.0])
        assert abs(t.slope - 0.6) < 1e-12
        assert abs(t.intercept - 0.5) < 1e-12
        assert abs(t.next_prediction - 3.5) < 1e-12

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            linear_trend([1.0])
        with pytest.raises(InsufficientData):
            linear_trend([])

    def test_matches_closed_form_on_random_series(self):
        rng = random.Random(99)
        for _ in range(300):
            values = [rng.uniform(-100, 100) for _ in range(rng.randint(2, 40))]
            slope, intercept, nxt = ols_line(values)
            t = linear_trend(values)
            for got, want in ((t.slope, slope), (t.intercept, intercept),
                              (t.next_prediction, nxt)):
                assert abs(got - want) <= 1e-9 * max(1.0, abs(got), abs(want))

    def test_local_optimum_probe(self):
        rng = random.Random(123)
        for _ in range(40):
            values = [rng.uniform(-50, 50) for _ in range(rng.randint(3, 15))]
            t = linear_trend(values)

            def sse(slope, intercept):
                return sum((slope * x + intercept - y) ** 2
                           for x, y in enumerate(values, start=1))

            best = sse(t.slope, t.intercept)
            for ds, di in ((1e-3, 0), (-1e-3, 0), (0, 1e-3), (0, -1e-3)):
                assert sse(t.slope + ds, t.intercept + di) >= best - 1e-12


class TestJobSpecs:
    def spec(self, **kw):
        start, end = parse_range_text(kw.pop("range", "A1:A5"))
        base = dict(id="j1", author="alice", group="g1", start=start, end=end,
                    kind="SUM", criterion=None, period_s=5.0,
                    output_snapshot="out", created_at=0.0, next_due=0.0)
        base.update(kw)
        return JobSpec(**base)

    def test_validation(self):
        validate_job_spec(self.spec())
        with pytest.raises(BadJobSpec):
            validate_job_spec(self.spec(kind="MODE"))
        with pytest.raises(BadJobSpec):
            validate_job_spec(self.spec(period_s=0.5))
        with pytest.raises(BadJobSpec):
            validate_job_spec(self.spec(kind="TREND", range="A1:B5"))
        with pytest.raises(BadJobSpec):
            validate_job_spec(self.spec(kind="COUNTIF"))
        with pytest.raises(BadJobSpec):
            parse_range_text("A1")

    def test_fixed_rate_advance(self):
        spec = self.spec(period_s=5.0)
        assert next_due_after(spec, 0.0) == 5.0
        assert next_due_after(spec, 5.0) == 10.0
        # three periods missed: one catch-up run happened, skip the rest
        assert next_due_after(spec, 17.0) == 20.0


class TestScheduler:
    def make_sheet(self, store, clock):
        store.create_account("alice", "s3cretpass")
        token = store.login("alice", "s3cretpass")
        store.create_sheet(token, "g1", "xyz")
        store.send_commands(token, "alice", "g1", [
            "set C2 text t P", "set C3 text t A", "set C4 text t P",
            "set C5 text t P", "set C6 text t A"])
        return token

    def test_runs_at_0_and_5_only(self, mkstore, clock):
        store = mkstore()
        token = self.make_sheet(store, clock)
        store.schedule_job(token, {
            "id": "p", "author": "alice", "group": "g1", "kind": "COUNTIF",
            "criterion": "P", "range": "C2:C6", "period_s": 5,
            "output_snapshot": "res"})
        t0 = clock.now
        assert len(store.run_due_jobs(t0)) == 1
        assert store.run_due_jobs(t0 + 4) == []
        assert len(store.run_due_jobs(t0 + 5)) == 1

    def test_result_rows_append(self, mkstore, clock):
        store = mkstore()
        token = self.make_sheet(store, clock)
        store.schedule_job(token, {
            "id": "p", "author": "alice", "group": "g1", "kind": "COUNTIF",
            "criterion": "P", "range": "C2:C6", "period_s": 5,
            "output_snapshot": "res"})
        t0 = clock.now
        result = store.run_due_jobs(t0)[0]
        assert result.value == Num(3.0)
        store.run_due_jobs(t0 + 5)
        results = parse_save_string(store.load_snapshot(token, "alice", "g1", "res"))
        assert results.cells[CellAddress(4, 1)] == Number(3.0)
        assert results.cells[CellAddress(4, 2)] == Number(3.0)
        assert results.cells[CellAddress(3, 1)] == Text("COUNTIF:P")

    def test_trend_job_row(self, mkstore, clock):
        store = mkstore()
        store.create_account("alice", "s3cretpass")
        token = store.login("alice", "s3cretpass")
        store.create_sheet(token, "g1", "xyz")
        store.send_commands(token, "alice", "g1", [
            "set B2 value n 2", "set B3 value n 4", "set B4 value n 6"])
        store.schedule_job(token, {
            "id": "t", "author": "alice", "group": "g1", "kind": "TREND",
            "range": "B2:B4", "period_s": 5, "output_snapshot": "res"})
        store.run_due_jobs(clock.now)
        results = parse_save_string(store.load_snapshot(token, "alice", "g1", "res"))
        assert results.cells[CellAddress(4, 1)] == Number(2.0)    # slope
        assert results.cells[CellAddress(5, 1)] == Number(0.0)    # intercept
        assert results.cells[CellAddress(6, 1)] == Number(8.0)    # prediction

    def test_trend_with_too_few_values_records_error(self, mkstore, clock):
        store = mkstore()
        store.create_account("alice", "s3cretpass")
        token = store.login("alice", "s3cretpass")
        store.create_sheet(token, "g1", "xyz")
        store.send_commands(token, "alice", "g1", ["set B2 value n 2"])
        store.schedule_job(token, {
            "id": "t", "author": "alice", "group": "g1", "kind": "TREND",
            "range": "B2:B4", "period_s": 5, "output_snapshot": "res"})
        result = store.run_due_jobs(clock.now)[0]
        assert result.value == Err(ErrorCode.VALUE)
        results = parse_save_string(store.load_snapshot(token, "alice", "g1", "res"))
        assert results.cells[CellAddress(4, 1)] == Text("#VALUE!")

    def test_missing_sheet_records_ref_and_keeps_job(self, mkstore, clock):
        store = mkstore()
        token = self.make_sheet(store, clock)
        store.schedule_job(token, {
            "id": "p", "author": "alice", "group": "g1", "kind": "SUM",
            "range": "C2:C6", "period_s": 5, "output_snapshot": "res"})
        del store._sheets[SheetKey("alice", "g1")]   # white-box: simulate corruption
        result = store.run_due_jobs(clock.now)[0]
        assert result.value == Err(ErrorCode.REF)
        assert "p" in store._jobs   # job stays alive
        assert store._jobs["p"].next_due > clock.now

    def test_author_only(self, mkstore, clock):
        store = mkstore()
        token = self.make_sheet(store, clock)
        store.create_account("bob", "passw0rd!")
        intruder = store.login("bob", "passw0rd!")
        job = {"id": "x", "author": "alice", "group": "g1", "kind": "SUM",
               "range": "C2:C6", "period_s": 5, "output_snapshot": "res"}
        with pytest.raises(AuthDenied):
            store.schedule_job(intruder, job)
        store.schedule_job(token, job)
        with pytest.raises(AuthDenied):
            store.list_jobs(intruder, "alice", "g1")
        with pytest.raises(AuthDenied):
            store.cancel_job(intruder, "x")
        assert store.list_jobs(token, "alice", "g1")[0]["id"] == "x"
        store.cancel_job(token, "x")
        with pytest.raises(NoSuchJob):
            store.cancel_job(token, "x")

    def test_jobs_survive_restart(self, tmp_path, clock):
        from gridmesh.store import Store
        store = Store(tmp_path / "d", scrypt_n=256, clock=clock)
        token = self.make_sheet(store, clock)
        store.schedule_job(token, {
            "id": "p", "author": "alice", "group": "g1", "kind": "COUNTIF",
            "criterion": "P", "range": "C2:C6", "period_s": 5,
            "output_snapshot": "res"})
        store.run_due_jobs(clock.now)
        store.close()
        reborn = Store(tmp_path / "d", scrypt_n=256, clock=clock)
        assert "p" in reborn._jobs
        assert reborn.run_due_jobs(clock.now) == []   # next_due persisted
        assert len(reborn.run_due_jobs(clock.now + 5)) == 1
        reborn.close()
