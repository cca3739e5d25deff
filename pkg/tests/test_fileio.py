import json
import re
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metricflows.fileio import ConfigError, load_config, parse_config, read_csv, write_csv
from metricflows.flows import FB, PROX
from metricflows.functions import Convention
from metricflows.integrate import IntegratorConfig, Trajectory, integrate
from metricflows.problems import example_4_2

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


class TestCsv:
    @settings(max_examples=50, deadline=None)
    @given(vals=st.lists(finite, min_size=8, max_size=8), with_obj=st.booleans())
    def test_round_trip_is_bit_exact(self, tmp_path_factory, vals, with_obj):
        v = np.array(vals)
        tr = Trajectory(v[:2], v[2:6].reshape(2, 2), v[6:8], v[6:8][::-1] if with_obj else None)
        path = tmp_path_factory.mktemp("csv") / "t.csv"
        back = read_csv(write_csv(tr, path))
        for a, b in [(tr.times, back.times), (tr.states, back.states), (tr.residuals, back.residuals)]:
            assert a.tobytes() == b.tobytes()
        assert (back.objective is None) == (not with_obj)
        if with_obj:
            assert back.objective.tobytes() == tr.objective.tobytes()

    def test_header(self, tmp_path):
        p = example_4_2()
        tr = integrate(p.spec, p.u0, IntegratorConfig("rk4", h=0.5, t_end=1.0))
        write_csv(tr, tmp_path / "a.csv")
        assert (tmp_path / "a.csv").read_text().splitlines()[0] == "t,u_0,u_1,residual"

    def test_identical_runs_give_identical_bytes(self, tmp_path):
        p = example_4_2()
        cfg = IntegratorConfig("rk4", h=0.01, t_end=5.0)
        a = write_csv(integrate(p.spec, p.u0, cfg), tmp_path / "a.csv")
        b = write_csv(integrate(p.spec, p.u0, cfg), tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()


def base(**extra):
    doc = {"schemaVersion": 1, "problem": "example_4_2"}
    doc.update(extra)
    return doc


INLINE = {
    "schemaVersion": 1,
    "inline": {
        "kind": "FB",
        "M": [[2.0, 0.0], [0.0, 1.0]],
        "gamma": 0.5,
        "A": {"type": "affine", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
        "B": {"type": "affine", "matrix": [[0.5, 0.0], [0.0, 0.5]], "offset": [1.0, 0.0]},
    },
    "u0": [1.0, 2.0],
}


class TestConfig:
    def test_builtin_defaults(self):
        rc = parse_config(base())
        assert rc.problem_name == "example_4_2" and rc.integrator.t_end == 100.0
        np.testing.assert_array_equal(rc.u0, example_4_2().u0)

    def test_overrides(self):
        rc = parse_config(base(overrides={"schedule": "reference", "gamma": 5.0, "convention": "exact"},
                               integrator={"method": "euler", "h": 0.1, "tEnd": 3.0}))
        assert rc.spec.gamma == 5.0 and rc.spec.conv == Convention.EXACT
        assert rc.spec.schedule.value(50.5) == 0.0
        assert rc.integrator.method == "euler" and rc.equilibrium is None

    def test_inline(self):
        rc = parse_config(INLINE)
        assert rc.spec.kind == FB and rc.spec.dim == 2 and rc.problem_name == "inline"

    def test_inline_prox(self):
        doc = {"schemaVersion": 1, "u0": [3.0],
               "inline": {"kind": "PROX", "M": 1.0, "gamma": 0.5, "convention": "exact",
                          "f": {"type": "l1", "weight": 0.2},
                          "g": {"type": "quadratic", "Q": [[1.0]], "b": [-1.0]}}}
        rc = parse_config(doc)
        assert rc.spec.kind == PROX
        tr = integrate(rc.spec, rc.u0, IntegratorConfig("rk4", h=0.05, t_end=40.0))
        # the state tends to x* - gamma g'(x*) = 0.9; its resolvent image is x* = 0.8
        assert tr.final_state[0] == pytest.approx(0.9, abs=1e-8)
        assert rc.spec.resolvent(tr.final_state)[0] == pytest.approx(0.8, abs=1e-8)

    @pytest.mark.parametrize("doc, field", [
        ({"problem": "example_4_2"}, "schemaVersion"),
        (base(schemaVersion=2), "schemaVersion"),
        ({**base(), "inline": {}}, "exactly one"),
        (base(problem="nope"), "problem"),
        (base(overrides={"gamma": -1}), "overrides.gamma"),
        (base(overrides={"convention": "weird"}), "overrides.convention"),
        (base(integrator={"h": 0}), "integrator"),
        (base(u0=[1.0]), "u0"),
        ({**INLINE, "inline": {**INLINE["inline"], "A": {"type": "magic"}}}, "inline.A.type"),
        ({**INLINE, "inline": {**INLINE["inline"], "gamma": None}}, "inline.gamma"),
        ({**INLINE, "inline": {k: v for k, v in INLINE["inline"].items() if k != "M"}}, "inline.M"),
        ({k: v for k, v in INLINE.items() if k != "u0"}, "u0"),
    ])
    def test_errors_name_the_field(self, doc, field):
        with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
            parse_config(doc)

    def test_malformed_json_reports_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"schemaVersion": 1,\n')
        with pytest.raises(ConfigError, match="line 2 column 1"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")

    def test_load_round_trip(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(base(outputs={"dir": "o", "csv": "x.csv"})))
        rc = load_config(path)
        assert rc.output_path("csv", "trajectory.csv").as_posix() == "o/x.csv"
        assert rc.output_path("csv", "trajectory.csv", tmp_path).name == "x.csv"


class TestDocumentedExamples:
    DOC = Path(__file__).resolve().parents[1] / "docs" / "config.md"

    def blocks(self):
        return [json.loads(b) for b in re.findall(r"```json\n(.*?)```", self.DOC.read_text(), re.S)]

    def test_examples_parse(self):
        docs = self.blocks()
        assert len(docs) == 2
        for doc in docs:
            parse_config(doc)

    def test_inline_example_reaches_its_stated_equilibrium(self):
        doc = self.blocks()[1]
        rc = parse_config(doc)
        tr = integrate(rc.spec, rc.u0, IntegratorConfig("rk4", h=0.05, t_end=200.0))
        np.testing.assert_allclose(tr.final_state, rc.equilibrium, atol=1e-10)
