import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfmlimits.boundary import safe_operating_area
from gfmlimits.circuit import CircuitParams
from gfmlimits.errors import ScenarioSyntaxError, ScenarioValidationError
from gfmlimits.scenario_io import (CSV_FORMAT, manifest_entries, parse_scenario,
                                   read_manifest, read_timeseries_csv, scenario_from_manifest,
                                   serialize_scenario, write_manifest, write_soa,
                                   write_soa_manifest, write_timeseries)
from gfmlimits.simulation import TIMESERIES_COLUMNS, Event, Scenario, TimeSeries, run

from conftest import corpus_paths

SAG_SCRIPT = """\
# dc-link sag scenario
init vdc 250
init vref_amp 120
init load P=5e3 Q=20e3
event 0.2 set_vdc 150
event 0.4 set_vref_amp 60
event 0.6 set_vref_amp 120
event 0.8 set_load P=5e3 Q=-20e3
"""

SHORT_SCRIPT = """\
param t_end 0.05
init vdc 250
init load P=5e3 Q=20e3
event 0.02 set_vdc 150
event 0.04 set_load P=5e3 Q=-20e3
"""


class TestParse:
    def test_sag_script(self):
        sc = parse_scenario(SAG_SCRIPT)
        assert len(sc.events) == 4
        assert sc.v_dc == 250 and sc.vref_amp == 120 and sc.load == (5e3, 20e3)
        assert [e.kind for e in sc.events] == ["set_vdc", "set_vref_amp", "set_vref_amp",
                                               "set_load"]
        assert sc.events[-1].value == (5e3, -20e3)

    def test_empty_file_gives_defaults(self):
        assert parse_scenario("") == Scenario()
        assert parse_scenario("# nothing\n\n   \n").events == ()

    def test_all_parameters(self):
        text = """param L_f 1e-3
param C_f 10e-6
param f_sw 25e3
param f_grid 60
param t_end 0.5
param dt 0.5e-6
param lambda 2500
param bound 2e5
param t_sample 1e-6
param t_delay 0.5e-6
"""
        sc = parse_scenario(text)
        assert sc.params == CircuitParams(L_f=1e-3, C_f=10e-6, f_sw=25e3)
        assert (sc.f_grid, sc.t_end, sc.lam, sc.bound, sc.t_sample, sc.t_delay) == \
            (60, 0.5, 2500, 2e5, 1e-6, 0.5e-6)

    def test_events_sorted_stably(self):
        sc = parse_scenario("event 0.5 set_vdc 200\nevent 0.1 set_vref_amp 90\n"
                            "event 0.5 set_vref_amp 80\n")
        assert [(e.t, e.kind) for e in sc.events] == [(0.1, "set_vref_amp"), (0.5, "set_vdc"),
                                                      (0.5, "set_vref_amp")]

    def test_out_of_horizon(self):
        with pytest.raises(ScenarioValidationError):
            parse_scenario("param t_end 1.0\nevent 2.0 set_vdc 150\n")

    def test_step_too_large_names_invariant(self):
        with pytest.raises(ScenarioValidationError, match="1/\\(20 f_sw\\)"):
            parse_scenario("param dt 1e-5\n")

    def test_filter_ratio_validated(self):
        with pytest.raises(ScenarioValidationError, match="design ratio"):
            parse_scenario("param f_sw 5000\n")

    @pytest.mark.parametrize("text,line", [
        ("init vdc 250\nfrobnicate 1\n", 2),
        ("param L_f\n", 1),
        ("param colour 3\n", 1),
        ("param dt 1e-6\nparam dt 1e-6\n", 2),
        ("\n\ninit load P=5e3\n", 3),
        ("init load P=5e3 Q=1 P=2\n", 1),
        ("init vdc abc\n", 1),
        ("init vdc 250\ninit vdc 200\n", 2),
        ("event 0.1 set_power 5\n", 1),
        ("event 0.1 set_vdc\n", 1),
        ("event 0.1 set_vdc nan\n", 1),
        ("init vref_amp 1 2\n", 1),
    ])
    def test_syntax_errors_carry_line(self, text, line):
        with pytest.raises(ScenarioSyntaxError) as info:
            parse_scenario(text, source="demo.scn")
        assert info.value.line_number == line
        assert f"demo.scn:line {line}" in str(info.value)

    def test_bad_event_value_names_line(self):
        with pytest.raises(ScenarioValidationError, match="line 2"):
            parse_scenario("init vdc 250\nevent 0.1 set_vdc -5\n")

    def test_comments_and_whitespace(self):
        sc = parse_scenario("  init   vdc   300   # raised link\n#event 0.1 set_vdc 1\n")
        assert sc.v_dc == 300 and sc.events == ()


finite_pos = st.floats(1e-3, 1e4, allow_nan=False, allow_infinity=False)


@st.composite
def scenarios(draw):
    t_end = draw(st.integers(0, 4000)) * 0.5e-6 * 100
    n = draw(st.integers(0, 5))
    times = sorted(draw(st.lists(st.floats(0, 1).map(lambda f: f * t_end), min_size=n,
                                 max_size=n)))
    events = []
    for t in times:
        kind = draw(st.sampled_from(["set_vdc", "set_vref_amp", "set_load"]))
        if kind == "set_load":
            value = (draw(st.floats(0, 5e4)), draw(st.floats(-5e4, 5e4)))
        else:
            value = draw(finite_pos)
        events.append(Event(t, kind, value))
    return Scenario(v_dc=draw(finite_pos), vref_amp=draw(finite_pos),
                    load=(draw(st.floats(0, 5e4)), draw(st.floats(-5e4, 5e4))),
                    t_end=t_end, events=tuple(events),
                    lam=draw(st.one_of(st.none(), finite_pos)),
                    bound=draw(st.one_of(st.none(), finite_pos)),
                    ref_phase=draw(st.floats(-math.pi, math.pi)),
                    params=CircuitParams(R_line=draw(st.floats(0, 1)),
                                         L_line=draw(st.floats(0, 1e-3))))


class TestRoundTrip:
    @given(scenarios())
    def test_parse_serialize(self, sc):
        assert parse_scenario(serialize_scenario(sc)) == sc

    @pytest.mark.parametrize("path", corpus_paths(), ids=lambda p: p.name)
    def test_corpus_text(self, path):
        sc = parse_scenario(path.read_text())
        text = serialize_scenario(sc)
        assert parse_scenario(text) == sc
        assert serialize_scenario(parse_scenario(text)) == text


def tiny_series(n):
    t = np.arange(n) * 1e-5
    vals = np.linspace(-1.234567891234, 98765.4321, n)
    return TimeSeries(t=t, x_d=vals, u_o=vals * 1.1, i_L=vals / 3, i_o=-vals, v_dc=vals + 250,
                      T=np.where(np.arange(n) % 2, 1, -1), s=vals * 1e3, margin=vals / 1e5,
                      violated=np.arange(n) % 3 == 0, bound=vals, switch_times=np.zeros(0),
                      sample_period=1e-5, lam=2000.0)


class TestTimeseriesCsv:
    def test_empty(self, tmp_path):
        path = tmp_path / "ts.csv"
        write_timeseries(TimeSeries.empty(1e-5, 2000.0), path)
        assert path.read_text() == ",".join(TIMESERIES_COLUMNS) + "\n"

    def test_three_records(self, tmp_path):
        path = tmp_path / "ts.csv"
        write_timeseries(tiny_series(3), path)
        text = path.read_text()
        assert text.endswith("\n") and len(text.splitlines()) == 4
        assert text.splitlines()[0] == "t,x_d,u_o,i_L,i_o,v_dc,T,s,margin,violated"

    @given(st.lists(st.floats(-1e12, 1e12, allow_nan=False), min_size=1, max_size=40))
    @settings(max_examples=30)
    def test_values_reparse_at_nine_digits(self, tmp_path_factory, values):
        path = tmp_path_factory.mktemp("csv") / "ts.csv"
        v = np.array(values)
        z = np.zeros_like(v)
        series = TimeSeries(t=np.arange(len(v), dtype=float), x_d=v, u_o=z, i_L=z, i_o=z,
                            v_dc=z, T=np.ones(len(v), int), s=v, margin=z,
                            violated=np.zeros(len(v), bool), bound=z, switch_times=z,
                            sample_period=1.0, lam=1.0)
        write_timeseries(series, path)
        header, data = read_timeseries_csv(path)
        expected = np.array([float(CSV_FORMAT % x) for x in v])
        assert np.array_equal(data[:, header.index("x_d")], expected)
        assert np.array_equal(data[:, header.index("s")], expected)

    def test_flags_written_as_integers(self, tmp_path):
        path = tmp_path / "ts.csv"
        write_timeseries(tiny_series(6), path)
        rows = path.read_text().splitlines()[1:]
        assert [r.split(",")[-1] for r in rows] == ["1", "0", "0", "1", "0", "0"]
        assert [r.split(",")[6] for r in rows] == ["-1", "1", "-1", "1", "-1", "1"]

    def test_simulation_output(self, tmp_path, step_run):
        series, _ = step_run
        path = tmp_path / "ts.csv"
        write_timeseries(series, path)
        header, data = read_timeseries_csv(path)
        assert data.shape == (len(series), 10)
        assert np.all(np.diff(data[:, 0]) > 0)

    def test_unwritable_destination(self, tmp_path):
        target = tmp_path / "missing" / "ts.csv"
        with pytest.raises(OSError, match="missing"):
            write_timeseries(tiny_series(2), target)


class TestManifest:
    def _manifest(self, tmp_path, name, sc, text=None):
        series, metrics = run(sc)
        path = tmp_path / name
        write_manifest(sc, sc.controller_config(), metrics, path, source_text=text)
        return path, series

    def test_stable_except_timestamp(self, tmp_path):
        sc = parse_scenario(SHORT_SCRIPT)
        a, _ = self._manifest(tmp_path, "a.txt", sc, SHORT_SCRIPT)
        b, _ = self._manifest(tmp_path, "b.txt", sc, SHORT_SCRIPT)
        la = [l for l in a.read_text().splitlines() if not l.startswith("timestamp")]
        lb = [l for l in b.read_text().splitlines() if not l.startswith("timestamp")]
        assert la == lb
        keys = [l.split(" = ")[0] for l in la]
        assert keys[:3] == ["tool", "input_sha256", "scenario_sha256"]
        assert "param.dt" in keys and "metrics.violation_count" in keys

    @pytest.mark.parametrize("path", [p for p in corpus_paths() if p.name != "dc_link_step.scn"],
                             ids=lambda p: p.name)
    def test_refeed_reproduces_series(self, tmp_path, path):
        text = path.read_text()
        sc = parse_scenario(text)
        mpath, series = self._manifest(tmp_path, "m.txt", sc, text)
        again = scenario_from_manifest(read_manifest(mpath))
        # the manifest pins the resolved pole
        assert again == replace(sc, lam=sc.controller_config().lam)
        series2, _ = run(again)
        for x, y in zip(series.columns(), series2.columns()):
            assert np.array_equal(x, y)

    def test_resolved_defaults_listed(self):
        sc = Scenario(t_end=0.0)
        entries = dict(manifest_entries(sc, sc.controller_config(), None))
        assert entries["param.lambda"] == repr(2000.0)
        assert entries["param.bound"] == "auto"
        assert entries["param.t_sample"] == repr(1.5e-6)
        assert entries["input_sha256"] == "none"

    def test_soa_manifest_axes_verbatim(self, tmp_path):
        grid = safe_operating_area([150, 200], [120], [(5e3, 2e4)], 2 * math.pi * 50,
                                   CircuitParams())
        path = tmp_path / "soa.manifest.txt"
        write_soa_manifest({"vdc": "150:200:50", "vref": "120"}, grid, path, timestamp="T0")
        m = read_manifest(path)
        assert m["axis.vdc"] == "150:200:50" and m["axis.vref"] == "120"
        assert m["cells"] == "2" and m["timestamp"] == "T0"

    def test_soa_csv(self, tmp_path):
        grid = safe_operating_area([150, 250], [120], [(5e3, 2e4)], 2 * math.pi * 50,
                                   CircuitParams())
        path = tmp_path / "soa.csv"
        write_soa(grid, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "v_dc,v_ref,P,Q,worst_case_V,margin,satisfied"
        assert [l.split(",")[-1] for l in lines[1:]] == ["0", "1"]
