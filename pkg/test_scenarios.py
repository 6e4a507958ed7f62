#!/usr/bin/env python3
"""
Unit tests for the scenarios package and main.py

Tests the scenario functionality including:
- The builder registry and parameter binding
- Scenario and suite files, seed ranges and expectations
- Custom scenarios described entirely by a file
- Partition, optimistic-responsiveness and payment-circle constructions
- Long-range, split-brain, fresh-player and positive scenario builders
- Suite runs, reports and the command line exit codes
- Every registered scenario run end to end at its default parameters
"""

import json
import os
from fractions import Fraction

import pytest

from main import EXIT_CONFIG, EXIT_MISMATCH, EXIT_OK, main, parse_params
from scenarios import SCENARIOS, build_scenario, get_scenario, list_scenarios
from scenarios.base import make_roster
from scenarios.custom import scenario_custom
from scenarios.impossibility import (BeaconMachine, FaultScheduleStrategy, cash_out_time, circle_concentrating_subset,
                                     circle_transactions, parse_faults, scenario_long_range, scenario_or_attack,
                                     scenario_partition, scenario_payment_circle, scenario_pi_family,
                                     scenario_split_brain)
from scenarios.loader import load_scenario, load_suite, parse_seeds, read_toml, scenario_from_sections
from scenarios.positive import (scenario_accountability, scenario_committees, scenario_positive_da,
                                scenario_positive_qp)
from scenarios.runner import run_scenario, run_suite, summarize, write_report
from services.losa_gafni import output_timeslot
from services.pos_hotstuff import liveness_bound
from utils.engine import StepInput
from utils.errors import ConfigurationError
from utils.model import ExecutionConfig
from utils.trace import ExecutionTrace
from utils.transactions import StakeState

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs")

CIRCLE_SUITE = """
version = 1

[suite]
name = "circle"
seeds = "0..1"

[[run]]
scenario = "payment_circle"
params = { n = 2 }
"""


@pytest.fixture
def circle_suite(tmp_path):
    path = tmp_path / "circle.toml"
    path.write_text(CIRCLE_SUITE)
    return str(path)


class TestRegistry:
    """Test cases for the scenario registry."""

    def test_unknown_scenario(self):
        """Test unknown names list the known ones."""
        with pytest.raises(ConfigurationError, match="partition"):
            get_scenario("nope")

    def test_bad_parameters(self):
        """Test parameters are bound against the builder signature."""
        with pytest.raises(ConfigurationError) as excinfo:
            build_scenario("partition", {"bogus": 1})
        assert excinfo.value.location == "params"

    def test_list_scenarios(self):
        """Test every registered scenario is listed with its description."""
        rows = list_scenarios()

        assert [name for name, _ in rows] == sorted(SCENARIOS)
        assert all(description for _, description in rows)


class TestLoader:
    """Test cases for scenario and suite files."""

    @pytest.mark.parametrize("value, expected", [
        ("0..3", [0, 1, 2, 3]),
        ("1,5,9", [1, 5, 9]),
        (7, [7]),
        ([2, 4], [2, 4]),
    ])
    def test_parse_seeds(self, value, expected):
        """Test ranges, lists and single seeds."""
        assert parse_seeds(value) == expected

    @pytest.mark.parametrize("value", ["3..1", "a..b", True])
    def test_bad_seeds(self, value):
        """Test malformed seed ranges are rejected."""
        with pytest.raises(ConfigurationError, match="seed"):
            parse_seeds(value)

    def test_version_required(self, tmp_path):
        """Test files must declare the supported version."""
        path = tmp_path / "old.toml"
        path.write_text('version = 2\n[scenario]\nname = "partition"\n')

        with pytest.raises(ConfigurationError, match="unsupported version"):
            read_toml(str(path))

    def test_missing_file(self, tmp_path):
        """Test a missing file names its path."""
        with pytest.raises(ConfigurationError) as excinfo:
            read_toml(str(tmp_path / "absent.toml"))
        assert excinfo.value.location.endswith("absent.toml")

    def test_expectations(self):
        """Test flat expectations apply to every instance and nested ones to one."""
        spec = scenario_from_sections({
            "scenario": {"name": "partition"},
            "expect": {"agreement": "fail", "I1": {"agreement": "pass"}},
        })

        assert spec.instance("I0").expected("agreement") == "fail"
        assert spec.instance("I1").expected("agreement") == "pass"
        assert spec.instance("I2").expected("agreement") == "fail"

    def test_bad_expectations(self):
        """Test unknown statuses and instances are rejected."""
        with pytest.raises(ConfigurationError, match="maybe"):
            scenario_from_sections({"scenario": {"name": "partition"}, "expect": {"agreement": "maybe"}})
        with pytest.raises(ConfigurationError, match="I9"):
            scenario_from_sections({"scenario": {"name": "partition"}, "expect": {"I9": {"agreement": "pass"}}})

    def test_name_required(self):
        """Test a scenario section with a name is required."""
        with pytest.raises(ConfigurationError):
            scenario_from_sections({"params": {}})

    def test_shipped_configs_load(self):
        """Test every scenario file in configs/ parses."""
        for name in ("partition", "or_attack", "payment_circle", "custom_da", "custom_qp"):
            spec = load_scenario(os.path.join(CONFIG_DIR, f"{name}.toml"))
            assert spec.instances or spec.static_checks

    def test_load_suite(self, circle_suite):
        """Test suite files become plain-data runs with overridable seeds."""
        suite = load_suite(circle_suite)
        overridden = load_suite(circle_suite, seeds="5", workers=3)

        assert suite.name == "circle"
        assert suite.seeds == [0, 1]
        assert len(suite.runs) == 1
        assert overridden.seeds == [5]
        assert overridden.workers == 3

    def test_empty_suite(self, tmp_path):
        """Test suites need at least one run."""
        path = tmp_path / "empty.toml"
        path.write_text('version = 1\n[suite]\nname = "empty"\n')

        with pytest.raises(ConfigurationError, match="run"):
            load_suite(str(path))


class TestCustomScenarios:
    """Test cases for scenario_custom."""

    def test_unknown_protocol(self):
        """Test the protocol must be one of the known ones."""
        with pytest.raises(ConfigurationError) as excinfo:
            scenario_custom({"scenario": {"name": "custom", "protocol": "bogus"}, "players": {"honest": ["a"]}})
        assert excinfo.value.location == "scenario.protocol"

    def test_honest_player_required(self):
        """Test at least one honest player is needed."""
        with pytest.raises(ConfigurationError) as excinfo:
            scenario_custom({"scenario": {"name": "custom"}, "players": {"byzantine": ["z"]}})
        assert excinfo.value.location == "players.honest"

    def test_unknown_check(self):
        """Test check names are validated."""
        with pytest.raises(ConfigurationError, match="unknown check"):
            scenario_custom({"scenario": {"name": "custom"}, "players": {"honest": ["a"]}, "stake": {"a": 1},
                             "params": {"checks": ["speed"]}})

    def test_losa_gafni_with_crashes(self):
        """Test the shipped Losa-Gafni file meets all of its expectations."""
        spec = load_scenario(os.path.join(CONFIG_DIR, "custom_da.toml"))

        result = run_scenario(spec, seed=0)

        assert result.matched
        assert result.verdict("I0", "agreement").passed


class TestPartition:
    """Test cases for the partition construction."""

    def test_parameters_checked(self):
        """Test the decision must fall before GST."""
        with pytest.raises(ConfigurationError, match="decide_at"):
            scenario_partition(gst=5, decide_at=6)

    def test_partition_breaks_agreement(self):
        """Test I0 disagrees while each side alone agrees."""
        result = run_scenario(scenario_partition(), seed=0)

        assert result.matched
        assert result.verdict("I0", "agreement").failed
        assert result.verdict("I1", "agreement").passed
        assert result.verdict("I2", "agreement").passed
        assert result.instances["I1"].trace.output_of("a0")[1] == 0
        assert result.instances["I2"].trace.output_of("b0")[1] == 1

    def test_sides_cannot_tell(self):
        """Test each side sees the same prefix in I0 and in its own instance."""
        result = run_scenario(scenario_partition(), seed=0)

        prefix = [r for r in result.records if r["property"].startswith("indistinguishable")]
        assert len(prefix) == 2
        assert all(r["status"] == "pass" for r in prefix)

    def test_setting_verdicts_added(self):
        """Test every instance is checked against its setting and the hierarchy."""
        result = run_scenario(scenario_partition(), seed=0, instances=["I1"])

        props = {r["property"] for r in result.records if r["instance"] == "I1"}
        assert {"dynamically_available", "setting_hierarchy"} <= props
        assert "I0" not in result.instances


class TestOptimisticResponsiveness:
    """Test cases for the sleeping-versus-slow construction."""

    def test_fast_confirmer(self):
        """Test the fast confirmer is responsive alone and inconsistent when both sides are slow."""
        result = run_scenario(scenario_or_attack(), seed=0)

        assert result.matched
        assert result.verdict("I0", "responsiveness").passed
        witness = result.verdict("I2", "consistency").witness
        assert witness["kind"] == "conflict"
        assert witness["txs"] == ["tr0", "tr1"]


class TestPaymentCircle:
    """Test cases for the payment circle."""

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
    def test_static_checks(self, n):
        """Test the concentrating subset and the round prefixes for several circle sizes."""
        spec = scenario_payment_circle(n=n)

        assert all(check().passed for check in spec.static_checks)
        assert len(spec.instances) == (1 if n >= 3 else 0)

    def test_concentrating_subset(self):
        """Test the subset leaves every unit with p0."""
        subset = circle_concentrating_subset(4)
        s = StakeState({f"p{i}": 1 for i in range(4)})

        assert len(circle_transactions(4)) == 16
        assert len(subset) == 6
        assert s.balances(subset) == {"p0": 4}

    def test_at_least_one_player(self):
        """Test empty circles are rejected."""
        with pytest.raises(ConfigurationError):
            scenario_payment_circle(n=0)


class TestSuites:
    """Test cases for run_suite and the report helpers."""

    def test_run_suite(self, circle_suite):
        """Test records come back sorted and matched."""
        records = run_suite(load_suite(circle_suite), workers=1)

        assert [r["seed"] for r in records] == [0, 0, 1, 1]
        assert summarize(records) == {"records": 4, "matched": 4, "mismatched": 0, "pass": 4, "fail": 0, "n/a": 0}

    def test_write_report(self, tmp_path, circle_suite):
        """Test reports are written one JSON record per line."""
        records = run_suite(load_suite(circle_suite), workers=1)
        path = tmp_path / "reports" / "circle.jsonl"

        assert write_report(records, str(path)) == 4
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert rows[0]["scenario"] == "payment_circle"


class TestCommandLine:
    """Test cases for main.main."""

    def test_list(self, capsys):
        """Test list-scenarios prints the registry."""
        assert main(["list-scenarios"]) == EXIT_OK
        assert "partition" in capsys.readouterr().out

    def test_missing_file(self, tmp_path):
        """Test missing files are configuration errors."""
        assert main(["run", str(tmp_path / "absent.toml")]) == EXIT_CONFIG

    def test_run_and_verify(self, tmp_path):
        """Test run writes one trace per instance and verify re-checks them."""
        out = tmp_path / "partition.jsonl"

        assert main(["run", os.path.join(CONFIG_DIR, "partition.toml"), "--out", str(out)]) == EXIT_OK
        for instance in ("I0", "I1", "I2"):
            assert (tmp_path / f"partition-{instance}.jsonl").exists()

        assert main(["verify", str(tmp_path / "partition-I0.jsonl"), "--props", "agreement"]) == EXIT_MISMATCH
        assert main(["verify", str(tmp_path / "partition-I1.jsonl"), "--props", "agreement,consistency"]) == EXIT_OK
        assert main(["verify", str(tmp_path / "partition-I1.jsonl"), "--props", "speed"]) == EXIT_CONFIG

    def test_verify_missing_parameter(self, tmp_path):
        """Test liveness needs ell."""
        out = tmp_path / "partition.jsonl"
        main(["run", os.path.join(CONFIG_DIR, "partition.toml"), "--out", str(out)])

        assert main(["verify", str(tmp_path / "partition-I1.jsonl"), "--props", "liveness"]) == EXIT_CONFIG

    def test_suite(self, tmp_path, circle_suite):
        """Test suite writes its report and exits cleanly."""
        report = tmp_path / "circle.jsonl"

        assert main(["suite", circle_suite, "--report", str(report), "--workers", "1"]) == EXIT_OK
        assert len(report.read_text().splitlines()) == 4

    def test_parse_params(self):
        """Test key=value parsing."""
        assert parse_params(["ell=208", "rho = 1/3"]) == {"ell": "208", "rho": "1/3"}
        with pytest.raises(ConfigurationError):
            parse_params(["ell"])


class TestLongRangeAndSplitBrain:
    """Test cases for the long-range and split-brain constructions."""

    def test_long_range_unknown_variant(self):
        """Test only the plain and ephemeral variants exist."""
        with pytest.raises(ConfigurationError) as excinfo:
            scenario_long_range("vdf")

        assert excinfo.value.location == "params.protocol"

    @pytest.mark.parametrize("protocol,consistency,malleable", [
        ("plain", "fail", "pass"),
        ("ephemeral", "pass", "fail"),
    ])
    def test_long_range_expectations(self, protocol, consistency, malleable):
        """Test only the plain variant loses consistency to the replay."""
        spec = scenario_long_range(protocol)

        assert spec.instance_names() == ["I1", "I2", "I3"]
        assert spec.instance("I3").expected("consistency") == consistency
        assert spec.expected("time_malleable") == malleable
        assert spec.prefix_checks[0].until == "honest_until"

    def test_cash_out_time(self):
        """Test the cash-out timeslot follows the last lasting confirmation."""
        trace = ExecutionTrace(ExecutionConfig(duration=8), make_roster(["p1", "p2"]), StakeState({"p0": 4}))
        trace.record(3, "p1", "confirm", data={"txs": ["t1"]})
        trace.record(4, "p2", "confirm", data={"txs": ["t1"]})
        trace.record(5, "p2", "confirm", data={"txs": []})
        trace.record(6, "p2", "confirm", data={"txs": ["t1"]})

        assert cash_out_time(trace, "t1", ["p1", "p2"]) == 7
        assert cash_out_time(trace, "t2", ["p1"]) is None

    def test_split_brain_timeline(self):
        """Test t* and GST follow ell and the corrupted instance loses consistency."""
        spec = scenario_split_brain(ell=4)

        assert spec.params == {"delta": 2, "ell": 4, "t_star": 5, "gst": 10}
        assert spec.instance_names() == ["I0", "I1", "I2", "I3", "I4", "I5"]
        assert spec.instance("I3").expected("consistency") == "fail"
        assert spec.instance("I1").expected("consistency") == "pass"
        assert [check.prop for check in spec.prefix_checks][0] == "indistinguishable:I1/I3"


class TestPiFamily:
    """Test cases for the fresh-player construction."""

    def test_parse_faults(self):
        """Test crash and delay entries are keyed by timeslot."""
        assert parse_faults({"2": ["crash", 1], "3": ["delay", 2, 4]}, 3) == {2: ("crash", 1, 0), 3: ("delay", 2, 4)}
        assert parse_faults(None, 3) == {}

    @pytest.mark.parametrize("faults", [{"2": ["crash", 5]}, {"2": ["delay", 1]}, {"2": ["sleep", 1]}])
    def test_bad_faults(self, faults):
        """Test unknown kinds, pools outside 1..s and zero delays are rejected."""
        with pytest.raises(ConfigurationError) as excinfo:
            parse_faults(faults, 3)

        assert excinfo.value.location == "params.faults.2"

    def test_needs_players(self):
        """Test at least one pool and one timeslot are required."""
        with pytest.raises(ConfigurationError):
            scenario_pi_family(s=0)

    def test_rho_expectation(self):
        """Test one faulty player among two breaks the 1/3 bound."""
        assert scenario_pi_family(s=2, faults={"2": ["crash", 1]}).instance("I0").expected("rho_bounded") == "fail"
        assert scenario_pi_family(s=4, faults={"2": ["crash", 1]}).instance("I0").expected("rho_bounded") == "pass"
        assert scenario_pi_family(s=2).params["faults"] == {}

    def test_beacon_machine(self):
        """Test a beacon is sent on the first step only."""
        machine = BeaconMachine("P1-t1")

        assert len(machine.on_step(StepInput(1)).messages) == 1
        assert machine.on_step(StepInput(1)).messages == []

    def test_delayed_beacon(self):
        """Test a delayed player speaks once at its release timeslot."""
        strategy = FaultScheduleStrategy({"P1-t2": 4})

        assert strategy.on_step("P1-t2", 3, StepInput(3)).messages == []
        assert len(strategy.on_step("P1-t2", 4, StepInput(4)).messages) == 1
        assert strategy.on_step("P1-t2", 5, StepInput(5)).messages == []
        assert strategy.on_step("P2-t2", 4, StepInput(4)).messages == []


class TestPositiveConstructions:
    """Test cases for the positive scenario builders."""

    def test_positive_qp_instances(self):
        """Test the quasi-permissionless runs and their liveness bound."""
        spec = scenario_positive_qp()

        assert spec.instance_names() == ["honest", "equivocating", "withholding", "churn", "responsive",
                                         "fixed-wait"]
        assert spec.params["ell"] == liveness_bound(4, 2)
        assert spec.instance("fixed-wait").expected("responsiveness") == "fail"
        assert spec.instance("honest").rho == Fraction(1, 3)

    def test_positive_da_build(self):
        """Test the agreement instances build executions with their inputs."""
        spec = scenario_positive_da()
        execution = spec.instance("mixed").build(0)

        assert spec.instance_names() == ["unanimous", "mixed", "crash", "delay"]
        assert spec.params["duration"] == output_timeslot(5, 2) + 2
        assert execution.trace.inputs == {"c1": 0, "c2": 1, "c3": 0, "c4": 1, "c5": 1}

    def test_accountability_and_committees(self):
        """Test the expected failures of the accountability and committee runs."""
        assert scenario_accountability().instance("I0").expected("consistency") == "fail"
        committees = scenario_committees()
        assert committees.instance("I0").expected("reactive:static") == "fail"
        assert committees.instance("I0").expected("reactive:rolling") == "pass"



class TestShippedScenarios:
    """Test cases running every registered scenario end to end."""

    @pytest.mark.parametrize("name,params", [(name, {}) for name in sorted(SCENARIOS)]
                             + [("long_range", {"protocol": "ephemeral"})])
    def test_defaults_match_expectations(self, name, params):
        """Test every verdict of a default run matches its expectation."""
        result = run_scenario(build_scenario(name, params), seed=0)

        assert result.records
        assert result.mismatches() == []

    @pytest.mark.parametrize("filename", ["custom_qp.toml", "custom_da.toml"])
    def test_custom_files_match_expectations(self, filename):
        """Test the shipped custom scenario files run clean."""
        result = run_scenario(load_scenario(os.path.join(CONFIG_DIR, filename)), seed=0)

        assert result.mismatches() == []

    def test_accountability_blames_the_equivocator(self):
        """Test the accountability run finishes and blames only the stake majority."""
        result = run_scenario(build_scenario("accountability", {}), seed=0)

        assert result.verdict("I0", "consistency").failed
        verdict = result.verdict("I0", "accountability")
        assert verdict.passed
        assert verdict.witness["blamed"] == ["b"]


if __name__ == "__main__":
    pytest.main([__file__])
