#!/usr/bin/env python3
"""
Unit tests for services/verdicts.py

Tests the trace adjudication functionality including:
- Consistency: roll-backs and conflicting confirmations
- Liveness, realized delta and optimistic responsiveness
- Stake weight and accountability preconditions
- Byzantine Agreement termination, agreement and validity
"""

from fractions import Fraction

import pytest

from services.verdicts import (Status, Verdict, check_accountability, check_ba, check_consistency,
                               check_liveness, check_optimistic_responsiveness, realized_delta, weight_at_least)
from utils.model import ExecutionConfig, Player, Roster
from utils.permitters import ResourceAllocation
from utils.trace import ExecutionTrace
from utils.transactions import StakeState, transfer_tx


def _trace(s0=None, players=("a", "b"), byzantine=(), duration=8, gst=0, active=True):
    roster = Roster(Player(p, {p}, byzantine=p in byzantine) for p in players)
    trace = ExecutionTrace(ExecutionConfig(duration=duration, gst=gst), roster, StakeState(s0 or {"a": 2}))
    if active:
        for p in players:
            trace.record(1, p, "status", data={"status": "active"})
    trace.duration = duration
    return trace


@pytest.fixture
def conflicting():
    """A trace with two transfers spending the same output."""
    trace = _trace()
    s = trace.stake_state()
    t1 = transfer_tx(s, (), "a", "b", 1, tx_id="t1")
    t2 = transfer_tx(s, (), "a", "c", 1, tx_id="t2")
    trace.register_tx(t1)
    trace.register_tx(t2)
    return trace


def _confirm(trace, player, t, *ids):
    trace.record(t, player, "confirm", data={"txs": list(ids)})


class TestConsistency:
    """Test cases for check_consistency."""

    def test_agreeing_players(self, conflicting):
        """Test nested confirmed sets are consistent."""
        _confirm(conflicting, "a", 2, "t1")
        _confirm(conflicting, "b", 3, "t1")

        verdict = check_consistency(conflicting)

        assert verdict.passed
        assert verdict.witness == {"snapshots": 2}

    def test_rollback(self, conflicting):
        """Test a transaction leaving a confirmed set is a roll-back."""
        _confirm(conflicting, "a", 2, "t1")
        _confirm(conflicting, "a", 3)

        verdict = check_consistency(conflicting)

        assert verdict.failed
        assert verdict.witness == {"kind": "rollback", "player": "a", "tx": "t1", "confirmed_at": 2, "dropped_at": 3}

    def test_conflict(self, conflicting):
        """Test two honest players confirming a double spend."""
        _confirm(conflicting, "a", 2, "t1")
        _confirm(conflicting, "b", 3, "t2")

        verdict = check_consistency(conflicting)

        assert verdict.failed
        assert verdict.witness["kind"] == "conflict"
        assert verdict.witness["txs"] == ["t1", "t2"]
        assert verdict.witness["players"] == ["a", "b"]
        assert verdict.witness["times"] == [2, 3]

    def test_invalid_confirmed_set(self, conflicting):
        """Test a single invalid confirmed set is reported."""
        _confirm(conflicting, "a", 2, "t1", "t2")

        assert check_consistency(conflicting).witness["kind"] == "invalid"

    def test_byzantine_confirmations_ignored(self):
        """Test only honest players are judged."""
        trace = _trace(byzantine=("b",))
        s = trace.stake_state()
        trace.register_tx(transfer_tx(s, (), "a", "b", 1, tx_id="t1"))
        trace.register_tx(transfer_tx(s, (), "a", "c", 1, tx_id="t2"))
        _confirm(trace, "a", 2, "t1")
        _confirm(trace, "b", 3, "t2")

        assert check_consistency(trace).passed


class TestLiveness:
    """Test cases for check_liveness and responsiveness."""

    def setup_method(self):
        """Set up a payment received at t=2 and confirmed at t=4 and t=5."""
        self.trace = _trace()
        self.trace.register_tx(transfer_tx(self.trace.stake_state(), (), "a", "b", 1, tx_id="t1"))
        self.trace.record(2, "a", "tx_receipt", data={"tx": "t1"})
        _confirm(self.trace, "a", 4, "t1")
        _confirm(self.trace, "b", 5, "t1")

    def test_within_latency(self):
        """Test confirmation by receipt plus ell passes."""
        verdict = check_liveness(self.trace, 3)

        assert verdict.passed
        assert verdict.witness == {"checked": 1, "exempt": 0}
        assert verdict.params == {"ell": 3}

    def test_late_confirmation(self):
        """Test the first player still missing the transaction is the witness."""
        verdict = check_liveness(self.trace, 2)

        assert verdict.failed
        assert verdict.witness == {"tx": "t1", "player": "b", "received_at": 2, "deadline": 4, "checked_at": 4}

    def test_deadline_past_horizon(self):
        """Test deadlines beyond the trace are exempt."""
        assert check_liveness(self.trace, 10).witness == {"checked": 0, "exempt": 1}

    def test_realized_delta(self):
        """Test realized delta is the largest gap, at least one."""
        self.trace.record(3, "b", "delivery", "d1", data={"sender": "a", "sent": 1, "delivered": 3})
        self.trace.record(1, "a", "delivery", "d2", data={"sender": "a", "sent": 1, "delivered": 1})

        assert realized_delta(self.trace) == 2

    def test_realized_delta_counts_from_gst(self):
        """Test gaps before GST are measured from GST."""
        trace = _trace(gst=5)
        trace.record(3, "b", "delivery", "d1", data={"sender": "a", "sent": 1, "delivered": 3})

        assert realized_delta(trace) == 1
        assert realized_delta(_trace()) is None

    def test_responsiveness(self):
        """Test the latency scales with the realized delta."""
        self.trace.record(2, "b", "delivery", "d1", data={"sender": "a", "sent": 1, "delivered": 2})

        verdict = check_optimistic_responsiveness(self.trace, lambda d: 3 * d)

        assert verdict.passed
        assert verdict.params == {"delta": 1, "ell": 3, "delta_star": 0}

    def test_responsiveness_not_applicable(self):
        """Test responsiveness is only judged without Byzantine players and with deliveries."""
        assert check_optimistic_responsiveness(self.trace, lambda d: d).status is Status.NOT_APPLICABLE
        byzantine = _trace(byzantine=("b",))
        verdict = check_optimistic_responsiveness(byzantine, lambda d: d)
        assert verdict.witness == {"reason": "Byzantine players present"}


class TestWeightAndAccountability:
    """Test cases for weight_at_least and check_accountability."""

    def test_initial_stake_weight(self):
        """Test the initial distribution counts as an honest confirmed subset."""
        trace = _trace({"a": 2, "z": 1}, players=("a", "z"))

        assert weight_at_least(["z"], "1/3", trace)
        assert not weight_at_least(["z"], Fraction(1, 2), trace)

    def test_external_weight(self):
        """Test external resources count at their change points."""
        trace = _trace({"a": 2, "z": 1}, players=("a", "z"))
        trace.allocations["pow"] = ResourceAllocation("pow", {"a": [(1, 1)], "z": [(1, 1)]})

        assert weight_at_least(["z"], Fraction(1, 2), trace)

    def test_accountability_needs_violation(self, conflicting):
        """Test accountability is not applicable to consistent traces."""
        verdict = check_accountability(conflicting, [])

        assert verdict.status is Status.NOT_APPLICABLE
        assert verdict.params == {"rho1": "1/3"}

    def test_accountability_without_certificates(self, conflicting):
        """Test a violation with no evidence fails accountability."""
        _confirm(conflicting, "a", 2, "t1")
        _confirm(conflicting, "b", 3, "t2")

        verdict = check_accountability(conflicting, [])

        assert verdict.failed
        assert verdict.witness == {"reason": "no conflicting certificates found"}


class TestByzantineAgreement:
    """Test cases for check_ba."""

    def _ba_trace(self, inputs, outputs):
        trace = _trace()
        trace.inputs.update(inputs)
        for player, (t, value) in outputs.items():
            trace.record(t, player, "output", data={"value": value})
        trace.duration = 8
        return {v.prop: v for v in check_ba(trace)}

    def test_all_pass(self):
        """Test unanimous inputs decided by everyone."""
        verdicts = self._ba_trace({"a": 1, "b": 1}, {"a": (5, 1), "b": (5, 1)})

        assert all(v.passed for v in verdicts.values())
        assert verdicts["termination"].witness == {"t_star": 5}
        assert verdicts["validity"].witness == {"input": 1}

    def test_disagreement(self):
        """Test different outputs fail agreement."""
        verdicts = self._ba_trace({"a": 1, "b": 0}, {"a": (5, 1), "b": (6, 0)})

        assert verdicts["agreement"].witness == {"players": ["a", "b"], "outputs": [1, 0]}
        assert verdicts["validity"].passed

    def test_silent_player(self):
        """Test an active honest player without output fails termination."""
        verdicts = self._ba_trace({"a": 1, "b": 1}, {"a": (5, 1)})

        assert verdicts["termination"].failed
        assert verdicts["termination"].witness["player"] == "b"

    def test_invalid_output(self):
        """Test unanimous inputs must be output."""
        verdicts = self._ba_trace({"a": 1, "b": 1}, {"a": (5, 0), "b": (5, 0)})

        assert verdicts["validity"].witness == {"player": "a", "output": 0, "input": 1}

    def test_nobody_active(self):
        """Test termination is not applicable when nobody was ever active."""
        trace = _trace(active=False)

        assert check_ba(trace)[0].status is Status.NOT_APPLICABLE


class TestVerdict:
    """Test cases for the Verdict record."""

    def test_to_dict(self):
        """Test verdicts serialize with the status value."""
        verdict = Verdict("liveness", Status.PASS, {"checked": 1}, {"ell": 3})

        assert verdict.to_dict() == {"property": "liveness", "status": "pass", "witness": {"checked": 1},
                                     "params": {"ell": 3}}
        assert not verdict.failed


if __name__ == "__main__":
    pytest.main([__file__])
