#!/usr/bin/env python3
"""
Unit tests for services/losa_gafni.py and services/baselines.py

Tests the agreement protocols including:
- Round counts, output timeslots and the coin ledger
- Attestation chains and the convinced rule
- Full Losa-Gafni executions with unanimous and mixed inputs
- The naive-majority and fixed-wait baselines
"""

import pytest

from services.baselines import FixedWaitConfirmer, NaiveMajorityBA
from services.losa_gafni import (DEFAULT_OUTPUT, ActivityMessage, Attestation, CoinLedger, LosaGafniNode,
                                 ba_output, convinced, output_timeslot, rounds_for)
from services.verdicts import check_ba
from utils.engine import Execution, StepInput
from utils.model import ExecutionConfig, Message, Player, Roster, SignedEntry, TransactionEntry
from utils.timing import FixedDelay
from utils.transactions import StakeState, transfer_tx

COINS = ["c1", "c2", "c3", "c4", "c5"]


def _run_losa_gafni(inputs, delta=2):
    s = StakeState({c: 1 for c in COINS})
    ledger = CoinLedger(s)
    machines = {c: LosaGafniNode([c], ledger, delta, inputs[c]) for c in COINS}
    cfg = ExecutionConfig(delta=delta, duration=output_timeslot(ledger.N, delta) + delta, authenticated=False)
    execution = Execution(cfg, Roster(Player(c, {c}) for c in COINS), s, machines, timing=FixedDelay(1),
                          inputs=inputs)
    return execution.run()


class TestRounds:
    """Test cases for round arithmetic and coins."""

    @pytest.mark.parametrize("N, expected", [(1, 2), (4, 3), (5, 4), (8, 5)])
    def test_rounds_for(self, N, expected):
        """Test N* = ceil(N/2) + 1."""
        assert rounds_for(N) == expected

    def test_output_timeslot(self):
        """Test output happens one round after the last."""
        assert output_timeslot(5, 2) == 10

    def test_coin_ledger(self):
        """Test coins are numbered by identifier then unit."""
        ledger = CoinLedger(StakeState({"b": 1, "a": 2}))

        assert ledger.N == 3
        assert ledger.owner == {1: "a", 2: "a", 3: "b"}
        assert ledger.coins_of(["b"]) == [3]
        assert ledger.share(["a"]) == pytest.approx(2 / 3)


class TestAttestations:
    """Test cases for attestation chains and convinced()."""

    def test_well_formed_chain(self):
        """Test chains of distinct coins carry their root bit."""
        root = Attestation(1, 1, 1)
        chain = Attestation(2, 2, root)

        assert chain.well_formed()
        assert chain.bit == 1
        assert chain.coins == (1, 2)

    def test_repeated_coin(self):
        """Test a coin may appear only once in a chain."""
        assert not Attestation(1, 2, Attestation(1, 1, 0)).well_formed()

    def test_bad_lengths(self):
        """Test lengths must count the chain."""
        assert not Attestation(2, 3, Attestation(1, 1, 0)).well_formed()
        assert not Attestation(1, 1, 2).well_formed()

    def test_convinced_by_majority(self):
        """Test a strict majority of active coins must attest the bit."""
        entries = [ActivityMessage(c, 1) for c in (1, 2, 3)] + [Attestation(1, 1, 1), Attestation(2, 1, 1)]

        assert convinced(entries, 1, 2)
        assert not convinced(entries, 0, 2)
        assert ba_output(entries, 2) == 1

    def test_half_is_not_majority(self):
        """Test exactly half of the active coins is not enough."""
        entries = [ActivityMessage(c, 1) for c in (1, 2)] + [Attestation(1, 1, 1)]

        assert not convinced(entries, 1, 2)
        assert ba_output(entries, 2) == DEFAULT_OUTPUT

    def test_both_bits_default(self):
        """Test being convinced of both bits falls back to the default."""
        entries = ([ActivityMessage(c, 2) for c in (1, 2, 3)]
                   + [Attestation(1, 1, 1), Attestation(2, 2, Attestation(1, 1, 1)), Attestation(3, 1, 1),
                      Attestation(2, 1, 0), Attestation(1, 2, Attestation(2, 1, 0)), Attestation(3, 2, Attestation(2, 1, 0))])

        assert convinced(entries, 0, 3)
        assert convinced(entries, 1, 3)
        assert ba_output(entries, 3) == DEFAULT_OUTPUT


class TestLosaGafniNode:
    """Test cases for LosaGafniNode."""

    def test_rejects_bad_input(self):
        """Test inputs must be bits."""
        with pytest.raises(ValueError, match="0 or 1"):
            LosaGafniNode(["c1"], CoinLedger(StakeState({"c1": 1})), 2, 2)

    def test_first_round(self):
        """Test round one sends activity and input attestations for every owned coin."""
        ledger = CoinLedger(StakeState({"a": 2, "b": 1}))
        node = LosaGafniNode(["a"], ledger, 2, 1)

        sent = node.round_step(1)

        assert ActivityMessage(1, 1) in sent and ActivityMessage(2, 1) in sent
        assert Attestation(1, 1, 1) in sent and Attestation(2, 1, 1) in sent
        assert node.round_step(0) == [] and node.round_step(ledger.N + 5) == []

    def test_extends_other_bit_once(self):
        """Test a node extends a received chain for the bit it has not attested."""
        ledger = CoinLedger(StakeState({"a": 1, "b": 1, "c": 1}))
        node = LosaGafniNode(["b"], ledger, 2, 1)
        node.round_step(1)
        node.on_step(StepInput(t=3, messages=[Message.of(Attestation(1, 1, 0))]))

        sent = node.round_step(2)

        assert Attestation(2, 2, Attestation(1, 1, 0)) in sent
        assert node.attested == {0, 1}
        assert not any(isinstance(e, Attestation) for e in node.round_step(3))

    def test_unanimous_execution(self):
        """Test unanimous honest inputs are decided by everyone."""
        trace = _run_losa_gafni({c: 1 for c in COINS})

        verdicts = {v.prop: v for v in check_ba(trace)}

        assert all(v.passed for v in verdicts.values())
        assert {trace.output_of(c)[1] for c in COINS} == {1}
        assert {trace.output_of(c)[0] for c in COINS} == {10}

    def test_mixed_execution_agrees(self):
        """Test mixed honest inputs still reach agreement."""
        trace = _run_losa_gafni({"c1": 0, "c2": 1, "c3": 0, "c4": 1, "c5": 1})

        verdicts = {v.prop: v for v in check_ba(trace)}

        assert verdicts["agreement"].passed
        assert verdicts["termination"].passed
        assert verdicts["validity"].witness == {"reason": "mixed honest inputs"}


class TestBaselines:
    """Test cases for the strawman protocols."""

    def test_naive_majority(self):
        """Test the majority of heard inputs is output at the decision timeslot."""
        node = NaiveMajorityBA(["a"], 1, decide_at=3)
        node.on_step(StepInput(t=1))
        node.on_step(StepInput(t=2, messages=[Message.of(SignedEntry("b", ("input", 0)),
                                                         SignedEntry("c", ("input", 0)))]))
        assert node.output() is None

        node.on_step(StepInput(t=3))

        assert node.output() == 0

    def test_naive_majority_tie(self):
        """Test ties go to zero."""
        node = NaiveMajorityBA(["a"], 1, decide_at=1)
        node.on_step(StepInput(t=1, messages=[Message.of(SignedEntry("b", ("input", 0)))]))

        assert node.output() == 0

    def test_fixed_wait(self):
        """Test transactions are confirmed after the wait and conflicts are skipped."""
        s = StakeState({"a": 1})
        first = transfer_tx(s, (), "a", "b", 1, tx_id="first")
        second = transfer_tx(s, (), "a", "c", 1, tx_id="second")
        node = FixedWaitConfirmer(s, wait=2)

        out = node.on_step(StepInput(t=1, messages=[Message.of(TransactionEntry(first))]))
        assert len(out.messages) == 1
        node.on_step(StepInput(t=2, messages=[Message.of(TransactionEntry(second))]))
        assert node.confirmed() == frozenset()

        node.on_step(StepInput(t=4))

        assert node.confirmed() == frozenset({first})

    def test_fixed_wait_negative(self):
        """Test negative waits are rejected."""
        with pytest.raises(ValueError):
            FixedWaitConfirmer(StakeState({}), wait=-1)


if __name__ == "__main__":
    pytest.main([__file__])
