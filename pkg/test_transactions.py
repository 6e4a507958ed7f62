#!/usr/bin/env python3
"""
Unit tests for utils/transactions.py

Tests the UTXO stake functionality including:
- Validity of transaction sets (double spends, conservation, provenance cycles)
- Balances, transfers and conflicts
- Maximal valid sets and the search cap
- Scheduled and churn environments
- Environment boundedness checks
"""

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from utils.errors import InsufficientStakeError, InvalidTransactionSetError, SearchCapExceeded
from utils.model import ExecutionConfig, Player, Roster
from utils.trace import ExecutionTrace
from utils.transactions import (ChurnEnvironment, Injection, PublicView, ScheduledEnvironment, StakeState,
                                Transaction, byzantine_share, conflicting, env_is_maximally_rho_bounded,
                                env_is_rho_bounded, genesis_utxo_id, is_valid_set, maximal_valid_sets,
                                output_utxo_id, required_set, stake, transfer_tx)


@pytest.fixture
def state():
    return StakeState({"a": 2, "b": 1})


class TestStakeState:
    """Test cases for StakeState."""

    def test_genesis(self, state):
        """Test S0 becomes one genesis UTXO per identifier."""
        assert state.total == 3
        assert state.genesis_utxo("a").value == 2
        assert state.genesis_utxo("zed") is None
        assert state.balances(()) == {"a": 2, "b": 1}

    def test_zero_entries_dropped(self):
        """Test identifiers with no initial stake get no UTXO."""
        assert StakeState({"a": 1, "b": 0}).s0 == {"a": 1}

    def test_negative_stake_rejected(self):
        """Test negative initial stake is invalid."""
        with pytest.raises(InvalidTransactionSetError):
            StakeState({"a": -1})

    def test_double_spend_invalid(self, state):
        """Test two transactions spending one UTXO are not a valid set."""
        t1 = transfer_tx(state, (), "a", "b", 1, tx_id="t1")
        t2 = transfer_tx(state, (), "a", "c", 2, tx_id="t2")

        assert is_valid_set({t1}, state)
        assert is_valid_set({t2}, state)
        assert not is_valid_set({t1, t2}, state)

    def test_unknown_input_invalid(self, state):
        """Test inputs must exist in S0 or the set's outputs."""
        tx = Transaction("t", {"u-missing"}, (("b", 1),))

        assert not state.is_valid({tx})

    def test_conservation(self, state):
        """Test conservation mode requires outputs to equal inputs."""
        burn = Transaction("burn", {genesis_utxo_id("a")}, (("b", 1),))

        assert not state.is_valid({burn})
        assert StakeState({"a": 2, "b": 1}, conservation=False).is_valid({burn})

    def test_mixed_owners_invalid(self, state):
        """Test a transaction may only spend one identifier's UTXOs."""
        tx = Transaction("mix", {genesis_utxo_id("a"), genesis_utxo_id("b")}, (("c", 3),))

        assert not state.is_valid({tx})

    def test_provenance_cycle_invalid(self):
        """Test transactions that create each other's inputs are rejected."""
        s = StakeState({"x": 1})
        first = Transaction("A", {output_utxo_id("B", 0)}, (("x", 1),))
        second = Transaction("B", {output_utxo_id("A", 0)}, (("y", 1),))

        assert not s.is_valid({first, second})

    def test_unspent_requires_valid_set(self, state):
        """Test balances of an invalid set raise."""
        t1 = transfer_tx(state, (), "a", "b", 1, tx_id="t1")
        t2 = transfer_tx(state, (), "a", "c", 1, tx_id="t2")

        with pytest.raises(InvalidTransactionSetError):
            state.balances({t1, t2})

    def test_byzantine_share(self):
        """Test the Byzantine share of total stake."""
        s = StakeState({"h": 3, "z": 1})

        assert byzantine_share(s, (), {"z"}) == Fraction(1, 4)
        assert byzantine_share(StakeState({}), (), {"z"}) == 0


class TestTransfers:
    """Test cases for transfer_tx, conflicting and required_set."""

    def test_transfer_with_change(self):
        """Test a partial transfer returns change to the sender."""
        s = StakeState({"a": 5})

        tx = transfer_tx(s, (), "a", "b", 2)

        assert tx.outputs == (("b", 2), ("a", 3))
        assert stake(s, {tx}, "a") == 3
        assert stake(s, {tx}, "b") == 2

    def test_transfer_without_change(self, state):
        """Test an exact transfer has a single output."""
        tx = transfer_tx(state, (), "b", "a", 1)

        assert tx.outputs == (("a", 1),)

    def test_insufficient_stake(self):
        """Test transfers larger than the balance raise."""
        s = StakeState({"a": 5})

        with pytest.raises(InsufficientStakeError, match="a owns 5 stake units, 6 requested") as excinfo:
            transfer_tx(s, (), "a", "b", 6)
        assert excinfo.value.available == 5

    def test_non_positive_amount(self, state):
        """Test zero transfers are rejected."""
        with pytest.raises(InvalidTransactionSetError, match="positive"):
            transfer_tx(state, (), "a", "b", 0)

    def test_conflicting(self, state):
        """Test conflict detection between individually valid transactions."""
        t1 = transfer_tx(state, (), "a", "b", 1, tx_id="t1")
        t2 = transfer_tx(state, (), "a", "c", 2, tx_id="t2")
        t3 = transfer_tx(state, (), "b", "c", 1, tx_id="t3")

        assert conflicting(t1, t2, (), state)
        assert not conflicting(t1, t3, (), state)

    def test_conflicting_requires_valid_transactions(self, state):
        """Test conflicting raises when one side is not valid on its own."""
        t1 = transfer_tx(state, (), "a", "b", 1, tx_id="t1")
        orphan = Transaction("orphan", {"u-missing"}, (("b", 1),))

        with pytest.raises(InvalidTransactionSetError):
            conflicting(t1, orphan, (), state)

    def test_required_set(self, state):
        """Test the prerequisites of a dependent transfer are its creators."""
        t1 = transfer_tx(state, (), "a", "b", 2, tx_id="t1")
        t3 = transfer_tx(state, {t1}, "b", "c", 3, tx_id="t3")

        assert required_set(t3, [t1, t3], state) == frozenset({t1})
        assert required_set(t1, [t1, t3], state) == frozenset()

    @given(a=st.integers(1, 50), b=st.integers(0, 50), data=st.data())
    def test_transfers_conserve_total(self, a, b, data):
        """Test any affordable transfer keeps total stake unchanged."""
        s = StakeState({"a": a, "b": b})
        x = data.draw(st.integers(1, a))

        tx = transfer_tx(s, (), "a", "b", x)

        assert s.total_under({tx}) == a + b
        assert stake(s, {tx}, "b") == b + x


class TestMaximalValidSets:
    """Test cases for maximal_valid_sets."""

    def test_empty(self, state):
        """Test no issued transactions gives the empty set."""
        assert maximal_valid_sets({}, 5, state) == [frozenset()]

    def test_all_valid(self, state):
        """Test a valid candidate set is its own only maximal set."""
        t1 = transfer_tx(state, (), "a", "b", 1, tx_id="t1")

        assert maximal_valid_sets({t1: 1}, 1, state) == [frozenset({t1})]
        assert maximal_valid_sets({t1: 3}, 1, state) == [frozenset()]

    def test_conflicts_split(self, state):
        """Test conflicting transactions land in different maximal sets."""
        t1 = transfer_tx(state, (), "a", "b", 1, tx_id="t1")
        t2 = transfer_tx(state, (), "a", "c", 2, tx_id="t2")

        assert maximal_valid_sets({t1: 1, t2: 2}, 2, state) == [frozenset({t1}), frozenset({t2})]

    def test_dependents_need_prerequisites(self, state):
        """Test a transfer is excluded when its prerequisite conflicts out."""
        t1 = transfer_tx(state, (), "a", "b", 2, tx_id="t1")
        t3 = transfer_tx(state, {t1}, "b", "c", 3, tx_id="t3")
        t4 = transfer_tx(state, (), "a", "d", 1, tx_id="t4")

        result = maximal_valid_sets({t1: 1, t3: 1, t4: 1}, 1, state)

        assert result == [frozenset({t1, t3}), frozenset({t4})]

    def test_search_cap(self, state):
        """Test searches beyond the cap are refused."""
        t1 = transfer_tx(state, (), "a", "b", 1, tx_id="t1")
        t2 = transfer_tx(state, (), "a", "c", 2, tx_id="t2")

        with pytest.raises(SearchCapExceeded, match="cap 1"):
            maximal_valid_sets({t1: 1, t2: 1}, 1, state, cap=1)


class TestEnvironments:
    """Test cases for scheduled and churn environments."""

    def test_scheduled(self, state):
        """Test scheduled injections are returned at their timeslot."""
        tx = transfer_tx(state, (), "a", "b", 1, tx_id="t1")
        env = ScheduledEnvironment().send(tx, ["p0", "p1"], 3)

        assert env.injections(3, PublicView()) == [Injection("p0", tx, 3), Injection("p1", tx, 3)]
        assert env.injections(4, PublicView()) == []
        assert env.catalogue() == [tx]
        assert len(env.sends()) == 2

    def test_churn_waits_for_common_confirmation(self):
        """Test churn issues the next transfer only after everyone confirmed the last."""
        s = StakeState({"a": 2, "b": 2})
        env = ChurnEnvironment(s, [("a", "b"), ("b", "a")], {"a": ["p0"], "b": ["p1"]})

        first = env.injections(1, PublicView())
        assert [i.player for i in first] == ["p0"]
        tx0 = first[0].tx
        assert tx0.tx_id == "churn-0"

        pending = PublicView({"p0": frozenset({tx0}), "p1": frozenset()})
        assert env.injections(2, pending) == []

        confirmed = PublicView({"p0": frozenset({tx0}), "p1": frozenset({tx0})})
        second = env.injections(3, confirmed)
        assert [i.player for i in second] == ["p1"]
        assert second[0].tx.tx_id == "churn-1"
        assert s.is_valid({tx0, second[0].tx})
        assert env.catalogue() == [tx0, second[0].tx]

    def test_churn_respects_window(self):
        """Test churn is silent before its start and after its stop."""
        s = StakeState({"a": 2})
        env = ChurnEnvironment(s, [("a", "b")], {"a": ["p0"]}, start=5, stop=6)

        assert env.injections(4, PublicView()) == []
        assert env.injections(7, PublicView()) == []


class TestEnvironmentBoundedness:
    """Test cases for env_is_maximally_rho_bounded."""

    s = StakeState({"h": 3, "z": 1})

    def test_initial_share(self):
        """Test the S0 share alone decides an empty environment."""
        env = ScheduledEnvironment()

        assert env_is_maximally_rho_bounded(env, {"z"}, Fraction(1, 3), 10, self.s, ["ph"])
        assert not env_is_maximally_rho_bounded(env, {"z"}, Fraction(1, 5), 10, self.s, ["ph"])

    def test_transfer_to_byzantine(self):
        """Test an honest send that enriches Byzantine identifiers breaks the bound."""
        tx = transfer_tx(self.s, (), "h", "z", 2, tx_id="gift")
        env = ScheduledEnvironment().send(tx, ["ph"], 2)

        assert not env_is_maximally_rho_bounded(env, {"z"}, Fraction(1, 3), 10, self.s, ["ph"])

    def test_byzantine_first_receipt(self):
        """Test transactions must reach an honest player first."""
        tx = transfer_tx(self.s, (), "h", "h2", 1, tx_id="move")
        env = ScheduledEnvironment().send(tx, ["pz"], 1).send(tx, ["ph"], 2)

        assert not env_is_maximally_rho_bounded(env, {"z"}, Fraction(1, 3), 10, self.s, ["ph"])


class TestTraceBoundedness:
    """Test cases for env_is_rho_bounded."""

    def _trace(self, s0, sends, registered=()):
        roster = Roster([Player("a", {"a"}), Player("b", {"b"}), Player("z", {"z"}, byzantine=True)])
        trace = ExecutionTrace(ExecutionConfig(duration=4), roster, StakeState(s0))
        for tx in registered:
            trace.register_tx(tx)
        for tx, t in sends:
            trace.register_tx(tx)
            trace.record(t, "a", "injection", data={"tx": tx.tx_id})
        trace.duration = 4
        return trace

    def test_honest_gift(self):
        """Test an injected transfer to a Byzantine identifier counts against rho."""
        s = StakeState({"a": 2, "z": 1})
        pay = transfer_tx(s, (), "a", "z", 1, tx_id="pay")
        trace = self._trace({"a": 2, "z": 1}, [(pay, 2)])

        assert not env_is_rho_bounded(None, trace, Fraction(1, 3))
        assert env_is_rho_bounded(None, trace, Fraction(2, 3))
        assert not env_is_rho_bounded(None, self._trace({"a": 2, "z": 1}, []), Fraction(1, 4))

    def test_unconfirmed_prerequisites(self):
        """Test honest sends need their prerequisites confirmed first."""
        s = StakeState({"a": 2})
        t1 = transfer_tx(s, (), "a", "b", 2, tx_id="t1")
        t3 = Transaction("t3", {output_utxo_id("t1", 0)}, (("a", 2),))
        trace = self._trace({"a": 2}, [(t3, 2)], registered=[t1])

        assert not env_is_rho_bounded(None, trace, Fraction(1))

        trace.record(1, "a", "confirm", data={"txs": ["t1"]})
        trace.record(1, "b", "confirm", data={"txs": ["t1"]})

        assert env_is_rho_bounded(None, trace, Fraction(1))


if __name__ == "__main__":
    pytest.main([__file__])
