#!/usr/bin/env python3
"""
Unit tests for services/settings.py

Tests the setting hierarchy functionality including:
- Classification of traces into the four settings
- Stake and committee on-chain resources
- Reactivity of protocol-defined resources
- Rho-boundedness of executions
- The schedule-level precheck
"""

from fractions import Fraction

import pytest

from services.settings import (ProtocolSpec, RollingCommitteeResource, SettingKind, StaticCommitteeResource,
                               check_reactive, check_rho_bounded_execution, classify_setting,
                               confirmed_balances, precheck_setting, satisfies_setting)
from utils.errors import ScenarioValidationError
from utils.model import ExecutionConfig, Player, Roster
from utils.timing import ActivitySchedule
from utils.trace import ExecutionTrace
from utils.transactions import StakeState, transfer_tx


def _trace(s0, players=("a", "b"), byzantine=(), duration=3):
    roster = Roster(Player(p, {p}, byzantine=p in byzantine) for p in players)
    trace = ExecutionTrace(ExecutionConfig(duration=duration), roster, StakeState(s0))
    for p in players:
        trace.record(1, p, "status", data={"status": "active"})
    trace.duration = duration
    return trace


def _leave(trace, player, t):
    trace.record(t, player, "status", data={"status": "inactive"})
    trace.duration = max(trace.duration, t)


class TestClassification:
    """Test cases for classify_setting."""

    def test_permissioned(self):
        """Test an always-active fixed roster is permissioned."""
        trace = _trace({"a": 1, "b": 1})

        assert classify_setting(trace) is SettingKind.PERMISSIONED

    def test_quasi_permissionless(self):
        """Test a stakeless player may leave without breaking quasi-permissionless."""
        trace = _trace({"a": 1})
        _leave(trace, "b", 2)

        assert classify_setting(trace) is SettingKind.QUASI_PERMISSIONLESS

    def test_dynamically_available(self):
        """Test an inactive stakeholder is tolerated while another is active."""
        trace = _trace({"a": 1, "b": 1})
        _leave(trace, "b", 2)

        assert classify_setting(trace) is SettingKind.DYNAMICALLY_AVAILABLE

    def test_fully_permissionless(self):
        """Test no active stakeholder leaves only the fully permissionless setting."""
        trace = _trace({"a": 1})
        _leave(trace, "a", 2)

        assert classify_setting(trace) is SettingKind.FULLY_PERMISSIONLESS
        assert satisfies_setting(trace, "fully_permissionless")
        assert not satisfies_setting(trace, SettingKind.DYNAMICALLY_AVAILABLE)

    def test_ranks(self):
        """Test settings are ordered from weakest to strongest."""
        ranks = [kind.rank for kind in (SettingKind.FULLY_PERMISSIONLESS, SettingKind.DYNAMICALLY_AVAILABLE,
                                        SettingKind.QUASI_PERMISSIONLESS, SettingKind.PERMISSIONED)]

        assert ranks == sorted(ranks)


class TestOnChainResources:
    """Test cases for stake and committee resources."""

    def setup_method(self):
        """Set up a trace where a pays z at t=2."""
        self.trace = _trace({"a": 1}, players=("a", "z"), duration=4)
        pay = transfer_tx(self.trace.stake_state(), (), "a", "z", 1, tx_id="pay")
        self.trace.register_tx(pay)
        self.trace.record(2, "a", "confirm", data={"txs": ["pay"]})
        self.trace.duration = 4

    def test_confirmed_balances(self):
        """Test balances follow the observer's confirmed set."""
        assert confirmed_balances(self.trace, "a", 1) == {"a": 1}
        assert confirmed_balances(self.trace, "a", 2) == {"z": 1}
        assert confirmed_balances(self.trace, "z", 4) == {"a": 1}

    def test_rolling_committee_lags(self):
        """Test past stakeholders stay members for the lag."""
        committee = RollingCommitteeResource(lag=1)

        assert committee.balances(self.trace, "a", 2) == {"a": 1, "z": 1}
        assert committee.balances(self.trace, "a", 3) == {"z": 1}

    def test_negative_lag(self):
        """Test lags must be non-negative."""
        with pytest.raises(ValueError):
            RollingCommitteeResource(lag=-1)

    def test_proof_of_stake_spec(self):
        """Test stake-only protocols without permitters are proof of stake."""
        assert ProtocolSpec("pos").is_proof_of_stake
        assert not ProtocolSpec("pow", permitters=("pow",)).is_proof_of_stake
        assert not ProtocolSpec("committee", onchain_resources=(StaticCommitteeResource({"a"}),)).is_proof_of_stake


class TestReactivity:
    """Test cases for check_reactive."""

    def test_static_committee_is_not_reactive(self):
        """Test a member without any stake keeps its seat forever."""
        trace = _trace({"a": 1}, players=("a", "z"))
        protocol = ProtocolSpec("committee", onchain_resources=(StaticCommitteeResource({"a", "z"}),))

        assert not check_reactive(trace, protocol, ell_star=1)

    def test_rolling_committee_is_reactive(self):
        """Test membership derived from stake follows the stake."""
        trace = _trace({"a": 1}, players=("a", "z"))
        protocol = ProtocolSpec("committee", onchain_resources=(RollingCommitteeResource(lag=1),))

        assert check_reactive(trace, protocol, ell_star=1)

    def test_stake_only_is_reactive(self):
        """Test stake alone is trivially reactive."""
        assert check_reactive(_trace({"a": 1}), ProtocolSpec("pos"), ell_star=0)

    def test_negative_interval(self):
        """Test ell_star must be non-negative."""
        with pytest.raises(ValueError):
            check_reactive(_trace({"a": 1}), None, ell_star=-1)


class TestRhoBoundedness:
    """Test cases for check_rho_bounded_execution."""

    def test_active_byzantine_share(self):
        """Test the Byzantine share of active stake is compared with rho."""
        trace = _trace({"a": 2, "z": 1}, players=("a", "z"), byzantine=("z",), duration=2)

        assert check_rho_bounded_execution(trace, Fraction(1, 3))
        assert not check_rho_bounded_execution(trace, "1/4")

    def test_inactive_byzantine_stake_ignored(self):
        """Test only active players count."""
        trace = _trace({"a": 2, "z": 1}, players=("a", "z"), byzantine=("z",), duration=2)
        _leave(trace, "z", 1)

        assert check_rho_bounded_execution(trace, 0)


class TestPrecheck:
    """Test cases for precheck_setting."""

    def test_orphan_stake(self):
        """Test initial stake must belong to a known player."""
        roster = Roster([Player("a", {"a"})])

        with pytest.raises(ScenarioValidationError) as excinfo:
            precheck_setting(roster, ActivitySchedule(), StakeState({"x": 1}), SettingKind.DYNAMICALLY_AVAILABLE, 5)
        assert "unknown identifiers" in excinfo.value.detail[0]

    def test_permissioned_needs_single_identifiers(self):
        """Test permissioned players hold one identifier each."""
        roster = Roster([Player("a", {"a1", "a2"})])

        with pytest.raises(ScenarioValidationError, match="permissioned"):
            precheck_setting(roster, ActivitySchedule(), StakeState({"a1": 1}), SettingKind.PERMISSIONED, 5)

    def test_quasi_permissionless_stakeholders_start_active(self):
        """Test late honest stakeholders are refused in the quasi-permissionless setting."""
        roster = Roster([Player("a", {"a"}), Player("b", {"b"})])
        schedule = ActivitySchedule().join("b", 3)

        with pytest.raises(ScenarioValidationError):
            precheck_setting(roster, schedule, StakeState({"a": 1, "b": 1}), "quasi_permissionless", 5)
        precheck_setting(roster, schedule, StakeState({"a": 1, "b": 1}), "dynamically_available", 5)

    def test_rho(self):
        """Test the initial Byzantine share must respect rho."""
        roster = Roster([Player("a", {"a"}), Player("z", {"z"}, byzantine=True)])
        s = StakeState({"a": 1, "z": 1})

        with pytest.raises(ScenarioValidationError):
            precheck_setting(roster, ActivitySchedule(), s, SettingKind.DYNAMICALLY_AVAILABLE, 5, rho=Fraction(1, 3))
        precheck_setting(roster, ActivitySchedule(), s, SettingKind.DYNAMICALLY_AVAILABLE, 5, rho=Fraction(1, 2))


if __name__ == "__main__":
    pytest.main([__file__])
