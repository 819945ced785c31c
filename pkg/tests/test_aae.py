import random
from dataclasses import replace
from datetime import timedelta
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agenttrust.aae import (
    ActionRequest,
    AuthorizationEnvelope,
    Decision,
    DecisionKind,
    Delegation,
    DenyReason,
    FinancialConstraints,
    Obligations,
    TimeConstraints,
    Violation,
    attenuation_check,
    evaluate,
    validate_envelope,
    verify_delegation_chain,
)
from agenttrust.errors import (
    BrokenLink,
    ChainTooDeep,
    CurrencyMismatch,
    DepthExhausted,
    InvalidEnvelope,
    ParentForbidsDelegation,
    ScopeExceedsParent,
)
from agenttrust.identity import IdentityStore

from factories import T0, child_of, make_envelope, make_party, resign
from oracles import ACTION_UNIVERSE, PATTERN_POOL, allowed_set, evaluated_allowed, random_scope_pair

SHOP = "https://api.shop"


@pytest.fixture(scope="module")
def parties():
    ids = IdentityStore()
    return ids, {n: make_party(ids, n) for n in ["root", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8", "a9"]}


def req(actor, action=f"{SHOP}/orders/1", **kw):
    kw.setdefault("jurisdiction", "CH")
    kw.setdefault("timestamp", T0)
    return ActionRequest(actor=actor, action=action, **kw)


# -- validation -------------------------------------------------------------


def test_wellformed_envelope_has_no_violations(parties):
    ids, p = parties
    assert validate_envelope(make_envelope(p["root"], p["a1"].did), ids, T0) == []


def test_missing_expiry(parties):
    ids, p = parties
    env = make_envelope(p["root"], p["a1"].did)
    env = resign(env, p["root"], validity=replace(env.validity, expires_at=None))
    assert validate_envelope(env, ids, T0) == [Violation.MISSING_EXPIRY]


def test_depth_nine(parties):
    ids, p = parties
    env = make_envelope(p["root"], p["a1"].did, delegation=Delegation(True, 9))
    assert validate_envelope(env, ids, T0) == [Violation.DEPTH_EXCEEDED]


def test_threshold_order_and_sign(parties):
    ids, p = parties
    fin = FinancialConstraints("USDC", Decimal("600"), Decimal("500"), Decimal("1000"), 10)
    assert validate_envelope(make_envelope(p["root"], p["a1"].did, financial=fin), ids, T0) == [
        Violation.THRESHOLD_ORDER
    ]
    fin = FinancialConstraints("USDC", Decimal("-1"), Decimal("500"), Decimal("1000"), 10)
    assert Violation.NEGATIVE_THRESHOLD in validate_envelope(make_envelope(p["root"], p["a1"].did, financial=fin), ids, T0)


def test_bad_proof_and_expired(parties):
    ids, p = parties
    env = make_envelope(p["root"], p["a1"].did)
    tampered = replace(env, mandate=replace(env.mandate, allowed_actions=(f"{SHOP}/**", "https://bank/**")))
    assert validate_envelope(tampered, ids, T0) == [Violation.BAD_PROOF]
    unsigned = make_envelope(p["root"], p["a1"].did, sign=False)
    assert validate_envelope(unsigned, ids, T0) == [Violation.BAD_PROOF]
    assert validate_envelope(env, ids, env.validity.expires_at) == [Violation.EXPIRED]


def test_validity_longer_than_ttl(parties):
    ids, p = parties
    env = make_envelope(p["root"], p["a1"].did, ttl=60, expires_at=T0 + timedelta(seconds=61))
    assert validate_envelope(env, ids, T0) == [Violation.VALIDITY_EXCEEDS_TTL]


def test_json_roundtrip_keeps_proof(parties):
    ids, p = parties
    env = make_envelope(
        p["root"],
        p["a1"].did,
        resources=({"type": "order", "region": "eu-*"},),
        obligations=Obligations(("search", "pay"), Decimal("750")),
        counterparty_min_score=40,
        time_constraints=TimeConstraints(86400, 3600, frozenset({"mon", "tue"}), (9, 17), "Europe/Zurich"),
    )
    back = AuthorizationEnvelope.from_dict(env.to_dict())
    assert back == env and back.envelope_id == env.envelope_id
    assert validate_envelope(back, ids, T0) == []
    data = env.to_dict()
    assert data["constraints"]["financial"]["approvalThreshold"] == "1000"
    assert set(data) == {"mandate", "constraints", "validity", "proof"}


# -- evaluation -------------------------------------------------------------


def test_deny_precedence(parties):
    _, p = parties
    env = make_envelope(p["root"], p["a1"].did, denied=(f"{SHOP}/orders/*",))
    assert evaluate(env, req(p["a1"].did), T0) == Decision(DecisionKind.DENY, DenyReason.EXPLICIT_DENY)


def test_default_deny(parties):
    _, p = parties
    env = make_envelope(p["root"], p["a1"].did)
    assert evaluate(env, req(p["a1"].did, "https://bank.example/transfer"), T0).reason is DenyReason.NOT_PERMITTED


def test_holder_binding(parties):
    _, p = parties
    env = make_envelope(p["root"], p["a1"].did)
    assert evaluate(env, req(p["a2"].did), T0).reason is DenyReason.HOLDER_MISMATCH


def test_validity_gate(parties):
    _, p = parties
    env = make_envelope(p["root"], p["a1"].did)
    assert evaluate(env, req(p["a1"].did), T0 - timedelta(seconds=1)).reason is DenyReason.EXPIRED
    assert evaluate(env, req(p["a1"].did), env.validity.expires_at).reason is DenyReason.EXPIRED


def test_time_window_in_declared_zone(parties):
    _, p = parties
    # T0 is Monday 12:00 UTC == 13:00 in Zurich
    tc = TimeConstraints(86400, None, frozenset({"mon"}), (13, 14), "Europe/Zurich")
    env = make_envelope(p["root"], p["a1"].did, time_constraints=tc)
    assert not evaluate(env, req(p["a1"].did), T0).denied
    later = req(p["a1"].did, timestamp=T0 + timedelta(hours=1))
    assert evaluate(env, later, T0).reason is DenyReason.OUTSIDE_WINDOW
    tc = replace(tc, allowed_days=frozenset({"tue"}))
    env = make_envelope(p["root"], p["a1"].did, time_constraints=tc)
    assert evaluate(env, req(p["a1"].did), T0).reason is DenyReason.OUTSIDE_WINDOW


def test_resource_jurisdiction_score_tool_gates(parties):
    _, p = parties
    env = make_envelope(
        p["root"],
        p["a1"].did,
        resources=({"type": "order"},),
        counterparty_min_score=50,
        obligations=Obligations(("search",), None),
    )
    base = dict(resource={"type": "order"}, counterparty_score=50)
    assert evaluate(env, req(p["a1"].did, **base), T0).kind is DecisionKind.ALLOW
    assert evaluate(env, req(p["a1"].did, **{**base, "resource": {"type": "user"}}), T0).reason is DenyReason.RESOURCE_NOT_PERMITTED
    assert evaluate(env, req(p["a1"].did, **{**base, "jurisdiction": "FR"}), T0).reason is DenyReason.JURISDICTION
    assert evaluate(env, req(p["a1"].did, **{**base, "counterparty_score": 49.9}), T0).reason is DenyReason.COUNTERPARTY_SCORE
    assert evaluate(env, req(p["a1"].did, **{**base, "tool": "shell"}), T0).reason is DenyReason.TOOL_NOT_ALLOWED
    assert evaluate(env, req(p["a1"].did, **{**base, "tool": "search"}), T0).kind is DecisionKind.ALLOW


def test_absent_facets_unconstrained(parties):
    _, p = parties
    env = make_envelope(p["root"], p["a1"].did, jurisdictions=None, financial=None)
    r = req(p["a1"].did, jurisdiction="FR", amount=Decimal("10000"), currency="EUR")
    assert evaluate(env, r, T0).kind is DecisionKind.ALLOW


@pytest.mark.parametrize(
    "amount,kind",
    [
        ("0", DecisionKind.ALLOW),
        ("99.99", DecisionKind.ALLOW),
        ("100", DecisionKind.ALLOW),  # between autonomous and step-up
        ("499.99", DecisionKind.ALLOW),
        ("500", DecisionKind.STEP_UP),
        ("999.99", DecisionKind.STEP_UP),
        ("1000", DecisionKind.REQUIRE_HUMAN_APPROVAL),
        ("5000", DecisionKind.REQUIRE_HUMAN_APPROVAL),
    ],
)
def test_financial_ladder(parties, amount, kind):
    _, p = parties
    env = make_envelope(p["root"], p["a1"].did)
    assert evaluate(env, req(p["a1"].did, amount=Decimal(amount), currency="USDC"), T0).kind is kind


def test_human_approval_obligation(parties):
    _, p = parties
    env = make_envelope(p["root"], p["a1"].did, obligations=Obligations(None, Decimal("300")))
    assert evaluate(env, req(p["a1"].did, amount=Decimal("300"), currency="USDC"), T0).kind is DecisionKind.REQUIRE_HUMAN_APPROVAL
    assert evaluate(env, req(p["a1"].did, amount=Decimal("299"), currency="USDC"), T0).kind is DecisionKind.ALLOW


def test_currency_mismatch(parties):
    _, p = parties
    env = make_envelope(p["root"], p["a1"].did)
    with pytest.raises(CurrencyMismatch):
        evaluate(env, req(p["a1"].did, amount=Decimal("1"), currency="EUR"), T0)


def test_request_from_dict(parties):
    _, p = parties
    r = ActionRequest.from_dict(
        {"actor": str(p["a1"].did), "action": f"{SHOP}/orders/1", "timestamp": "2026-03-02T12:00:00Z", "amount": "12.50", "currency": "USDC"}
    )
    assert r.amount == Decimal("12.50") and r.timestamp == T0


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.sampled_from(PATTERN_POOL), max_size=3),
    st.lists(st.sampled_from(PATTERN_POOL), min_size=1, max_size=3),
    st.sampled_from(ACTION_UNIVERSE),
)
def test_deny_precedence_property(allowed, denied, action):
    ids = IdentityStore()
    root, holder = make_party(ids, "root"), make_party(ids, "a1")
    env = make_envelope(root, holder.did, allowed=allowed, denied=denied)
    d = evaluate(env, req(holder.did, action), T0)
    if action not in allowed_set(["%s/**" % SHOP], denied):
        assert d.reason is DenyReason.EXPLICIT_DENY
    else:
        assert d.denied == (action not in allowed_set(allowed, denied))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(PATTERN_POOL), max_size=2), st.text(max_size=20))
def test_default_deny_with_empty_allow_list(denied, path):
    ids = IdentityStore()
    root, holder = make_party(ids, "root"), make_party(ids, "a1")
    env = make_envelope(root, holder.did, allowed=(), denied=denied)
    assert evaluate(env, req(holder.did, f"{SHOP}/{path}"), T0).denied


def test_evaluation_is_pure(parties):
    _, p = parties
    env = make_envelope(p["root"], p["a1"].did)
    r = req(p["a1"].did, amount=Decimal("700"), currency="USDC")
    assert len({evaluate(env, r, T0) for _ in range(20)}) == 1


# -- attenuation ------------------------------------------------------------


def test_child_with_extra_pattern_rejected(parties):
    _, p = parties
    parent = make_envelope(p["root"], p["a1"].did, allowed=(f"{SHOP}/orders/*",))
    child = child_of(parent, p["a1"], p["a2"].did, allowed=(f"{SHOP}/orders/*", f"{SHOP}/refunds/*"))
    with pytest.raises(ScopeExceedsParent):
        attenuation_check(parent, child)


def test_half_ttl_one_jurisdiction_accepted(parties):
    _, p = parties
    parent = make_envelope(p["root"], p["a1"].did)
    child = child_of(
        parent, p["a1"], p["a2"].did, ttl=43200, expires_at=T0 + timedelta(seconds=43200), jurisdictions=frozenset({"CH"})
    )
    attenuation_check(parent, child)
    # effective permissions shrink over the finite universe
    assert evaluated_allowed(child, p["a2"].did) <= evaluated_allowed(parent, p["a1"].did)


def test_parent_forbids_delegation(parties):
    _, p = parties
    parent = make_envelope(p["root"], p["a1"].did, delegation=Delegation(False, 0))
    child = child_of(parent, p["a1"], p["a2"].did, delegation=Delegation(False, 0))
    with pytest.raises(ParentForbidsDelegation):
        attenuation_check(parent, child)


def test_depth_budget_must_shrink(parties):
    _, p = parties
    parent = make_envelope(p["root"], p["a1"].did, delegation=Delegation(True, 2))
    with pytest.raises(DepthExhausted):
        attenuation_check(parent, child_of(parent, p["a1"], p["a2"].did, delegation=Delegation(True, 2)))


@pytest.mark.parametrize(
    "override",
    [
        dict(financial=FinancialConstraints("USDC", Decimal("100"), Decimal("600"), Decimal("1000"), 10)),
        dict(financial=FinancialConstraints("EUR", Decimal("100"), Decimal("500"), Decimal("1000"), 10)),
        dict(financial=FinancialConstraints("USDC", Decimal("100"), Decimal("500"), Decimal("1000"), 11)),
        dict(financial=None),
        dict(jurisdictions=frozenset({"CH", "FR"})),
        dict(jurisdictions=None),
        dict(ttl=86401),
        dict(expires_at=T0 + timedelta(seconds=86401), ttl=86401),
        dict(issued_at=T0 - timedelta(seconds=1)),
        dict(denied=()),
    ],
)
def test_widening_rejected(parties, override):
    _, p = parties
    parent = make_envelope(p["root"], p["a1"].did, denied=(f"{SHOP}/admin/**",))
    with pytest.raises(ScopeExceedsParent):
        attenuation_check(parent, child_of(parent, p["a1"], p["a2"].did, **override))


def test_child_allow_inside_parent_deny_rejected(parties):
    _, p = parties
    parent = make_envelope(p["root"], p["a1"].did, denied=(f"{SHOP}/admin/**",))
    child = child_of(parent, p["a1"], p["a2"].did, allowed=(f"{SHOP}/admin/users",))
    with pytest.raises(ScopeExceedsParent):
        attenuation_check(parent, child)


def test_broken_links(parties):
    _, p = parties
    parent = make_envelope(p["root"], p["a1"].did)
    other = make_envelope(p["root"], p["a3"].did)
    with pytest.raises(BrokenLink):
        attenuation_check(parent, child_of(other, p["a1"], p["a2"].did))
    # issued by someone other than the parent's holder
    with pytest.raises(BrokenLink):
        attenuation_check(parent, child_of(parent, p["a3"], p["a2"].did))


def _chain(p, n):
    names = ["a%d" % i for i in range(1, 10)]
    chain = [make_envelope(p["root"], p[names[0]].did, delegation=Delegation(True, 8))]
    for i in range(1, n):
        chain.append(child_of(chain[-1], p[names[i - 1]], p[names[i]].did))
    return chain


@pytest.mark.parametrize("n", [1, 2, 3, 8])
def test_valid_chains(parties, n):
    ids, p = parties
    verify_delegation_chain(_chain(p, n), ids, T0)


def test_nine_envelopes_too_deep(parties):
    ids, p = parties
    chain = _chain(p, 8)
    # a ninth link needs a depth budget the eighth no longer has; build it unchecked
    chain.append(child_of(chain[-1], p["a8"], p["a9"].did, delegation=Delegation(True, 0)))
    with pytest.raises(ChainTooDeep):
        verify_delegation_chain(chain, ids, T0)


def test_chain_with_tampered_link(parties):
    ids, p = parties
    chain = _chain(p, 3)
    bad = replace(chain[2], mandate=replace(chain[2].mandate, allowed_actions=("https://bank/**",)))
    with pytest.raises(InvalidEnvelope) as exc:
        verify_delegation_chain([chain[0], chain[1], bad], ids, T0)
    assert Violation.BAD_PROOF in exc.value.violations


def test_chain_root_with_parent(parties):
    ids, p = parties
    chain = _chain(p, 2)
    with pytest.raises(BrokenLink):
        verify_delegation_chain(chain[1:], ids, T0)


def test_chain_widening_rejected(parties):
    ids, p = parties
    chain = _chain(p, 2)
    wide = child_of(chain[1], p["a2"], p["a3"].did, allowed=("https://api.bank/**",))
    with pytest.raises(ScopeExceedsParent):
        verify_delegation_chain(chain + [wide], ids, T0)


def test_attenuation_never_accepts_a_widening(parties):
    _, p = parties
    rnd = random.Random(11)
    accepted = 0
    for _ in range(150):
        parent, child = random_scope_pair(rnd, p["root"], p["a1"], p["a2"])
        pm, cm = parent.mandate, child.mandate
        try:
            attenuation_check(parent, child)
        except ScopeExceedsParent:
            continue
        accepted += 1
        assert allowed_set(cm.allowed_actions, cm.denied_actions) <= allowed_set(pm.allowed_actions, pm.denied_actions)
        assert evaluated_allowed(child, p["a2"].did) <= evaluated_allowed(parent, p["a1"].did)
    assert accepted >= 30
