import pytest

from branchlab.grouping import ET, PGE, PNA, PTI, PV, GroupKey, group_of, resolve_model
from branchlab.model import parse_variable_key
from branchlab.scuc import UCConfig, generate_family


@pytest.fixture(scope="module")
def family():
    return generate_family(UCConfig(generators=4, hours=24, startup_categories=3,
                                    seed=13, variation_count=2))


def test_pna_exactly_six_groups(family):
    # startup contributes one group per category, the other three bases one
    # each: 3 + 3 = 6 for three startup categories
    keys = family.binary_keys()
    groups = {group_of(PNA, k) for k in keys}
    assert len(groups) == 6


def test_pge_group_has_all_time_steps(family):
    keys = family.binary_keys()
    target = group_of(PGE, parse_variable_key("is_on[2,0]"))
    members = [k for k in keys if group_of(PGE, k) == target]
    assert len(members) == family.config.hours == 24
    assert sorted(k.time for k in members) == list(range(24))


def test_pv_is_identity(family):
    for k in family.binary_keys():
        gk = group_of(PV, k)
        assert gk.parts == (k.raw,)


def test_et_single_group(family):
    assert {group_of(ET, k) for k in family.binary_keys()} == {GroupKey(ET, ())}


def test_unknown_base_routes_to_general_bucket():
    k = parse_variable_key("aux_17")
    for scheme in (PNA, PTI, PGE, PV):
        assert group_of(scheme, k) == GroupKey(ET, ())


def test_refinement_relations(family):
    keys = family.binary_keys()
    pge = {k.raw: group_of(PGE, k) for k in keys}
    pna = {k.raw: group_of(PNA, k) for k in keys}
    pti = {k.raw: group_of(PTI, k) for k in keys}
    pv = {k.raw: group_of(PV, k) for k in keys}
    for a in keys:
        for b in keys:
            if pge[a.raw] == pge[b.raw]:
                assert pna[a.raw] == pna[b.raw]
            if pti[a.raw] == pti[b.raw]:
                assert pna[a.raw] == pna[b.raw]
    # PV refines everything else
    same_pv = [(a, b) for a in keys[:50] for b in keys[:50] if pv[a.raw] == pv[b.raw]]
    for a, b in same_pv:
        assert a.raw == b.raw


def test_group_counts_ordering_when_generators_dominate_hours():
    fam = generate_family(UCConfig(generators=8, hours=6, startup_categories=3,
                                   seed=7, variation_count=1))
    keys = fam.binary_keys()
    counts = [len({group_of(s, k) for k in keys}) for s in (ET, PNA, PTI, PGE, PV)]
    assert counts[0] == 1
    assert counts == sorted(counts)
    assert counts[4] == len(keys)


def test_group_assignment_instance_independent(family):
    a, b = family.variations[0], family.variations[1]
    keys_a = {v.key.raw: v.key for v in a.variables}
    keys_b = {v.key.raw: v.key for v in b.variables}
    assert keys_a.keys() == keys_b.keys()
    for raw in keys_a:
        for scheme in (PNA, PTI, PGE, PV):
            assert group_of(scheme, keys_a[raw]) == group_of(scheme, keys_b[raw])


def test_resolve_model_fallback_chain():
    class Store:
        scheme = PV
        general = object()
        by_group = {}
    key = parse_variable_key("is_on[0,3]")
    forest, fb = resolve_model(Store, PV, key)
    assert forest is Store.general and fb is True

    trained = object()
    Store.by_group = {group_of(PV, key): trained}
    forest, fb = resolve_model(Store, PV, key)
    assert forest is trained and fb is False

    class EtStore:
        scheme = ET
        general = object()
        by_group = {}
    forest, fb = resolve_model(EtStore, ET, key)
    assert forest is EtStore.general and fb is False


def test_encode_unique_within_scheme(family):
    keys = family.binary_keys()
    for scheme in (PNA, PTI, PGE, PV):
        groups = {group_of(scheme, k) for k in keys}
        encoded = {g.encode() for g in groups}
        assert len(encoded) == len(groups)
        for e in encoded:
            assert "/" not in e and " " not in e
