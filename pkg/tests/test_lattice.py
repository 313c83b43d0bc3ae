import pytest

from conformal_ruler.lattice import (
    EMPTY,
    BulkMove,
    ConformalRuler,
    LatticeError,
    Region,
    build_square_lattice,
    deform_ruler,
    edge_strip_regions,
    region_from_rect,
    region_from_rects,
    validate_ruler,
)


@pytest.fixture
def lat():
    return build_square_lattice(20, 10)


@pytest.fixture
def strip(lat):
    return edge_strip_regions(lat, 2, 4, 3)


def strip_ruler(r):
    return ConformalRuler(r["A"], r["X"], r["B"], r["C"], r["Y"])


def test_smallest_lattice():
    lat = build_square_lattice(4, 4)
    assert lat.n_sites == 16
    assert len(lat.neighbors(lat.index(0, 0))) == 2
    assert len(lat.neighbors(lat.index(1, 1))) == 4


def test_desk_lattice_count():
    assert build_square_lattice(24, 12).n_sites == 288


@pytest.mark.parametrize("w,h", [(3, 8), (8, 3), (0, 10)])
def test_dimension_too_small(w, h):
    with pytest.raises(LatticeError) as e:
        build_square_lattice(w, h)
    assert e.value.kind == "dimension-too-small"


def test_row_major_roundtrip(lat):
    for s in range(lat.n_sites):
        assert lat.index(*lat.coords(s)) == s
    assert lat.index(3, 2) == 2 * 20 + 3


def test_bonds_count(lat):
    bonds = lat.bonds()
    assert len(bonds) == 19 * 10 + 20 * 9
    assert all(b - a in (1, 20) for a, b, _ in bonds)


def test_boundary_loop(lat):
    loop = lat.boundary_loop()
    assert len(loop) == 2 * (20 + 10) - 4
    assert len(set(loop)) == len(loop)
    assert all(lat.is_boundary(s) for s in loop)
    # consecutive loop sites are lattice neighbours, including the wrap
    for a, b in zip(loop, loop[1:] + loop[:1]):
        assert b in lat.neighbors(a)
    # counterclockwise: bottom row left to right first
    assert loop[:3] == [0, 1, 2]


def test_rect_examples(lat):
    assert region_from_rect(lat, 0, 0, 19, 9) == lat.all_sites()
    assert region_from_rect(lat, 2, 3, 2, 3).sites == (lat.index(2, 3),)
    r = region_from_rects(lat, [(0, 0, 1, 1), (5, 5, 6, 5), (1, 1, 2, 1)])
    assert list(r.sites) == sorted(set(r.sites))
    assert len(r) == 4 + 2 + 1


def test_rect_out_of_bounds(lat):
    with pytest.raises(LatticeError) as e:
        region_from_rect(lat, 18, 0, 20, 1)
    assert e.value.kind == "out-of-bounds"


def test_region_algebra(lat):
    a = region_from_rect(lat, 0, 0, 3, 3)
    b = region_from_rect(lat, 2, 2, 5, 5)
    assert len(a | b) == 16 + 16 - 4
    assert len(a & b) == 4
    assert (a - b).isdisjoint(b)
    assert lat.complement(a) | a == lat.all_sites()
    with pytest.raises(LatticeError):
        Region((1, 1))


def test_strip_ruler_valid(lat, strip):
    rep = validate_ruler(lat, strip_ruler(strip))
    assert rep.ok, rep.failures()


def test_all_strip_rulers_valid(lat, strip):
    r = strip
    family = [
        ConformalRuler(r["A"], r["X"], r["B"], r["C"], r["Y"]),
        ConformalRuler(r["B"], r["Y"], r["C"], r["D"], r["Z"]),
        ConformalRuler(r["A"] | r["B"], r["X"] | r["Y"], r["C"], r["D"], r["Z"]),
        ConformalRuler(r["A"], r["X"], r["B"], r["C"] | r["D"], r["Y"] | r["Z"]),
        ConformalRuler(r["A"], r["X"] | r["Y"], r["B"] | r["C"], r["D"], r["Z"]),
    ]
    for ruler in family:
        assert validate_ruler(lat, ruler).ok


def test_reversed_ruler_valid(lat, strip):
    ruler = strip_ruler(strip)
    rev = ruler.reversed()
    assert rev.A == ruler.C and rev.C_prime == ruler.A_prime
    assert validate_ruler(lat, rev).ok


def test_a_adjacent_to_c(lat, strip):
    r = strip
    # drop B's prime shield and let A touch C directly
    bad = ConformalRuler(r["A"], r["X"], r["B"], r["C"], r["Y"]).replace(C=r["C"] | r["B"], B=EMPTY)
    rep = validate_ruler(lat, bad)
    assert not rep.ok
    assert not rep.checks["A_C_not_adjacent"]
    assert rep.offending["A_C_not_adjacent"]


def test_b_exposed_to_bulk(lat, strip):
    r = strip
    ruler = strip_ruler(r).replace(A_prime=region_from_rect(lat, 2, 3, 6, 3))
    rep = validate_ruler(lat, ruler)
    assert not rep.checks["B_shielded"]
    assert rep.offending["B_shielded"]


def test_prime_on_edge_fails(lat, strip):
    ruler = strip_ruler(strip)
    ruler = ruler.replace(A_prime=ruler.A_prime | region_from_rect(lat, 0, 3, 1, 3))
    rep = validate_ruler(lat, ruler)
    assert not rep.checks["primes_off_edge"]


def test_validation_is_pure(lat, strip):
    ruler = strip_ruler(strip)
    assert validate_ruler(lat, ruler) == validate_ruler(lat, ruler)


def test_deform_transfer(lat, strip):
    ruler = strip_ruler(strip)
    site = Region((lat.index(5, 2),))
    new = deform_ruler(lat, ruler, BulkMove("transfer", site, "A", "B"))
    assert site.sites[0] in new.B and site.sites[0] not in new.A
    assert new.edge_triple == ruler.edge_triple


def test_deform_grow(lat, strip):
    ruler = strip_ruler(strip)
    site = Region((lat.index(2, 6),))
    new = deform_ruler(lat, ruler, BulkMove("grow", site, target="A_prime"))
    assert len(new.A_prime) == len(ruler.A_prime) + 1


def test_deform_boundary_site_rejected(lat, strip):
    ruler = strip_ruler(strip)
    with pytest.raises(LatticeError) as e:
        deform_ruler(lat, ruler, BulkMove("transfer", Region((lat.index(5, 0),)), "A", "B"))
    assert e.value.kind == "invalid-move"


def test_deform_breaking_shield_rejected(lat, strip):
    ruler = strip_ruler(strip)
    # removing the A' site above B exposes B to the bulk
    with pytest.raises(LatticeError):
        deform_ruler(lat, ruler, BulkMove("shrink", Region((lat.index(6, 3),)), "A_prime"))
