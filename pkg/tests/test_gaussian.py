import numpy as np
import pytest
import scipy.linalg as sla

from conformal_ruler.edoracle import (
    DenseBackend,
    majorana_operators,
    reduced_density,
    statevector_from_gaussian,
)
from conformal_ruler.gaussian import (
    BdGModel,
    GaussianBackend,
    GaussianError,
    MajoranaCovariance,
    QuadraticForm,
    canonical_form,
    correlation_length,
    gaussian_entropy,
    gaussian_modular_commutator,
    ground_state_covariance,
    ground_state_covariance_from_matrix,
    load_covariance,
    modular_generator,
    product_covariance,
    quad_mean,
    quad_moment,
    random_pure_covariance,
    reduce_covariance,
    save_covariance,
)
from conformal_ruler.lattice import EMPTY, Region, build_square_lattice, region_from_rect


def dense_form(form: QuadraticForm, n_modes: int) -> np.ndarray:
    """``(i/4) gamma^T H gamma + s`` as a dense matrix on ``n_modes`` fermions."""
    g = majorana_operators(n_modes)
    out = np.eye(2**n_modes, dtype=complex) * form.scalar_offset
    H = form.coefficient
    for a, k in enumerate(form.modes):
        for b, l in enumerate(form.modes):
            if H[a, b]:
                out += 0.25j * H[a, b] * (g[k] @ g[l]).toarray()
    return out


def random_form(rng, modes) -> QuadraticForm:
    n = len(modes)
    X = rng.normal(size=(n, n))
    return QuadraticForm(tuple(modes), X - X.T, float(rng.normal()))


@pytest.fixture(scope="module")
def small_pip():
    lat = build_square_lattice(10, 6)
    return lat, ground_state_covariance(BdGModel(lat))


def test_ground_state_pure(small_pip):
    _, cov = small_pip
    assert cov.purity_error() < 1e-8


@pytest.mark.parametrize("mu", [-2.0, 1.3, 3.0])
def test_ground_state_pure_any_parameters(mu):
    cov = ground_state_covariance(BdGModel(build_square_lattice(6, 5), mu=mu))
    assert cov.purity_error() < 1e-8


def test_trivial_phase_entropy_decays_with_gap():
    # short-range pairing keeps O((delta / mu)^2) entanglement per boundary bond
    lat = build_square_lattice(10, 10)
    block = region_from_rect(lat, 3, 3, 5, 5)
    S = [gaussian_entropy(reduce_covariance(ground_state_covariance(BdGModel(lat, mu=mu)), block)) for mu in (1.3, -2.0, -10.0, -40.0)]
    assert S == pytest.approx([1.7835913661537512, 0.5319292046934821, 0.1134069885744876, 0.014754487215485109], rel=1e-8)
    assert all(a > b for a, b in zip(S, S[1:]))


def test_correlation_length_paper_parameters(pip_desk):
    xi = correlation_length(pip_desk.extra["covariance"], pip_desk.lattice)
    # about 1.08 with the Ornstein-Zernike fit window d in [3, 12]
    assert 1.0 < xi < 1.4
    assert xi == pytest.approx(1.08, abs=0.02)


def test_degenerate_ground_state():
    with pytest.raises(GaussianError) as e:
        ground_state_covariance_from_matrix(np.zeros((4, 4)))
    assert e.value.kind == "degenerate-ground-state"


def test_canonical_form(rng):
    cov = random_pure_covariance(5, rng)
    X = rng.normal(size=(10, 10))
    G = 0.7 * cov.gamma + 0.01 * (X - X.T)
    Z, a = canonical_form(G)
    assert np.allclose(Z.T @ Z, np.eye(10), atol=1e-12)
    T = Z.T @ G @ Z
    blocks = np.zeros_like(T)
    for k, v in enumerate(a):
        blocks[2 * k, 2 * k + 1], blocks[2 * k + 1, 2 * k] = v, -v
    assert np.allclose(T, blocks, atol=1e-12)


def test_canonical_form_pairs_zero_modes():
    G = np.zeros((4, 4))
    G[0, 1], G[1, 0] = 0.5, -0.5
    Z, a = canonical_form(G)
    assert sorted(np.abs(a)) == pytest.approx([0.0, 0.5])


def test_reduce_full_and_empty(rng):
    cov = random_pure_covariance(4, rng)
    full = reduce_covariance(cov, Region(tuple(range(4))))
    assert np.array_equal(full.gamma, cov.gamma)
    empty = reduce_covariance(cov, EMPTY)
    assert empty.gamma.shape == (0, 0)
    assert gaussian_entropy(empty) == 0.0


def test_reduce_unknown_mode(rng):
    cov = random_pure_covariance(3, rng)
    with pytest.raises(GaussianError) as e:
        reduce_covariance(cov, Region((5,)))
    assert e.value.kind == "unknown-mode"


def test_half_of_product_state():
    cov = product_covariance([1, 0, 1, 1, 0, 0])
    assert gaussian_entropy(reduce_covariance(cov, Region((0, 1, 2)))) == 0.0


def test_entropy_examples():
    G = np.zeros((2, 2))
    assert gaussian_entropy(MajoranaCovariance.from_matrix(G)) == pytest.approx(np.log(2), abs=1e-15)
    assert gaussian_entropy(product_covariance([1, 0])) == 0.0
    bad = np.array([[0.0, 1.1], [-1.1, 0.0]])
    with pytest.raises(GaussianError) as e:
        gaussian_entropy(MajoranaCovariance.from_matrix(bad))
    assert e.value.kind == "spectrum-out-of-range"


def test_entropy_against_dense(rng):
    cov = random_pure_covariance(8, rng)
    dense = DenseBackend(statevector_from_gaussian(cov))
    g = GaussianBackend(cov)
    for _ in range(10):
        R = Region.of(np.flatnonzero(rng.random(8) < 0.5))
        assert abs(g.entropy(R) - dense.entropy(R)) < 1e-8


def test_modular_generator_mixed_mode():
    K = modular_generator(MajoranaCovariance.from_matrix(np.zeros((2, 2))))
    assert np.allclose(K.coefficient, 0)
    assert K.scalar_offset == pytest.approx(np.log(2), abs=1e-15)


def test_modular_generator_unit_weight():
    nu = np.tanh(0.5)
    K = modular_generator(MajoranaCovariance.from_matrix(np.array([[0.0, nu], [-nu, 0.0]])))
    assert abs(K.coefficient[0, 1]) == pytest.approx(1.0, abs=1e-14)
    # Tr e^{-K} = 1
    w = abs(K.coefficient[0, 1])
    assert np.exp(-K.scalar_offset) * 2 * np.cosh(w / 2) == pytest.approx(1.0, abs=1e-14)


def test_modular_generator_kernel_convention():
    K = modular_generator(product_covariance([1, 0]))
    assert np.allclose(K.coefficient, 0) and K.scalar_offset == 0.0


def test_modular_generator_dense_roundtrip(rng):
    cov = random_pure_covariance(6, rng)
    psi = statevector_from_gaussian(cov)
    region = Region((0, 1, 2))
    K = modular_generator(reduce_covariance(cov, region))
    rho_g = sla.expm(-dense_form(K, 3))
    rho_d = reduced_density(psi, [0, 1, 2]).matrix
    assert 0.5 * np.abs(np.linalg.eigvalsh(rho_g - rho_d)).sum() < 1e-8


def test_quad_moment_scalars():
    z = QuadraticForm.identity
    assert quad_moment(product_covariance([1]), z(2.0), z(-3.5)) == pytest.approx(-7.0)


def test_quad_moment_against_dense(rng):
    cov = random_pure_covariance(6, rng)
    psi = statevector_from_gaussian(cov).amplitudes
    modes = list(range(12))
    O1, O2 = random_form(rng, modes), random_form(rng, modes[3:9])
    exact = np.vdot(psi, dense_form(O1, 6) @ dense_form(O2.__class__(tuple(range(12)), O2.embed(modes), O2.scalar_offset), 6) @ psi)
    assert abs(quad_moment(cov, O1, O2) - exact) < 1e-8
    # hermiticity and variance positivity
    assert abs(quad_moment(cov, O1, O2) - np.conj(quad_moment(cov, O2, O1))) < 1e-10
    assert quad_moment(cov, O1, O1).real - quad_mean(cov, O1) ** 2 > -1e-10


def test_quad_moment_embedding_mismatch(rng):
    cov = random_pure_covariance(2, rng)
    with pytest.raises(GaussianError) as e:
        QuadraticForm((0, 1), np.zeros((2, 2))).embed([1, 2])
    assert e.value.kind == "embedding-mismatch"


def test_commutator_product_state():
    cov = product_covariance([1, 0, 1, 0, 1])
    assert gaussian_modular_commutator(cov, Region((0,)), Region((1, 2)), Region((3,))) == 0.0


def test_commutator_antisymmetry_and_dense(rng):
    cov = random_pure_covariance(9, rng)
    A, B, C = Region((0, 1)), Region((2, 3, 4)), Region((5, 6))
    j = gaussian_modular_commutator(cov, A, B, C)
    assert abs(j + gaussian_modular_commutator(cov, C, B, A)) < 1e-10
    dense = DenseBackend(statevector_from_gaussian(cov))
    assert abs(j - dense.modular_commutator(A, B, C)) < 1e-6


def test_commutator_overlap(rng):
    cov = random_pure_covariance(4, rng)
    with pytest.raises(GaussianError) as e:
        gaussian_modular_commutator(cov, Region((0, 1)), Region((1,)), Region((2,)))
    assert e.value.kind == "region-overlap"


def test_bulk_chirality_sign(small_pip):
    lat, cov = small_pip
    # counterclockwise triple around the centre: left, lower right, upper right
    left = region_from_rect(lat, 2, 1, 4, 4)
    lower, upper = region_from_rect(lat, 5, 1, 7, 2), region_from_rect(lat, 5, 3, 7, 4)
    j_ccw = gaussian_modular_commutator(cov, left, lower, upper)
    assert j_ccw < 0
    assert gaussian_modular_commutator(cov, upper, lower, left) == pytest.approx(-j_ccw, abs=1e-10)


@pytest.mark.parametrize("suffix", [".csv", ".bin"])
def test_dump_roundtrip(tmp_path, rng, suffix):
    cov = reduce_covariance(random_pure_covariance(5, rng), Region((1, 3, 4)))
    path = tmp_path / f"cov{suffix}"
    save_covariance(cov, path)
    back = load_covariance(path)
    assert back.modes == cov.modes
    assert np.array_equal(back.gamma, cov.gamma)
