import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from sparsepq.codebook import (
    Codebook,
    ProductCodebook,
    gram_matrix,
    id_dtype,
    kmeans_train,
    lloyd_kmeans,
    load_product_codebook,
    make_codebook,
    odl_train,
    save_product_codebook,
    train_product_codebook,
)
from sparsepq.omp import omp_encode_batch, reconstruct_batch


def test_id_dtype_widths():
    assert id_dtype(1) is np.uint8
    assert id_dtype(256) is np.uint8
    assert id_dtype(257) is np.uint16
    assert id_dtype(65536) is np.uint16
    for bad in (0, 65537):
        with pytest.raises(ValueError):
            id_dtype(bad)


def test_gram_of_orthonormal_atoms_is_identity():
    g = gram_matrix(np.eye(4, dtype=np.float32))
    np.testing.assert_array_equal(g, np.eye(4, dtype=np.float32))


def test_gram_flags_duplicate_atoms():
    atoms = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    g = gram_matrix(atoms)
    assert g[0, 1] == pytest.approx(1.0)
    assert np.array_equal(g, g.T)
    np.testing.assert_allclose(np.diagonal(g), 1.0, atol=1e-6)


def test_codebook_validation_rejects_unnormalized_atoms():
    atoms = np.array([[2.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    cb = Codebook(atoms=atoms, gram=gram_matrix(atoms))
    with pytest.raises(ValueError, match="unit"):
        cb.validate()


def test_lloyd_recovers_two_distinct_points():
    data = np.array([[0.0, 0.0], [4.0, 4.0]] * 10, dtype=np.float32)
    cent, assign, history = lloyd_kmeans(data, k=2, iters=5, seed=0)
    assert history[-1] == pytest.approx(0.0, abs=1e-12)
    assert sorted(cent.tolist()) == [[0.0, 0.0], [4.0, 4.0]]
    # every point sits on its centroid
    np.testing.assert_allclose(cent[assign], data, atol=1e-7)


def test_lloyd_history_never_increases():
    rng = np.random.default_rng(1)
    for trial in range(10):
        data = rng.standard_normal((80, 4)).astype(np.float32)
        _, _, history = lloyd_kmeans(data, k=8, iters=12, seed=trial)
        assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_lloyd_reseeds_empty_cells():
    # only two distinct locations but three cells requested: one cell goes
    # empty on the first update and must be re-seeded, not left dangling
    data = np.array([[0.0, 0.0], [9.0, 9.0]] * 12, dtype=np.float32)
    cent, assign, history = lloyd_kmeans(data, k=3, iters=8, seed=2)
    assert cent.shape == (3, 2)
    assert np.isfinite(cent).all()
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_lloyd_input_validation():
    data = np.zeros((3, 2), dtype=np.float32)
    with pytest.raises(ValueError):
        lloyd_kmeans(data, k=4, iters=1, seed=0)
    with pytest.raises(ValueError):
        lloyd_kmeans(data, k=2, iters=0, seed=0)


def test_kmeans_train_produces_unit_atoms():
    rng = np.random.default_rng(3)
    cb = kmeans_train(rng.standard_normal((200, 6)).astype(np.float32), k=16)
    assert cb.atoms.shape == (16, 6)
    norms = np.linalg.norm(cb.atoms.astype(np.float64), axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-5)
    cb.validate()


def test_kmeans_train_reseeds_a_zero_norm_centroid():
    # four corners of a square centered on the origin collapse, under k=1,
    # to the zero centroid, which cannot be normalized; the trainer falls
    # back to the farthest data point
    data = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]], dtype=np.float32)
    cb = kmeans_train(data, k=1, iters=4, seed=0)
    assert cb.atoms.shape == (1, 2)
    assert np.linalg.norm(cb.atoms[0]) == pytest.approx(1.0, abs=1e-6)


def test_kmeans_train_gives_up_on_all_zero_data():
    data = np.zeros((8, 3), dtype=np.float32)
    with pytest.raises(RuntimeError):
        kmeans_train(data, k=2, iters=2, seed=0)


def test_kmeans_separates_four_blobs():
    rng = np.random.default_rng(4)
    centers = np.array([[8, 0, 0], [0, 8, 0], [0, 0, 8], [5, 5, 5]], dtype=np.float64)
    labels = rng.integers(0, 4, size=1000)
    data = (centers[labels] + 0.05 * rng.standard_normal((1000, 3))).astype(np.float32)
    _, assign, _ = lloyd_kmeans(data, k=4, iters=20, seed=1)
    # Hungarian matching between found cells and true labels
    overlap = np.zeros((4, 4), dtype=np.int64)
    for a, b in zip(assign, labels):
        overlap[a, b] += 1
    r, c = linear_sum_assignment(-overlap)
    agreement = overlap[r, c].sum() / 1000.0
    assert agreement >= 0.99


def test_odl_learns_an_exact_two_dimensional_span():
    rng = np.random.default_rng(5)
    basis, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    data = (rng.standard_normal((600, 2)) @ basis.T).astype(np.float32)
    seen = []
    cb = odl_train(data, k=2, L=2, epochs=5, seed=0, on_epoch=lambda e, obj: seen.append(obj))
    assert len(seen) == 5
    assert seen[-1] < 1e-6
    cb.validate()


def test_odl_atoms_are_unit_norm_and_deterministic():
    rng = np.random.default_rng(6)
    data = rng.standard_normal((400, 4)).astype(np.float32)
    a = odl_train(data, k=8, L=2, seed=3)
    b = odl_train(data, k=8, L=2, seed=3)
    np.testing.assert_array_equal(a.atoms, b.atoms)
    np.testing.assert_allclose(np.linalg.norm(a.atoms, axis=1), 1.0, atol=1e-5)


def _encode_mse(data, cb, L):
    sel, coef, _ = omp_encode_batch(data, cb, L)
    recon = reconstruct_batch(sel, coef, cb)
    return float(np.mean(np.sum((data - recon) ** 2, axis=1)))


def test_odl_is_competitive_with_kmeans_at_the_same_budget():
    # on isotropic data neither trainer has much structure to exploit, so
    # the two should land close together, with the one trained for the
    # sparse budget at least as good
    rng = np.random.default_rng(7)
    data = rng.standard_normal((3000, 8)).astype(np.float32)
    km = kmeans_train(data, k=32, iters=25, seed=0)
    od = odl_train(data, k=32, L=2, epochs=5, seed=0)
    mse_km = _encode_mse(data.astype(np.float64), km, 2)
    mse_od = _encode_mse(data.astype(np.float64), od, 2)
    assert mse_od <= mse_km * 1.02
    assert abs(mse_od - mse_km) <= 0.10 * max(mse_od, mse_km)


def test_product_codebook_requires_divisible_width():
    rng = np.random.default_rng(8)
    data = rng.standard_normal((100, 10)).astype(np.float32)
    with pytest.raises(ValueError, match="not divisible"):
        train_product_codebook(data, m=4, k=8)
    pcb = train_product_codebook(data, m=2, k=8, subspace_dims=[4, 6])
    assert pcb.dims == (4, 6)
    assert pcb.offsets == (0, 4, 10)
    with pytest.raises(ValueError):
        train_product_codebook(data, m=2, k=8, subspace_dims=[4, 4])


def test_product_codebook_split_yields_views():
    rng = np.random.default_rng(9)
    data = rng.standard_normal((60, 8)).astype(np.float32)
    pcb = train_product_codebook(data, m=2, k=4)
    parts = pcb.split(data)
    assert [p.shape[1] for p in parts] == [4, 4]
    assert parts[0].base is data


def test_product_codebook_training_is_deterministic_per_seed():
    rng = np.random.default_rng(10)
    data = rng.standard_normal((300, 8)).astype(np.float32)
    a = train_product_codebook(data, m=2, k=8, seed=5)
    b = train_product_codebook(data, m=2, k=8, seed=5)
    for x, y in zip(a.books, b.books):
        np.testing.assert_array_equal(x.atoms, y.atoms)
    c = train_product_codebook(data, m=2, k=8, seed=6)
    assert any(not np.array_equal(x.atoms, y.atoms) for x, y in zip(a.books, c.books))


def test_subspaces_train_with_distinct_streams():
    # identical data in both subspaces must not produce identical books,
    # otherwise the seed fan-out is broken
    rng = np.random.default_rng(11)
    half = rng.standard_normal((300, 4)).astype(np.float32)
    data = np.hstack([half, half])
    pcb = train_product_codebook(data, m=2, k=8, seed=0)
    assert not np.array_equal(pcb.books[0].atoms, pcb.books[1].atoms)


def test_codebook_file_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    data = rng.standard_normal((200, 6)).astype(np.float32)
    pcb = train_product_codebook(data, m=2, k=8, subspace_dims=[2, 4])
    path = tmp_path / "book.spqb"
    save_product_codebook(str(path), pcb)
    back = load_product_codebook(str(path))
    assert back.dims == pcb.dims
    for x, y in zip(back.books, pcb.books):
        np.testing.assert_array_equal(x.atoms, y.atoms)
        np.testing.assert_array_equal(x.gram, y.gram)


def test_codebook_file_rejects_corruption(tmp_path):
    rng = np.random.default_rng(13)
    pcb = train_product_codebook(rng.standard_normal((100, 4)).astype(np.float32), m=2, k=4)
    path = tmp_path / "book.spqb"
    save_product_codebook(str(path), pcb)
    raw = path.read_bytes()
    bad = tmp_path / "bad.spqb"

    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError, match="magic"):
        load_product_codebook(str(bad))

    bad.write_bytes(raw + b"\x00" * 4)
    with pytest.raises(ValueError, match="trailing"):
        load_product_codebook(str(bad))

    bad.write_bytes(raw[:10])
    with pytest.raises(ValueError):
        load_product_codebook(str(bad))


def test_product_codebook_validation():
    a = make_codebook(np.eye(3, dtype=np.float32))
    b = make_codebook(np.eye(4, dtype=np.float32))
    with pytest.raises(ValueError, match="share one k"):
        ProductCodebook(books=(a, b)).validate()
