import math

import numpy as np
import pytest

from zsl.autodiff import Tensor, affine, backward, grad_check
from zsl.datagen import class_samples, generate
from zsl.dataset import Dataset, fit_standardizer, standardize
from zsl.errors import CoverageError, ParseError, ShapeError
from zsl.models.data_schema import ClassifierConfig, GenConfig, VaeConfig
from zsl.zsl_head import (
    LOGVAR_BOUND,
    LatentCode,
    alignment_distance,
    build_latent_trainset,
    classifier_loss,
    decode,
    encode,
    fit_semantic_standardizer,
    init_vae,
    kl_term,
    predict,
    read_semantic_vectors,
    standardize_semantic,
    train_latent_classifier,
    train_vae,
    vae_loss,
    write_semantic_vectors,
    write_vae_history,
)


def _vae_cfg(**kw):
    base = dict(latent_width=2, hidden_width=4, beta=0.5, gamma=1.0, delta=1.0, lr=0.01, epochs=2, batch_size=4, seed=0)
    base.update(kw)
    return VaeConfig(**base)


@pytest.fixture
def batch(rng):
    x = rng.standard_normal((4, 5))
    attrs = rng.standard_normal((4, 3))
    labels = np.array([0, 0, 1, 1])
    noise_v = rng.standard_normal((4, 2))
    noise_s = rng.standard_normal((4, 2))
    return x, attrs, labels, noise_v, noise_s


@pytest.fixture
def seen_set(rng):
    labels = np.repeat(np.arange(3), 6)
    raw = rng.standard_normal((3, 5))[labels] * 3 + rng.standard_normal((18, 5))
    features = standardize(raw, *fit_standardizer(raw))
    semantic = {f"s{i}": rng.standard_normal(3) for i in range(3)}
    return Dataset(features, labels.astype(np.int64), ("s0", "s1", "s2")), semantic


def test_full_vae_loss_gradient_check(batch):
    x, attrs, labels, noise_v, noise_s = batch
    cfg = _vae_cfg()
    p = init_vae(5, 3, cfg)
    err = grad_check(lambda: vae_loss(p, x, attrs, labels, noise_v, noise_s, cfg)[0], p.combined())
    assert err < 1e-4


def test_zero_noise_draw_is_the_mean(batch):
    x = batch[0]
    p = init_vae(5, 3, _vae_cfg())
    code = encode(p.visual_encoder, x, np.zeros((4, 2)))
    np.testing.assert_array_equal(code.z.data, code.mu.data)
    assert decode(p.visual_decoder, code.z).shape == (4, 5)
    with pytest.raises(ShapeError):
        encode(p.visual_encoder, np.ones((4, 3)))


def test_kl_vanishes_at_the_prior():
    zeros = Tensor(np.zeros((3, 2)))
    assert kl_term(LatentCode(mu=zeros, logvar=zeros, z=zeros)).item() == pytest.approx(0.0)
    shifted = Tensor(np.ones((3, 2)))
    # 0.5 * (1 + 1 - 0 - 1) per coordinate, two coordinates per sample
    assert kl_term(LatentCode(mu=shifted, logvar=zeros, z=shifted)).item() == pytest.approx(1.0)


def test_zero_weights_leave_only_reconstruction(batch):
    x, attrs, labels, noise_v, noise_s = batch
    cfg = _vae_cfg(beta=0.0, gamma=0.0, delta=0.0)
    p = init_vae(5, 3, cfg)
    _, record = vae_loss(p, x, attrs, labels, noise_v, noise_s, cfg)
    assert record.total == pytest.approx(record.recon_visual + record.recon_semantic)
    assert record.cross_recon > 0 and record.align >= 0 and record.kl >= 0


def test_decoupled_visual_branch_ignores_attributes(batch):
    x, attrs, labels, noise_v, noise_s = batch
    cfg = _vae_cfg(beta=0.0, gamma=0.0, delta=0.0)
    p = init_vae(5, 3, cfg)
    params = p.combined()

    params.zero_grad()
    backward(vae_loss(p, x, attrs, labels, noise_v, noise_s, cfg)[0])
    first = p.visual_encoder.grads()

    params.zero_grad()
    backward(vae_loss(p, x, attrs * 10.0, labels, noise_v, noise_s, cfg)[0])
    second = p.visual_encoder.grads()
    for name in first:
        np.testing.assert_array_equal(first[name], second[name])


def test_alignment_is_zero_for_identical_encoders():
    p = init_vae(3, 3, _vae_cfg())
    for name, t in p.visual_encoder.items():
        p.semantic_encoder[name].data[...] = t.data
    semantic = {"a": np.array([1.0, 0.0, -1.0]), "b": np.array([0.5, 2.0, 0.0])}
    features = np.stack([semantic["a"], semantic["a"], semantic["b"]])
    seen = Dataset(features, np.array([0, 0, 1]), ("a", "b"))
    assert alignment_distance(p, seen, semantic) == pytest.approx(0.0, abs=1e-12)


def test_train_vae_records_every_step(seen_set):
    seen, semantic = seen_set
    cfg = _vae_cfg(epochs=3, batch_size=5)
    p, records = train_vae(init_vae(5, 3, cfg), seen, semantic, cfg)
    assert len(records) == 3 * 4
    assert all(math.isfinite(r.total) for r in records)
    assert write_vae_history(records).count("\n") == len(records) + 1


def test_train_vae_is_finite_at_default_benchmark_scale():
    bench = generate(GenConfig())
    seen = class_samples(bench, bench.seen)
    seen = seen.with_features(standardize(seen.features, *fit_standardizer(seen.features)))
    semantic = standardize_semantic({c: bench.semantic[c] for c in bench.seen},
                                    *fit_semantic_standardizer(bench.semantic, bench.seen))
    cfg = VaeConfig(epochs=2)
    _, records = train_vae(init_vae(seen.width, bench.semantic[bench.seen[0]].size, cfg), seen, semantic, cfg)
    assert len(records) == 2 * math.ceil(len(seen) / cfg.batch_size)
    for r in records:
        assert all(math.isfinite(v) for v in (r.recon_visual, r.recon_semantic, r.kl, r.cross_recon, r.align, r.total))


def test_alignment_shrinks_with_training(rng):
    labels = np.repeat(np.arange(4), 10)
    raw = rng.standard_normal((4, 6))[labels] * 3 + rng.standard_normal((40, 6))
    seen = Dataset(standardize(raw, *fit_standardizer(raw)), labels.astype(np.int64), ("a", "b", "c", "d"))
    semantic = {c: rng.standard_normal(3) for c in seen.classes}
    gains = []
    for seed in range(5):
        cfg = _vae_cfg(seed=seed, epochs=30, batch_size=8)
        p = init_vae(6, 3, cfg)
        before = alignment_distance(p, seen, semantic)
        p, _ = train_vae(p, seen, semantic, cfg)
        gains.append(before - alignment_distance(p, seen, semantic))
    assert np.median(gains) > 0


def test_train_vae_needs_every_semantic_vector(seen_set):
    seen, semantic = seen_set
    del semantic["s1"]
    with pytest.raises(CoverageError):
        train_vae(init_vae(5, 3, _vae_cfg()), seen, semantic, _vae_cfg())


def test_latent_trainset_layout(seen_set):
    seen, semantic = seen_set
    p = init_vae(5, 3, _vae_cfg())
    unseen = {"u0": np.ones(3), "u1": -np.ones(3)}
    latents = build_latent_trainset(p, seen, unseen, draws_per_item=7, seed=0)
    assert latents.classes == ("s0", "s1", "s2", "u0", "u1")
    assert latents.width == 2
    assert latents.counts() == {"s0": 6, "s1": 6, "s2": 6, "u0": 7, "u1": 7}


def test_latent_trainset_missing_attributes(seen_set):
    seen, _ = seen_set
    with pytest.raises(CoverageError):
        build_latent_trainset(init_vae(5, 3, _vae_cfg()), seen, {"u0": None}, 3, seed=0)


def test_classifier_needs_latents_for_every_class():
    latents = Dataset(np.zeros((2, 2)), np.array([0, 1]), ("a", "b", "c"))
    with pytest.raises(CoverageError):
        train_latent_classifier(latents, ClassifierConfig())


def test_classifier_learns_separable_latents(rng):
    centers = np.array([[5.0, 0.0], [0.0, 5.0], [-5.0, -5.0]])
    labels = np.repeat(np.arange(3), 20)
    latents = Dataset(centers[labels] + rng.standard_normal((60, 2)) * 0.5, labels, ("a", "b", "c"))
    clf = train_latent_classifier(latents, ClassifierConfig(epochs=20, batch_size=10, lr=0.05))
    assert classifier_loss(clf, latents) < 0.5 * math.log(3)


def test_predict_is_argmax_at_the_mean(seen_set, rng):
    seen, semantic = seen_set
    p = init_vae(5, 3, _vae_cfg())
    latents = build_latent_trainset(p, seen, {"u0": np.ones(3)}, 3, seed=0)
    clf = train_latent_classifier(latents, ClassifierConfig(epochs=1))
    x = rng.standard_normal((6, 5))
    expected = np.argmax(affine(clf.slice("linear"), encode(p.visual_encoder, x).mu).data, axis=1)
    np.testing.assert_array_equal(predict(p, clf, x), expected)
    assert predict(p, clf, x).max() < latents.n_classes


def test_predict_ignores_row_order(seen_set, rng):
    seen, _ = seen_set
    p = init_vae(5, 3, _vae_cfg())
    latents = build_latent_trainset(p, seen, {"u0": np.ones(3), "u1": -np.ones(3)}, 4, seed=0)
    clf = train_latent_classifier(latents, ClassifierConfig(epochs=2))
    x = rng.standard_normal((12, 5))
    perm = rng.permutation(12)
    np.testing.assert_array_equal(predict(p, clf, x[perm]), predict(p, clf, x)[perm])


def test_logvar_is_clamped_before_exp(batch):
    x = batch[0]
    p = init_vae(5, 3, _vae_cfg())
    p.visual_encoder["logvar.bias"].data[...] = 1e3
    code = encode(p.visual_encoder, x, np.zeros((4, 2)))
    assert np.all(code.logvar.data == LOGVAR_BOUND)
    assert math.isfinite(kl_term(code).item())
    p.visual_encoder["logvar.bias"].data[...] = -1e3
    assert np.all(encode(p.visual_encoder, x).logvar.data == -LOGVAR_BOUND)


def test_semantic_standardizer_uses_listed_classes_only():
    semantic = {"a": np.array([0.0, 10.0]), "b": np.array([2.0, 30.0]), "u": np.array([1.0, 40.0])}
    mean, std = fit_semantic_standardizer(semantic, ["a", "b"])
    np.testing.assert_allclose(mean, [1.0, 20.0])
    np.testing.assert_allclose(std, [1.0, 10.0])
    scaled = standardize_semantic({**semantic, "x": None}, mean, std)
    np.testing.assert_allclose(scaled["a"], [-1.0, -1.0])
    np.testing.assert_allclose(scaled["u"], [0.0, 2.0])
    assert scaled["x"] is None
    with pytest.raises(CoverageError):
        fit_semantic_standardizer(semantic, ["a", "missing"])


def test_semantic_vectors_round_trip():
    table = {"t01": np.array([0.1, -2.5, 1e-17]), "t02": np.array([3.0, 0.0, 7.25])}
    loaded = read_semantic_vectors(write_semantic_vectors(table))
    assert list(loaded) == ["t01", "t02"]
    for k in table:
        np.testing.assert_array_equal(loaded[k], table[k])


@pytest.mark.parametrize("text, line", [
    ("a\t1.0\t2.0\nb\t1.0\n", 2),
    ("a\t1.0\nb\tx\n", 2),
    ("a\t1.0\na\t2.0\n", 2),
    ("a\tnan\n", 1),
])
def test_semantic_vectors_parse_errors(text, line):
    with pytest.raises(ParseError) as exc:
        read_semantic_vectors(text)
    assert exc.value.line == line
