"""Smoke tests for the python module: a handful of known values per operation."""

import math

import numpy as np

import halluscope as hs


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def test_var_and_svar():
    # Uniform attention over 6 positions, 4 of them image tokens.
    post = np.full((2, 3, 6), 1.0 / 6.0)
    var = hs.var_profile(post, 4)
    assert var.shape == (2, 3)
    assert np.allclose(var, 4.0 / 6.0)

    profile = np.full((20, 8), 0.12)
    approx(hs.svar(profile, (5, 18)), 14 * 0.12)


def test_lens_decode():
    w = np.eye(8)
    hidden = np.zeros(8)
    hidden[3] = 5.0
    probs, argmax = hs.lens_decode(hidden, w)
    assert argmax == 3
    approx(probs.sum(), 1.0, 1e-6)


def test_head_heatmap():
    row = np.full(8, 1.0 / 8.0)
    grid = hs.head_heatmap(row, 4)
    assert grid.shape == (2, 2)
    assert np.allclose(grid, 0.125)


def test_apply_intervention():
    scores = np.array([[-2.0, 1.0, 0.5]])
    out = hs.apply_intervention(scores, 1, 0.5)
    approx(out[0, 0], -1.0)  # -2 + 0.5 * |-2|
    approx(out[0, 1], 1.0)
    # alpha zero is the identity
    assert np.array_equal(hs.apply_intervention(scores, 3, 0.0), scores)


def test_presets():
    presets = hs.presets()
    assert presets["llava-1.5"] == ((5, 18), 0.5)
    assert presets["shikra"] == ((3, 13), 0.55)
    assert presets["minigpt4"] == ((3, 14), 0.5)


def test_roc_pr():
    rep = hs.roc_pr(np.array([0.9, 0.8, 0.3]), [1, 1, 0])
    approx(rep["auroc"], 1.0)
    approx(rep["average_precision"], 1.0)


def test_t_test():
    t, df, p = hs.t_test(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0]))
    approx(t, 0.0)
    approx(df, 4.0)
    approx(p, 0.5)
    t, _, _ = hs.t_test(np.array([1.0, 2.0, 3.0]), np.array([0.0, 1.0, 2.0]))
    approx(t, math.sqrt(1.5))


def test_chair():
    rep = hs.chair(
        {"img0": "a dog and a cat near a car"},
        {"img0": ["dog", "cat"]},
    )
    approx(rep["c_i"], 1.0 / 3.0)
    approx(rep["c_s"], 1.0)
    approx(rep["f1"], 0.8)

    mentions = hs.extract_mentions("a hot dog on a plate")
    assert [m[0] for m in mentions] == ["hot dog"]


def test_plant_dataset():
    data = hs.plant_dataset(num_real=100, num_halluc=100, seed=5)
    assert data["var"].shape == (200, 32, 32)
    scores = [hs.svar(v, (5, 18)) for v in data["var"]]
    rep = hs.roc_pr(np.array(scores), data["labels"])
    assert rep["auroc"] >= 0.95


def test_model_decode():
    model = hs.Model(
        num_layers=2, num_heads=2, model_dim=16, vocab_size=20,
        num_image_tokens=3, max_seq_len=24, seed=42,
    )
    rng = np.random.default_rng(0)
    img = rng.uniform(-0.5, 0.5, size=(3, 16))
    out_a = model.decode(img, [1, 2, 3], 4)
    out_b = model.decode(img, [1, 2, 3], 4)
    assert out_a["tokens"] == out_b["tokens"]
    # attention rows are normalized and causal
    for step, post in enumerate(out_a["post"]):
        assert post.shape[2] == 3 + 3 + step
        assert np.all(post >= 0)
        assert np.allclose(post.sum(axis=2), 1.0, atol=1e-6)
    # alpha=0 intervention changes nothing
    out_zero = model.decode(img, [1, 2, 3], 4, alpha=0.0, layers=(0, 1))
    assert out_zero["tokens"] == out_a["tokens"]


def test_scenes():
    scenes = hs.make_scenes(8, seed=11)
    rng_range = hs.scene_enrich_range()
    vocab = hs.scene_vocab()
    annotations = {s["id"]: [vocab[i] for i in s["gt_object_ids"]] for s in scenes}
    base = {s["id"]: hs.run_scene(s)["caption"] for s in scenes}
    fixed = {
        s["id"]: hs.run_scene(s, alpha=0.5, layers=rng_range)["caption"] for s in scenes
    }
    rep_base = hs.chair(base, annotations)
    rep_fixed = hs.chair(fixed, annotations)
    assert rep_fixed["c_i"] <= rep_base["c_i"]


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"ok {test.__name__}")
    print(f"{len(tests)} python smoke tests passed")


if __name__ == "__main__":
    main()
