import random

import pytest

import nscpy


def counting(n):
    return bytes(range(n))


def test_chacha20_block_vector():
    nonce = bytes([0, 0, 0, 9, 0, 0, 0, 0x4A, 0, 0, 0, 0])
    out = nscpy.chacha20_block(counting(32), nonce, 1)
    assert out.hex().startswith("10f1e7e4d13b5915500fdd1fa32071c4")
    assert len(out) == 64


def test_echacha_block_and_keystream():
    block = nscpy.echacha_block(counting(32), counting(16), 0, 20)
    assert len(block) == 96
    assert block.hex().startswith("9e02b8de741365644dabdda3b31fcc62")
    ks = nscpy.echacha_keystream(counting(32), counting(16), 20, 768)
    assert ks == block
    assert nscpy.qr6([0] * 6) == [0] * 6
    assert nscpy.rotl32(0x00104042, 16) == 0x40420010


def test_bad_inputs_raise_value_error():
    with pytest.raises(ValueError):
        nscpy.echacha_block(b"short", counting(16))
    with pytest.raises(ValueError):
        nscpy.echacha_keystream(counting(32), counting(16), 3, 768)
    with pytest.raises(ValueError):
        nscpy.kmp_search("", "0101")


def test_matchers_agree():
    rng = random.Random(1)
    for _ in range(200):
        text = "".join(rng.choice("01") for _ in range(rng.randint(1, 300)))
        pat = "".join(rng.choice("01") for _ in range(rng.randint(1, 24)))
        want = [i for i in range(len(text) - len(pat) + 1) if text.startswith(pat, i)]
        assert nscpy.naive_search(pat, text) == want
        assert nscpy.kmp_search(pat, text) == want
        assert nscpy.bm_search(pat, text) == want
    assert nscpy.longest_repeated_substring("0101") == 2


def test_features_shape():
    data = nscpy.echacha_keystream(counting(32), counting(16), 20, 8192)
    x = nscpy.extract_features(data)
    assert len(x) == nscpy.feature_dimension() == 280
    assert abs(sum(x[:256]) - 1.0) < 1e-9
    stats = nscpy.ngram_stats(data, 8)
    assert stats["windows"] == 8192 - 7


def test_metrics_and_advantage():
    m = nscpy.metrics(87, 85, 15, 13)
    assert m["accuracy"] == pytest.approx(0.86)
    assert nscpy.metrics(0, 10, 0, 10)["precision"] is None
    a = nscpy.advantage([1] * 10, [0] * 10)
    assert a["adv"] == 1.0
    pts, auc = nscpy.roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0) and auc == 1.0


def test_train_separable(tmp_path):
    rng = random.Random(3)

    def blob(n):
        xs, ys = [], []
        for i in range(n):
            y = i % 2
            xs.append([(3.0 if y else -3.0) + rng.gauss(0, 0.3), rng.gauss(0, 0.3)])
            ys.append(y)
        return xs, ys

    x, y = blob(100)
    vx, vy = blob(40)
    model = nscpy.train(x, y, vx, vy, hidden=[4], epochs=60)
    assert nscpy.evaluate(model, vx, vy)["accuracy"] == 1.0
    path = str(tmp_path / "m.nscmlp")
    model.save(path)
    assert nscpy.Model.load(path) == model


def test_small_experiment(tmp_path):
    rows = nscpy.run_experiment("distinguish", tmp_path, sequences=20, n_bits=4096, rounds=[2], epochs=20)
    models = {r["model"] for r in rows}
    assert models == {"mlp", "logistic", "reference"}
    assert (tmp_path / "reports" / "distinguish.csv").exists()
