"""Reference classifier, oracle adapters, and the wire protocol."""

import base64
import json
import socket

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

import oracle_conformance as conf
from vignattack.errors import ConfigError, OracleError, OracleTransportError, ProtocolError
from vignattack.oracle import (
    InProcessOracle,
    OracleServer,
    ReferenceClassifier,
    RemoteOracle,
    decode_array,
    encode_array,
    oracle_factory_from_spec,
)


def make_classifier(seed: int = 0, shape=(6, 5, 1), hidden: int = 8, classes: int = 3):
    rng = np.random.default_rng(seed)
    d_in = int(np.prod(shape))
    return ReferenceClassifier(
        w1=rng.normal(0.0, 0.4, size=(d_in, hidden)),
        b1=rng.normal(0.0, 0.1, size=hidden),
        w2=rng.normal(0.0, 0.4, size=(hidden, classes)),
        b2=rng.normal(0.0, 0.1, size=classes),
        shape=tuple(shape),
    )


# ---------------------------------------------------------------------------
# ReferenceClassifier


def test_classifier_shapes_and_scores():
    clf = make_classifier()
    rng = np.random.default_rng(1)
    image = rng.uniform(0, 1, size=clf.shape)
    logits = clf.logits(image)
    assert logits.shape == (3,)
    scores = clf.scores(image)
    assert_allclose(scores.sum(), 1.0, rtol=1e-12)
    assert np.all(scores > 0)
    assert clf.predict(image) == int(np.argmax(logits))


def test_classifier_tie_breaks_to_lowest_label():
    # Zero second layer: all logits equal, argmax picks class 0.
    clf = make_classifier()
    clf.w2 = np.zeros_like(clf.w2)
    clf.b2 = np.zeros_like(clf.b2)
    image = np.full(clf.shape, 0.5)
    assert clf.predict(image) == 0


def test_classifier_loss_decreases_toward_true_label():
    clf = make_classifier(seed=3)
    rng = np.random.default_rng(4)
    image = rng.uniform(0, 1, size=clf.shape)
    label = clf.predict(image)
    loss_true, _ = clf.loss_and_input_grad(image, label)
    other = (label + 1) % clf.classes
    loss_other, _ = clf.loss_and_input_grad(image, other)
    assert loss_true < loss_other


def test_classifier_gradient_matches_finite_differences():
    # 50 seeded draws; draws whose probe interval straddles a ReLU kink
    # are skipped, since the analytic gradient is one-sided there.
    checked = 0
    for seed in range(50):
        rng = np.random.default_rng([seed, 99])
        clf = make_classifier(seed=seed, shape=(4, 4, 1), hidden=6)
        image = rng.uniform(0.05, 0.95, size=clf.shape)
        label = int(rng.integers(0, clf.classes))
        loss, grad = clf.loss_and_input_grad(image, label)
        step = 1e-6
        pre = (image.reshape(-1) @ clf.w1) + clf.b1
        margin = np.abs(pre).min()
        if margin < 1e-4:
            continue
        checked += 1
        for _ in range(3):
            pos = tuple(int(rng.integers(0, s)) for s in clf.shape)
            hi = image.copy()
            lo = image.copy()
            hi[pos] += step
            lo[pos] -= step
            fd = (clf.loss_and_input_grad(hi, label)[0]
                  - clf.loss_and_input_grad(lo, label)[0]) / (2 * step)
            denom = max(abs(fd), abs(grad[pos]), 1e-10)
            assert abs(grad[pos] - fd) / denom < 1e-4, f"seed {seed} at {pos}"
    assert checked >= 40


def test_classifier_save_load_round_trip(tmp_path):
    clf = make_classifier(seed=7)
    path = tmp_path / "weights.npz"
    clf.save(path)
    back = ReferenceClassifier.load(path)
    assert back.shape == clf.shape
    for name in ("w1", "b1", "w2", "b2"):
        assert_array_equal(getattr(back, name), getattr(clf, name))


def test_classifier_validates_weight_shapes():
    clf = make_classifier()
    with pytest.raises(ValueError):
        ReferenceClassifier(
            w1=clf.w1[:-1], b1=clf.b1, w2=clf.w2, b2=clf.b2, shape=clf.shape
        )
    with pytest.raises(ValueError):
        ReferenceClassifier(
            w1=clf.w1, b1=clf.b1, w2=clf.w2[:, :1], b2=clf.b2[:1], shape=clf.shape
        )


def test_classifier_load_rejects_missing_arrays(tmp_path):
    path = tmp_path / "bad.npz"
    np.savez(path, w1=np.zeros((4, 2)))
    with pytest.raises(OracleError):
        ReferenceClassifier.load(path)
    with pytest.raises(OracleError):
        ReferenceClassifier.load(tmp_path / "absent.npz")


# ---------------------------------------------------------------------------
# In-process oracle


def test_in_process_oracle_conformance():
    oracle = InProcessOracle(make_classifier())
    conf.run_all(oracle, seed=0, shape=(6, 5, 1), classes=3)


def test_in_process_narrows_to_float32():
    oracle = InProcessOracle(make_classifier(seed=11))
    rng = np.random.default_rng(12)
    image = rng.uniform(0, 1, size=oracle.shape)
    _, grad = oracle.loss_grad(image, 0)
    assert_array_equal(grad, grad.astype("<f4").astype(np.float64))


def test_in_process_rejects_wrong_shape():
    oracle = InProcessOracle(make_classifier())
    with pytest.raises(ValueError):
        oracle.loss_grad(np.zeros((2, 2, 1)), 0)


def test_packaged_oracle_conformance(packaged_classifier):
    conf.run_all(InProcessOracle(packaged_classifier), seed=5,
                 shape=(16, 16, 1), classes=3)


# ---------------------------------------------------------------------------
# Wire encoding


def test_array_codec_round_trip():
    rng = np.random.default_rng(13)
    arr = rng.normal(0, 1, size=(3, 4, 1))
    decoded = decode_array(encode_array(arr), 12)
    assert_array_equal(decoded, arr.astype("<f4").astype(np.float64).reshape(-1))


def test_decode_array_rejects_bad_payloads():
    with pytest.raises(ProtocolError):
        decode_array("not base64!!!", 4)
    good = encode_array(np.zeros(4))
    with pytest.raises(ProtocolError):
        decode_array(good, 5)


# ---------------------------------------------------------------------------
# Loopback server


@pytest.fixture()
def loopback():
    clf = make_classifier(seed=21)
    server = OracleServer(InProcessOracle(clf)).start()
    host, port = server.address
    try:
        yield clf, host, port
    finally:
        server.stop()


def test_loopback_conformance(loopback):
    _, host, port = loopback
    with RemoteOracle(host, port) as oracle:
        conf.run_all(oracle, seed=1, shape=(6, 5, 1), classes=3)


def test_loopback_matches_in_process_bit_for_bit(loopback):
    clf, host, port = loopback
    local = InProcessOracle(clf)
    rng = np.random.default_rng(22)
    with RemoteOracle(host, port) as remote:
        for _ in range(5):
            image = rng.uniform(0, 1, size=clf.shape)
            label = int(rng.integers(0, clf.classes))
            loss_l, grad_l = local.loss_grad(image, label)
            loss_r, grad_r = remote.loss_grad(image, label)
            assert loss_l == loss_r
            assert_array_equal(grad_l, grad_r)
            assert local.predict(image) == remote.predict(image)


def test_remote_oracle_propagates_oracle_errors(loopback):
    _, host, port = loopback
    with RemoteOracle(host, port) as remote:
        with pytest.raises(OracleError):
            remote.loss_grad(np.zeros((6, 5, 1)), 99)
        # The connection survives an application-level error.
        assert isinstance(remote.predict(np.zeros((6, 5, 1))), int)


def test_remote_oracle_checks_image_shape(loopback):
    _, host, port = loopback
    with RemoteOracle(host, port) as remote:
        with pytest.raises(ValueError):
            remote.loss_grad(np.zeros((1, 1, 1)), 0)


def test_raw_protocol_hello_and_errors(loopback):
    _, host, port = loopback
    with socket.create_connection((host, port), timeout=10) as sock:
        rfile = sock.makefile("rb")
        wfile = sock.makefile("wb")

        hello = json.loads(rfile.readline())
        assert hello["op"] == "hello"
        assert hello["shape"] == [6, 5, 1]
        assert hello["classes"] == 3
        assert isinstance(hello["reentrant"], bool)

        def send(obj_or_text):
            if isinstance(obj_or_text, str):
                wfile.write(obj_or_text.encode() + b"\n")
            else:
                wfile.write(json.dumps(obj_or_text).encode() + b"\n")
            wfile.flush()
            return json.loads(rfile.readline())

        reply = send("this is not json")
        assert reply["id"] is None
        assert "error" in reply

        reply = send({"id": 7, "op": "frobnicate"})
        assert reply["id"] == 7
        assert reply["error"] == "unsupported"

        reply = send({"id": 8, "op": "loss_grad"})
        assert reply["id"] == 8
        assert "error" in reply

        image = np.full((6, 5, 1), 0.25)
        reply = send({"id": 9, "op": "predict", "image": encode_array(image)})
        assert reply["id"] == 9
        assert 0 <= reply["label"] < 3
        assert len(reply["scores"]) == 3

        reply = send(
            {"id": 10, "op": "loss_grad", "label": 1, "image": encode_array(image)}
        )
        assert reply["id"] == 10
        assert isinstance(reply["loss"], float)
        grad = decode_array(reply["grad"], 30)
        assert np.all(np.isfinite(grad))


def test_remote_oracle_rejects_dead_port():
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        free_port = probe.getsockname()[1]
    with pytest.raises(OracleTransportError):
        RemoteOracle("127.0.0.1", free_port, timeout=0.5)


def test_server_context_manager():
    with OracleServer(InProcessOracle(make_classifier())) as server:
        host, port = server.address
        with RemoteOracle(host, port) as oracle:
            assert oracle.classes == 3


# ---------------------------------------------------------------------------
# Oracle specs


def test_factory_spec_toy():
    oracle = oracle_factory_from_spec("toy")()
    assert tuple(oracle.shape) == (16, 16, 1)
    assert oracle.classes == 3


def test_factory_spec_builtin(tmp_path):
    clf = make_classifier(seed=31)
    path = tmp_path / "w.npz"
    clf.save(path)
    oracle = oracle_factory_from_spec(f"builtin:{path}")()
    assert tuple(oracle.shape) == clf.shape


def test_factory_spec_remote(loopback):
    _, host, port = loopback
    factory = oracle_factory_from_spec(f"remote:{host}:{port}")
    with factory() as oracle:
        assert oracle.classes == 3


def test_factory_spec_errors():
    with pytest.raises(ConfigError):
        oracle_factory_from_spec("builtin:")
    with pytest.raises(ConfigError):
        oracle_factory_from_spec("remote:no-port")
    with pytest.raises(ConfigError):
        oracle_factory_from_spec("unknown-kind")
