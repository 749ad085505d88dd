import cv2
import numpy as np
import pytest
from fastapi.testclient import TestClient

from relightkit import lightsolve, service, synthgen


def png_bytes_16(values):
    """Encode linear [0,1] floats as 16-bit PNG bytes (RGB)."""
    raw = np.rint(np.clip(values, 0, 1) * 65535).astype(np.uint16)[:, :, ::-1]
    ok, buf = cv2.imencode(".png", raw)
    assert ok
    return buf.tobytes()


def mask_bytes(bits):
    ok, buf = cv2.imencode(".png", np.where(bits, 255, 0).astype(np.uint8))
    assert ok
    return buf.tobytes()


@pytest.fixture(scope="module")
def sample():
    spec = synthgen.SceneSpec(geometry="sphere", albedo="two-tone", size=64, seed=13)
    return synthgen.build_sample(spec, 2, np.random.default_rng(2))


@pytest.fixture(scope="module")
def oracle_client(sample):
    """Service backed by a ground-truth oracle decomposer.

    The oracle returns the generator's exact albedo/normals and solves the
    lighting in closed form, so service-level behavior can be tested at
    solver accuracy without a trained model.
    """

    def oracle(image, mask):
        # the oracle knows its scene, so it solves on the scene's true mask
        # even when the caller passes a full frame (e.g. transfer uploads)
        res = lightsolve.estimate_light(image, sample.albedo, sample.normals,
                                        sample.mask, ridge=0.0)
        return sample.albedo, sample.normals, res.lighting

    app = service.create_app(decomposer=oracle)
    return TestClient(app, raise_server_exceptions=False)


def decompose(client, sample, k=0):
    files = {"image": ("img.png", png_bytes_16(sample.images[k].data), "image/png"),
             "mask": ("mask.png", mask_bytes(sample.mask.bits), "image/png")}
    resp = client.post("/api/decompose", files=files, data={"space": "linear"})
    assert resp.status_code == 200
    return resp.json()


class TestHealth:
    def test_health(self, oracle_client):
        resp = oracle_client.get("/api/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["version"] == "v1"


class TestDecompose:
    def test_response_contract(self, oracle_client, sample):
        body = decompose(oracle_client, sample)
        assert len(body["lighting"]) == 27
        assert set(body["urls"]) == {"albedo", "normals", "shading", "reconstruction"}
        for url in body["urls"].values():
            resp = oracle_client.get(url)
            assert resp.status_code == 200
            assert resp.headers["content-type"] == "image/png"

    def test_lighting_matches_gt_at_solver_accuracy(self, oracle_client, sample):
        body = decompose(oracle_client, sample, k=0)
        got = np.asarray(body["lighting"]).reshape(9, 3)
        gt = sample.lightings[0].coeffs
        assert np.abs(got - gt).max() < 1e-3  # limited only by PNG quantization

    def test_bad_png_rejected(self, oracle_client):
        resp = oracle_client.post("/api/decompose",
                                  files={"image": ("x.png", b"not a png", "image/png")})
        assert resp.status_code == 400

    def test_oversize_rejected(self, oracle_client):
        big = np.zeros((1100, 8, 3))
        resp = oracle_client.post(
            "/api/decompose",
            files={"image": ("big.png", png_bytes_16(big), "image/png")})
        assert resp.status_code == 413


class TestRelight:
    def test_identity_swap_returns_reconstruction_bytes(self, oracle_client, sample):
        body = decompose(oracle_client, sample)
        recon = oracle_client.get(body["urls"]["reconstruction"]).content
        relit = oracle_client.post("/api/relight",
                                   json={"session_id": body["session_id"],
                                         "lighting": body["lighting"]})
        assert relit.status_code == 200
        assert relit.content == recon

    def test_pure_function_of_inputs(self, oracle_client, sample):
        body = decompose(oracle_client, sample)
        lighting = synthgen.sample_lighting(np.random.default_rng(3)).to_flat()
        r1 = oracle_client.post("/api/relight", json={"session_id": body["session_id"],
                                                      "lighting": lighting})
        r2 = oracle_client.post("/api/relight", json={"session_id": body["session_id"],
                                                      "lighting": lighting})
        assert r1.content == r2.content

    def test_wrong_length_rejected(self, oracle_client, sample):
        body = decompose(oracle_client, sample)
        resp = oracle_client.post("/api/relight",
                                  json={"session_id": body["session_id"],
                                        "lighting": [0.0] * 26})
        assert resp.status_code == 400

    def test_unknown_session(self, oracle_client):
        resp = oracle_client.post("/api/relight",
                                  json={"session_id": "deadbeef",
                                        "lighting": [0.0] * 27})
        assert resp.status_code == 404


class TestTransfer:
    def test_reference_lighting_recovered(self, oracle_client, sample):
        body = decompose(oracle_client, sample, k=0)
        files = {"reference": ("ref.png", png_bytes_16(sample.images[1].data),
                               "image/png")}
        resp = oracle_client.post("/api/transfer",
                                  data={"source_session_id": body["session_id"],
                                        "space": "linear"},
                                  files=files)
        assert resp.status_code == 200
        payload = resp.json()
        got = np.asarray(payload["lighting"]).reshape(9, 3)
        assert np.abs(got - sample.lightings[1].coeffs).max() < 1e-3
        relit = oracle_client.get(payload["relit_url"])
        assert relit.status_code == 200
        assert relit.headers["content-type"] == "image/png"

    def test_unknown_source_session(self, oracle_client, sample):
        files = {"reference": ("r.png", png_bytes_16(sample.images[1].data),
                               "image/png")}
        resp = oracle_client.post("/api/transfer",
                                  data={"source_session_id": "nope"},
                                  files=files)
        assert resp.status_code == 404


class TestLatency:
    def test_relight_under_100ms_at_128(self):
        import time
        spec = synthgen.SceneSpec(geometry="sphere", albedo="two-tone", size=128,
                                  seed=3)
        sample = synthgen.build_sample(spec, 2, np.random.default_rng(5))

        def oracle(image, mask, sample=sample):
            return sample.albedo, sample.normals, sample.lightings[0]

        client = TestClient(service.create_app(decomposer=oracle))
        body = decompose(client, sample)
        lighting = sample.lightings[1].to_flat()
        timings = []
        for _ in range(5):
            t0 = time.perf_counter()
            resp = client.post("/api/relight", json={"session_id": body["session_id"],
                                                     "lighting": lighting})
            timings.append(time.perf_counter() - t0)
            assert resp.status_code == 200
        # slider interaction target; median smooths scheduler noise
        assert sorted(timings)[2] < 0.100


class TestSessionCache:
    def test_lru_eviction(self):
        cache = service.SessionCache(max_sessions=2, ttl_seconds=1e9)
        s = service.Session(albedo=None, normals=None, mask=None, lighting=None,
                            created=0.0)
        import time
        mk = lambda: service.Session(albedo=None, normals=None, mask=None,
                                     lighting=None, created=time.monotonic())
        a, b, c = cache.put(mk()), cache.put(mk()), cache.put(mk())
        assert cache.get(a) is None  # evicted
        assert cache.get(b) is not None
        assert cache.get(c) is not None

    def test_ttl_expiry(self):
        import time
        cache = service.SessionCache(max_sessions=4, ttl_seconds=0.0)
        sid = cache.put(service.Session(albedo=None, normals=None, mask=None,
                                        lighting=None, created=time.monotonic() - 1))
        assert cache.get(sid) is None


class TestModelBackedService:
    def test_with_micro_checkpoint(self, tmp_path, sample):
        from relightkit import model, train
        spec = synthgen.SceneSpec(geometry="sphere", albedo="flat", size=16, seed=0)
        tiny = synthgen.build_sample(spec, 2, np.random.default_rng(0))
        cfg = train.TrainConfig(steps=2, batch_size=1, seed=0,
                                model=model.ModelConfig(channels=(4, 6, 8),
                                                        light_hidden=8,
                                                        dtype="float32"))
        ckpt = tmp_path / "m.ckpt"
        train.train([tiny], cfg, out_path=str(ckpt))
        app = service.create_app(checkpoint_path=str(ckpt))
        client = TestClient(app)
        health = client.get("/api/health").json()
        assert health["checkpoint_hash"] != "none"
        body = decompose(client, sample)
        assert len(body["lighting"]) == 27
