from __future__ import annotations

import base64
import hashlib
import json
import time
from pathlib import Path

import jsonschema
import pytest
from fastapi.testclient import TestClient

from genhub.hub import Hub
from genhub.service import create_app, resolve_ui_dir

GOLDEN = Path(__file__).parent / "golden"


def load_golden(name: str):
    return json.loads((GOLDEN / name).read_text())


def load_schema(name: str):
    return json.loads((GOLDEN / name).read_text())


def scrub(obj):
    """Replace machine-dependent metadata fields with placeholders."""
    if isinstance(obj, dict):
        out = {}
        for key, value in obj.items():
            if key == "package_url":
                out[key] = "<URL>"
            elif key == "checksum_sha256":
                out[key] = "<SHA256>"
            elif key == "package_size_bytes":
                out[key] = "<SIZE>"
            else:
                out[key] = scrub(value)
        return out
    if isinstance(obj, list):
        return [scrub(v) for v in obj]
    return obj


@pytest.fixture(scope="module")
def service_hub(fixture_index_path, tmp_path_factory) -> Hub:
    return Hub(fixture_index_path, cache_root=tmp_path_factory.mktemp("svc_cache"))


@pytest.fixture(scope="module")
def client(service_hub) -> TestClient:
    return TestClient(create_app(service_hub, ui_dir=None))


# ------------------------------------------------------------ golden files


def test_models_list_matches_golden(client):
    response = client.get("/v1/models")
    assert response.status_code == 200
    assert response.json() == load_golden("models_list.json")


def test_model_metadata_matches_golden(client):
    response = client.get("/v1/models/00001_TOY_PATCH")
    assert response.status_code == 200
    assert scrub(response.json()) == load_golden("model_metadata.json")


def test_search_matches_golden(client):
    response = client.post("/v1/search", json={"values": ["patches", "mammography"], "operator": "AND"})
    assert response.status_code == 200
    assert response.json() == load_golden("search_and.json")


def test_rank_matches_golden_table_order(client):
    response = client.post("/v1/rank", json={"metric": "FID.ImageNet.real-syn", "order": "ascending"})
    assert response.status_code == 200
    payload = response.json()
    assert payload == load_golden("rank_ascending.json")
    values = [item["value"] for item in payload["items"]]
    assert values == sorted(values) == [67.60, 80.51, 150.16]


def test_unknown_model_error_matches_golden(client):
    response = client.get("/v1/models/99999_X")
    assert response.status_code == 404
    assert response.json() == load_golden("error_unknown_model.json")


# ----------------------------------------------------------- facade parity


def test_search_parity_with_library(client, service_hub):
    for operator in ("AND", "OR", "XOR"):
        http_ids = client.post(
            "/v1/search", json={"values": ["patches", "mammography"], "operator": operator}
        ).json()["model_ids"]
        assert http_ids == service_hub.find_models(["patches", "mammography"], operator).ids()


def test_rank_parity_with_library(client, service_hub):
    payload = client.post("/v1/rank", json={"metric": "FID.ImageNet.real-syn", "order": "descending"}).json()
    ranked = service_hub.rank_models("FID.ImageNet.real-syn", "descending")
    assert [(i["model_id"], i["value"]) for i in payload["items"]] == list(ranked.items)


def test_metadata_parity_with_library(client, service_hub):
    http_payload = client.get("/v1/models/00003_TOY_POLYP").json()
    lib_payload = {"model_id": "00003_TOY_POLYP"}
    lib_payload.update(service_hub.get_metadata("00003_TOY_POLYP").to_dict())
    assert http_payload == lib_payload


def test_generate_parity_with_library(client, service_hub, tmp_path_factory):
    http_dir = tmp_path_factory.mktemp("http_out")
    lib_dir = tmp_path_factory.mktemp("lib_out")
    response = client.post(
        "/v1/models/00001_TOY_PATCH/generate",
        json={"num_samples": 4, "seed": 11, "output_path": str(http_dir)},
    )
    assert response.status_code == 200
    lib_result = service_hub.generate("00001_TOY_PATCH", num_samples=4, seed=11, output_path=lib_dir)

    def digests(directory: Path) -> dict[str, str]:
        return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}

    assert digests(http_dir) == digests(lib_dir)
    assert len(lib_result.records) == 4


# ------------------------------------------------------------ generate flow


def test_generate_sync_schema(client, tmp_path_factory):
    out = tmp_path_factory.mktemp("sync_out")
    response = client.post(
        "/v1/models/00001_TOY_PATCH/generate",
        json={"num_samples": 3, "seed": 0, "output_path": str(out)},
    )
    assert response.status_code == 200
    payload = response.json()
    jsonschema.validate(payload, load_schema("generate_response.schema.json"))
    assert payload["num_samples"] == 3
    for record in payload["records"]:
        for path in record["files"].values():
            assert Path(path).is_file()


def test_generate_async_job_completes(client, tmp_path_factory):
    out = tmp_path_factory.mktemp("job_out")
    response = client.post(
        "/v1/models/00001_TOY_PATCH/generate",
        json={"num_samples": 100, "seed": 5, "output_path": str(out)},
    )
    assert response.status_code == 202
    job_id = response.json()["job_id"]

    deadline = time.monotonic() + 60
    state = None
    while time.monotonic() < deadline:
        payload = client.get(f"/v1/jobs/{job_id}").json()
        jsonschema.validate(payload, load_schema("job_response.schema.json"))
        state = payload["state"]
        if state in ("done", "failed"):
            break
        time.sleep(0.2)
    assert state == "done"
    assert payload["result"]["num_samples"] == 100
    assert len(list(out.iterdir())) == 100


def test_unknown_job(client):
    response = client.get("/v1/jobs/nope")
    assert response.status_code == 400
    assert response.json()["error"]["code"] == "bad_query"


def test_generate_unknown_model(client):
    response = client.post("/v1/models/99999_X/generate", json={"num_samples": 1})
    assert response.status_code == 404
    assert response.json()["error"]["code"] == "unknown_model"


def test_generate_validation_error_maps(client):
    response = client.post(
        "/v1/models/00001_TOY_PATCH/generate",
        json={"num_samples": 1, "kwargs": {"bogus": 1}},
    )
    assert response.status_code == 400
    assert response.json()["error"]["code"] == "validation"


# ---------------------------------------------------------------- explore


def test_explore_deterministic(client):
    body = {"latent_vector": [0.0] * 100}
    first = client.post("/v1/models/00002_TOY_FULL/explore", json=body)
    second = client.post("/v1/models/00002_TOY_FULL/explore", json=body)
    assert first.status_code == second.status_code == 200
    jsonschema.validate(first.json(), load_schema("explore_response.schema.json"))
    assert first.json()["outputs"] == second.json()["outputs"]
    image = base64.b64decode(first.json()["outputs"]["image"])
    assert image.startswith(b"\x89PNG")


def test_explore_distinct_latents_differ(client):
    zero = client.post("/v1/models/00002_TOY_FULL/explore", json={"latent_vector": [0.0] * 100})
    ones = client.post("/v1/models/00002_TOY_FULL/explore", json={"latent_vector": [1.0] * 100})
    assert zero.json()["outputs"] != ones.json()["outputs"]


def test_explore_wrong_length(client):
    response = client.post("/v1/models/00002_TOY_FULL/explore", json={"latent_vector": [0.0] * 7})
    assert response.status_code == 400
    payload = response.json()["error"]
    assert payload["code"] == "bad_query"
    assert "100" in payload["message"]


def test_explore_non_latent_model(client):
    response = client.post("/v1/models/00001_TOY_PATCH/explore", json={"latent_vector": [0.0] * 100})
    assert response.status_code == 400
    assert "not explorable" in response.json()["error"]["message"]


def test_explore_echoes_latent(client):
    vector = [float(i) / 100 for i in range(100)]
    response = client.post("/v1/models/00002_TOY_FULL/explore", json={"latent_vector": vector})
    assert response.json()["latent_echo"] == pytest.approx(vector)


# ------------------------------------------------------------------ static


def test_root_serves_page_without_ui_bundle(client):
    response = client.get("/")
    assert response.status_code == 200
    assert "genhub" in response.text


def test_root_serves_ui_bundle(service_hub, tmp_path):
    ui = tmp_path / "dist"
    ui.mkdir()
    (ui / "index.html").write_text("<html><body>explorer-bundle</body></html>")
    bundled = TestClient(create_app(service_hub, ui_dir=ui))
    response = bundled.get("/")
    assert "explorer-bundle" in response.text


def test_resolve_ui_dir_prefers_explicit(tmp_path):
    ui = tmp_path / "someui"
    ui.mkdir()
    (ui / "index.html").write_text("x")
    assert resolve_ui_dir(ui) == ui
    fallback = resolve_ui_dir(tmp_path / "missing")
    assert fallback is None or (fallback / "index.html").is_file()
