import pytest
from fastapi.testclient import TestClient

from hyperphen.common import canonical_json
from hyperphen.explain import build_explanation, record_payload
from hyperphen.model import ModelConfig, PhenotypeModel
from hyperphen.service import create_app
from hyperphen.sessions import SessionStore

MODEL_CONFIG = ModelConfig(
    d_c=2, unigin_dims=(8, 4), n_phenotypes=2, n_sim_heads=2, aug_ratio=0.2, d_hid=6, n_attn_heads=2
)


@pytest.fixture(scope="module")
def served(tiny_corpus, tmp_path_factory):
    model = PhenotypeModel(MODEL_CONFIG, tiny_corpus.ontology, seed=0)
    store = SessionStore(tmp_path_factory.mktemp("sessions"))
    app = create_app(model, tiny_corpus, store, top_k=10)
    return TestClient(app), model, tiny_corpus, store


@pytest.fixture()
def client(served):
    return served[0]


def absent_code(ds):
    return next(c for c in ("999.99", "998.88", "997.77") if c not in ds.code_index)


class TestUnloadedService:
    @pytest.fixture()
    def bare_client(self, tmp_path):
        return TestClient(create_app(None, None, SessionStore(tmp_path)))

    @pytest.mark.parametrize(
        "method, path",
        [
            ("GET", "/patients/p0/record"),
            ("GET", "/patients/p0/explanation"),
            ("POST", "/patients/p0/intervene"),
        ],
    )
    def test_model_endpoints_return_503(self, bare_client, method, path):
        response = bare_client.request(method, path, json={"edits": []} if method == "POST" else None)
        assert response.status_code == 503
        assert response.json()["detail"] == "model not loaded"

    def test_code_lookup_works_without_model(self, bare_client):
        response = bare_client.get("/codes/428.0")
        assert response.status_code == 200
        assert "heart failure" in response.json()["description"].lower()


class TestRecordEndpoint:
    def test_bytes_match_library_payload(self, served):
        client, _, ds, _ = served
        patient_id = ds.records[0].patient_id
        response = client.get(f"/patients/{patient_id}/record")
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("application/json")
        expected = canonical_json(record_payload(ds.record(patient_id), ds)) + "\n"
        assert response.content == expected.encode("utf-8")

    def test_unknown_patient(self, client):
        response = client.get("/patients/nobody/record")
        assert response.status_code == 404
        assert "nobody" in response.json()["detail"]


class TestExplanationEndpoint:
    def test_bytes_match_library_payload(self, served):
        client, model, ds, _ = served
        patient_id = ds.records[1].patient_id
        response = client.get(f"/patients/{patient_id}/explanation", params={"top_k": 4})
        assert response.status_code == 200
        payload, _ = build_explanation(model, ds, patient_id, top_k=4)
        expected = canonical_json(payload) + "\n"
        assert response.content == expected.encode("utf-8")

    def test_default_list_length(self, served):
        client, _, ds, _ = served
        patient_id = ds.records[0].patient_id
        body = client.get(f"/patients/{patient_id}/explanation").json()
        assert len(body["predictions"]) == 10
        assert [item["rank"] for item in body["predictions"]] == list(range(1, 11))

    def test_unknown_patient(self, client):
        assert client.get("/patients/nobody/explanation").status_code == 404


class TestIntervene:
    def test_empty_edits_reproduce_the_explanation(self, served):
        client, _, ds, store = served
        patient_id = ds.records[0].patient_id
        explanation = client.get(f"/patients/{patient_id}/explanation").json()
        response = client.post(f"/patients/{patient_id}/intervene", json={"edits": []})
        assert response.status_code == 200
        body = response.json()
        assert body["revision"] == 1
        assert store.exists(body["session_id"])
        assert body["prediction"]["top_k"] == explanation["predictions"]
        assert body["prediction"]["alpha"] == explanation["alpha"]
        assert body["diff"]["entering"] == []
        assert body["diff"]["leaving"] == []
        assert all(d["delta"] == 0.0 for d in body["diff"]["deltas"])

    def test_edits_are_applied_and_session_accumulates(self, served):
        client, _, ds, store = served
        patient_id = ds.records[2].patient_id
        code = ds.vocabulary[5].code
        first = client.post(
            f"/patients/{patient_id}/intervene",
            json={"edits": [{"phenotype": 0, "code": code, "visit_index": 0, "action": "add"}]},
        ).json()
        assert first["revision"] == 1
        second = client.post(
            f"/patients/{patient_id}/intervene",
            json={
                "session_id": first["session_id"],
                "edits": [{"phenotype": 0, "code": code, "visit_index": 0, "action": "remove"}],
            },
        ).json()
        assert second["session_id"] == first["session_id"]
        assert second["revision"] == 2

        session = store.load(first["session_id"])
        masks = session.replay(ds)
        assert float(masks[0, 5, 0]) == 0.0  # added by revision 1, removed by revision 2
        assert second["prediction"]["top_k"] != [] and second["diff"]["deltas"]

    def test_model_parameters_are_untouched(self, served):
        client, model, ds, _ = served
        patient_id = ds.records[0].patient_id
        before = model.parameter_checksum()
        code = ds.vocabulary[3].code
        client.post(
            f"/patients/{patient_id}/intervene",
            json={"edits": [{"phenotype": 1, "code": code, "visit_index": 1, "action": "add"}]},
        )
        assert model.parameter_checksum() == before

    def test_unknown_session(self, served):
        client, _, ds, _ = served
        patient_id = ds.records[0].patient_id
        response = client.post(
            f"/patients/{patient_id}/intervene", json={"edits": [], "session_id": "missing"}
        )
        assert response.status_code == 404
        assert "missing" in response.json()["detail"]

    def test_session_patient_mismatch(self, served):
        client, _, ds, _ = served
        owner = ds.records[0].patient_id
        other = ds.records[1].patient_id
        session_id = client.post(f"/patients/{owner}/intervene", json={"edits": []}).json()["session_id"]
        response = client.post(f"/patients/{other}/intervene", json={"edits": [], "session_id": session_id})
        assert response.status_code == 400
        assert "belongs to" in response.json()["detail"]

    def test_invalid_edit_rejected_without_a_revision(self, served):
        client, _, ds, store = served
        patient_id = ds.records[0].patient_id
        session_id = client.post(f"/patients/{patient_id}/intervene", json={"edits": []}).json()["session_id"]
        n_before = len(store.load(session_id).revisions)
        response = client.post(
            f"/patients/{patient_id}/intervene",
            json={
                "session_id": session_id,
                "edits": [{"phenotype": 0, "code": absent_code(ds), "visit_index": 0, "action": "add"}],
            },
        )
        assert response.status_code == 400
        assert "unknown diagnosis" in response.json()["detail"]
        assert len(store.load(session_id).revisions) == n_before

    def test_malformed_body(self, served):
        client, _, ds, _ = served
        patient_id = ds.records[0].patient_id
        response = client.post(
            f"/patients/{patient_id}/intervene",
            json={"edits": [{"phenotype": 0, "code": "428.0", "visit_index": 0}]},
        )
        assert response.status_code == 422


class TestSessionEndpoint:
    def test_round_trip_shows_revisions(self, served):
        client, _, ds, _ = served
        patient_id = ds.records[1].patient_id
        code = ds.vocabulary[0].code
        created = client.post(
            f"/patients/{patient_id}/intervene",
            json={"edits": [{"phenotype": 0, "code": code, "visit_index": 0, "action": "add"}]},
        ).json()
        body = client.get(f"/sessions/{created['session_id']}").json()
        assert body["patient_id"] == patient_id
        assert body["n_phenotypes"] == MODEL_CONFIG.n_phenotypes
        assert [r["revision"] for r in body["revisions"]] == [1]
        edit = body["revisions"][0]["edits"][0]
        assert (edit["code"], edit["action"]) == (code, "add")
        assert body["revisions"][0]["prediction"] == created["prediction"]
        assert all(isinstance(cell, list) and len(cell) == 3 for cell in body["base_cells"])

    def test_unknown_session(self, client):
        assert client.get("/sessions/missing").status_code == 404


class TestCodeEndpoint:
    def test_known_code_bytes(self, client):
        response = client.get("/codes/518.81")
        expected = canonical_json({"code": "518.81", "description": "Acute respiratory failure"}) + "\n"
        assert response.content == expected.encode("utf-8")

    def test_valid_but_uncatalogued_code(self, client):
        response = client.get("/codes/999.99")
        assert response.status_code == 200
        assert response.json()["description"] is None

    def test_invalid_code(self, client):
        response = client.get("/codes/not-a-code")
        assert response.status_code == 404
