"""Regenerate the byte-true API fixtures the browser UI tests run against.

The frontend has no Python at test time, so its vitest suite replays these
canned responses: every fixture here is the exact canonical-JSON body the
service returns, captured through the in-process ASGI test client. Session ids
and timestamps are frozen so regeneration is reproducible.

Writes frontend/fixtures/*.json; run from the repo root after API changes.
"""

import json
import sys
import uuid
from itertools import count
from pathlib import Path
from unittest import mock

from fastapi.testclient import TestClient

from hyperphen import sessions
from hyperphen.model import ModelConfig, PhenotypeModel
from hyperphen.service import create_app
from hyperphen.sessions import SessionStore
from hyperphen.synthetic import SyntheticConfig, generate_synthetic

CORPUS = SyntheticConfig(n_patients=30, n_codes=30, n_clusters=3, visits_per_patient=(3, 5))
MODEL = ModelConfig(
    d_c=2, unigin_dims=(8, 4), n_phenotypes=2, n_sim_heads=2, aug_ratio=0.2, d_hid=6, n_attn_heads=2
)
TOP_K = 5


def export(out_dir: Path, sessions_dir: Path) -> None:
    ds = generate_synthetic(CORPUS, 3)
    model = PhenotypeModel(MODEL, ds.ontology, seed=0)
    client = TestClient(create_app(model, ds, SessionStore(sessions_dir), top_k=TOP_K))
    patient = ds.records[0].patient_id
    out_dir.mkdir(parents=True, exist_ok=True)

    def save(name: str, response) -> dict:
        assert response.status_code == 200, f"{name}: {response.status_code} {response.text}"
        (out_dir / f"{name}.json").write_bytes(response.content)
        return response.json()

    save("record", client.get(f"/patients/{patient}/record"))
    explanation = save("explanation", client.get(f"/patients/{patient}/explanation", params={"top_k": TOP_K}))

    empty = save("intervene_empty", client.post(f"/patients/{patient}/intervene", json={"edits": [], "top_k": TOP_K}))

    # one toggle: remove the first cell the explanation actually shows, so
    # the UI test can stage the same edit a user would click
    first_cell = explanation["phenotypes"][0]["cells"][0]
    edit = {
        "phenotype": 0,
        "code": first_cell["code"],
        "visit_index": first_cell["visit_index"],
        "action": "remove",
    }
    (out_dir / "toggle_edit.json").write_text(json.dumps(edit, indent=2, sort_keys=True) + "\n")
    save(
        "intervene_toggle",
        client.post(
            f"/patients/{patient}/intervene",
            json={"session_id": empty["session_id"], "edits": [edit], "top_k": TOP_K},
        ),
    )

    save("session", client.get(f"/sessions/{empty['session_id']}"))

    codes = {}
    for item in explanation["predictions"]:
        codes[item["code"]] = client.get(f"/codes/{item['code']}").json()
    (out_dir / "codes.json").write_text(json.dumps(codes, indent=2, sort_keys=True) + "\n")

    print(f"wrote {len(list(out_dir.glob('*.json')))} fixtures to {out_dir}")


def main(argv=None) -> int:
    import argparse
    import tempfile

    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("frontend/fixtures"))
    args = parser.parse_args(argv)

    ids = count(1)
    with tempfile.TemporaryDirectory() as tmp:
        with (
            mock.patch.object(sessions.uuid, "uuid4", side_effect=lambda: uuid.UUID(int=next(ids))),
            mock.patch.object(sessions, "_now", return_value="2026-01-01T00:00:00+00:00"),
        ):
            export(args.out, Path(tmp) / "sessions")
    return 0


if __name__ == "__main__":
    sys.exit(main())
