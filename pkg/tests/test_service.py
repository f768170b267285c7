import json
import time

import pytest
from fastapi.testclient import TestClient

from hiersteer.service import create_app

TOPICS = {
    "animals": ["cat dog lion tiger fur paw", "dog wolf bark fur tail",
                "lion tiger mane claw savanna", "cat kitten paw whisker fur"],
    "space": ["star galaxy orbit planet moon", "rocket launch orbit fuel thrust",
              "telescope star nebula light", "planet moon crater orbit dust"],
    "cooking": ["flour sugar oven bake bread", "soup onion garlic simmer broth",
                "grill steak pepper salt char", "bread oven yeast flour crust"],
}


def corpus_records():
    recs = []
    for t, texts in TOPICS.items():
        for i, x in enumerate(texts):
            recs.append({"id": f"{t}_{i}", "text": (x + " ") * 3})
    return recs


def kb_payload():
    nodes = [{"id": "root", "name": "root", "parents": []}]
    for t, texts in TOPICS.items():
        nodes.append({"id": t, "name": t, "parents": ["root"],
                      "docs": [{"id": f"kb_{t}_{i}", "text": x}
                               for i, x in enumerate(texts)]})
    return {"nodes": nodes}


@pytest.fixture()
def client(tmp_path):
    app = create_app(data_dir=str(tmp_path))
    with TestClient(app) as c:
        yield c


def make_session(client, with_kb=True, config=None):
    body = {"corpus": corpus_records()}
    if with_kb:
        body["kb"] = kb_payload()
    if config:
        body["config"] = config
    r = client.post("/api/v1/sessions", json=body)
    assert r.status_code == 201, r.text
    return r.json()["id"]


def wait_job(client, sid, jid, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        r = client.get(f"/api/v1/sessions/{sid}/jobs/{jid}")
        assert r.status_code == 200
        info = r.json()
        if info["status"] != "running":
            return info
        time.sleep(0.02)
    raise AssertionError("job did not finish in time")


def build_both_trees(client, sid):
    jid = client.post(f"/api/v1/sessions/{sid}/extract",
                      json={"q": 1.0, "K": 5, "min_ants": 1}).json()["job_id"]
    assert wait_job(client, sid, jid)["status"] == "done"
    jid = client.post(f"/api/v1/sessions/{sid}/cluster",
                      json={"lambda": 1e-6}).json()["job_id"]
    assert wait_job(client, sid, jid)["status"] == "done"


def get_tree(client, sid, which="clustering"):
    r = client.get(f"/api/v1/sessions/{sid}/tree/{which}")
    assert r.status_code == 200, r.text
    return r.json()


def test_session_lifecycle(client):
    sid = make_session(client)
    r = client.get(f"/api/v1/sessions/{sid}")
    assert r.status_code == 200
    info = r.json()
    assert info["docs"] == 12 and not info["has_clustering_tree"]

    build_both_trees(client, sid)
    info = client.get(f"/api/v1/sessions/{sid}").json()
    assert info["has_constraint_tree"] and info["has_clustering_tree"]
    assert info["version"] >= 2

    doc = get_tree(client, sid)
    assert set(doc["layout"]) == {"order", "visible", "collapsed"}
    ids = {n["id"] for n in _flatten(doc["tree"])}
    assert set(doc["layout"]["visible"]) <= ids


def _flatten(node):
    yield node
    for c in node.get("children", []):
        yield from _flatten(c)


def _docs_of(node):
    out = []
    for n in _flatten(node):
        out.extend(n.get("docs", []))
    return out


def test_empty_corpus_rejected(client):
    r = client.post("/api/v1/sessions", json={"corpus": []})
    assert r.status_code == 400
    assert r.json()["code"] == "EmptyCorpus"


def test_unknown_session_and_node_are_404(client):
    assert client.get("/api/v1/sessions/nope").status_code == 404
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    r = client.get(f"/api/v1/sessions/{sid}/nodes/999999")
    assert r.status_code == 404


def test_merge_modes_and_undo_restores_bytes(client):
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    before = get_tree(client, sid)["tree"]
    root = before["id"]
    kids = [c["id"] for c in before["children"]]
    assert len(kids) >= 2

    r = client.post(f"/api/v1/sessions/{sid}/tree/clustering/merge",
                    json={"src": kids[0], "dst": kids[1], "mode": "absorb"})
    assert r.status_code == 200
    after = get_tree(client, sid)["tree"]
    moved = next(n for n in _flatten(after) if n["id"] == kids[1])
    assert kids[0] in [c["id"] for c in moved["children"]]

    r = client.post(f"/api/v1/sessions/{sid}/undo")
    assert r.status_code == 200
    restored = get_tree(client, sid)["tree"]
    assert json.dumps(restored, sort_keys=True) == \
        json.dumps(before, sort_keys=True)


def test_join_inserts_node_and_stamps_provenance(client):
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    tree = get_tree(client, sid)["tree"]
    kids = [c["id"] for c in tree["children"]]
    r = client.post(f"/api/v1/sessions/{sid}/tree/clustering/merge",
                    json={"src": kids[0], "dst": kids[1], "mode": "join",
                          "label": "merged"})
    assert r.status_code == 200
    new_id = r.json()["node"]
    after = get_tree(client, sid)["tree"]
    joined = next(n for n in _flatten(after) if n["id"] == new_id)
    assert joined["label"] == "merged"
    assert sorted(c["id"] for c in joined["children"]) == sorted(kids[:2])
    assert joined["provenance"]["manual"] is True
    node = client.get(f"/api/v1/sessions/{sid}/nodes/{new_id}").json()
    assert node["uncertainty"]["model"] == 0.5


def test_collapse_merges_children(client):
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    tree = get_tree(client, sid)["tree"]
    leaves = [n["id"] for n in _flatten(tree) if not n["children"]][:4]
    url = f"/api/v1/sessions/{sid}/tree/clustering/merge"
    a = client.post(url, json={"src": leaves[0], "dst": leaves[1],
                               "mode": "join"}).json()["node"]
    b = client.post(url, json={"src": leaves[2], "dst": leaves[3],
                               "mode": "join"}).json()["node"]
    r = client.post(url, json={"src": a, "dst": b, "mode": "collapse"})
    assert r.status_code == 200
    after = get_tree(client, sid)["tree"]
    assert not any(n["id"] == a for n in _flatten(after))
    merged = next(n for n in _flatten(after) if n["id"] == b)
    assert sorted(c["id"] for c in merged["children"]) == sorted(leaves)


def test_illegal_merges_rejected(client):
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    tree = get_tree(client, sid)["tree"]
    root = tree["id"]
    kid = tree["children"][0]["id"]
    url = f"/api/v1/sessions/{sid}/tree/clustering/merge"
    assert client.post(url, json={"src": kid, "dst": kid,
                                  "mode": "join"}).status_code == 422
    assert client.post(url, json={"src": root, "dst": kid,
                                  "mode": "join"}).status_code == 422
    assert client.post(url, json={"src": kid, "dst": root,
                                  "mode": "bogus"}).status_code == 422
    assert client.post(url, json={"src": kid, "dst": 10**9,
                                  "mode": "join"}).status_code == 404


def test_job_conflict_and_cancel(client):
    sid = make_session(client, config={"lambda": 0.0})
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    r = client.post(f"/api/v1/sessions/{sid}/cluster", json={})
    if r.status_code != 409:  # first job may have already finished
        wait_job(client, sid, r.json()["job_id"])
    r = client.delete(f"/api/v1/sessions/{sid}/jobs/{jid}")
    assert r.status_code == 200
    info = wait_job(client, sid, jid)
    assert info["status"] in ("done", "cancelled")
    assert client.delete(f"/api/v1/sessions/{sid}/jobs/zzz").status_code == 404


def test_remove_node_frees_docs(client):
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    tree = get_tree(client, sid)["tree"]
    victim = tree["children"][0]
    freed = set(_docs_of(victim))
    r = client.delete(
        f"/api/v1/sessions/{sid}/tree/clustering/nodes/{victim['id']}")
    assert r.status_code == 200
    assert freed <= set(r.json()["unassigned"])
    after = get_tree(client, sid)["tree"]
    assert freed.isdisjoint(_docs_of(after))


def test_move_docs_rehomes_and_prunes(client):
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    tree = get_tree(client, sid)["tree"]
    target = tree["children"][-1]["id"]
    doc = "animals_0"
    r = client.post(f"/api/v1/sessions/{sid}/docs/move",
                    json={"docs": [doc], "to": target})
    assert r.status_code == 200
    after = get_tree(client, sid)["tree"]
    holder = next(n for n in _flatten(after) if doc in n.get("docs", []))
    anc = {n["id"]: n for n in _flatten(after)}

    def under(nid, root):
        node = anc[root]
        if node["id"] == nid:
            return True
        return any(under(nid, c["id"]) for c in node["children"])

    assert under(holder["id"], target)
    assert sorted(_docs_of(after)).count(doc) == 1
    # Idempotent: moving again keeps a single copy.
    client.post(f"/api/v1/sessions/{sid}/docs/move",
                json={"docs": [doc], "to": target})
    again = get_tree(client, sid)["tree"]
    assert _docs_of(again).count(doc) == 1


def test_add_docs_attach_under_matching_topic(client):
    sid = make_session(client, config={"lambda": 0.0})
    build_both_trees(client, sid)
    new = [{"id": f"new_{i}", "text": "star galaxy orbit moon planet " * 4}
           for i in range(10)]
    r = client.post(f"/api/v1/sessions/{sid}/docs/add", json={"docs": new})
    assert r.status_code == 200
    placed = r.json()["placed"]
    assert len(placed) == 10
    tree = get_tree(client, sid)["tree"]
    nodes = {n["id"]: n for n in _flatten(tree)}
    hits = 0
    for did, nid in placed.items():
        docs_under = set(_docs_of(nodes[nid]))
        space_docs = {f"space_{i}" for i in range(4)}
        hits += len(docs_under & space_docs) > 0
    assert hits >= 8


def test_add_docs_rejects_duplicates(client):
    sid = make_session(client, with_kb=False)
    r = client.post(f"/api/v1/sessions/{sid}/docs/add",
                    json={"docs": [{"id": "animals_0", "text": "dup"}]})
    assert r.status_code == 400
    assert "path" in r.json()


def test_config_patch_roundtrip(client):
    sid = make_session(client, with_kb=False)
    r = client.patch(f"/api/v1/sessions/{sid}/config",
                     json={"lambda": 0.5, "q": 0.2})
    assert r.status_code == 200
    cfg = r.json()["config"]
    assert cfg["lambda"] == 0.5 and cfg["q"] == 0.2
    r = client.patch(f"/api/v1/sessions/{sid}/config", json={"bogus": 1})
    assert r.status_code == 400
    assert r.json()["path"] == "/bogus"


def test_node_pagination_disjoint_and_covering(client):
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    tree = get_tree(client, sid)["tree"]
    root = tree["id"]
    seen = []
    page = 0
    while True:
        r = client.get(f"/api/v1/sessions/{sid}/nodes/{root}",
                       params={"page": page, "page_size": 5}).json()
        if not r["docs"]:
            break
        seen.extend(r["docs"])
        page += 1
    assert sorted(seen) == sorted(set(seen))
    assert len(seen) == 12


def test_top_terms_match_recount(client):
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    tree = get_tree(client, sid)["tree"]
    root = tree["id"]
    r = client.get(f"/api/v1/sessions/{sid}/nodes/{root}").json()
    counts = {}
    for rec in corpus_records():
        for tok in rec["text"].split():
            counts[tok] = counts.get(tok, 0) + 1
    for word, c in r["top_terms"]:
        assert counts[word] == c
    got = [c for _, c in r["top_terms"]]
    assert got == sorted(got, reverse=True)


def test_linked_nodes_bridge_trees(client):
    sid = make_session(client)
    build_both_trees(client, sid)
    cons = get_tree(client, sid, "constraint")["tree"]
    topic = next(n for n in _flatten(cons)
                 if n["children"] and n["id"] != cons["id"])
    r = client.get(
        f"/api/v1/sessions/{sid}/tree/constraint/nodes/{topic['id']}/linked")
    assert r.status_code == 200
    body = r.json()
    assert body["tree"] == "clustering"
    total = sum(e["shared_docs"] for e in body["nodes"])
    assert total == len(_docs_of(topic))


def test_rebuild_keeps_node_id(client):
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    tree = get_tree(client, sid)["tree"]
    target = next((n for n in _flatten(tree)
                   if n["children"] and n["id"] != tree["id"]
                   and len(_docs_of(n)) >= 2), None)
    if target is None:
        pytest.skip("no rebuildable internal node")
    jid = client.post(
        f"/api/v1/sessions/{sid}/tree/clustering/nodes/{target['id']}/rebuild"
    ).json()["job_id"]
    assert wait_job(client, sid, jid)["status"] == "done"
    after = get_tree(client, sid)["tree"]
    kept = next(n for n in _flatten(after) if n["id"] == target["id"])
    assert sorted(_docs_of(kept)) == sorted(_docs_of(target))


def test_undo_stack_is_bounded(client):
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    tree = get_tree(client, sid)["tree"]
    root = tree["id"]
    for i in range(55):
        r = client.post(
            f"/api/v1/sessions/{sid}/tree/clustering/nodes/{root}/rename",
            json={"label": f"r{i}"})
        assert r.status_code == 200
    app_session = client.app.state.sessions[sid]
    assert len(app_session.undo_stack) == 50
    r = client.post(f"/api/v1/sessions/{sid}/undo")
    assert r.status_code == 200
    after = get_tree(client, sid)["tree"]
    assert after["label"] == "r53"


def test_snapshots_persisted(client, tmp_path):
    sid = make_session(client, with_kb=False)
    jid = client.post(f"/api/v1/sessions/{sid}/cluster", json={}).json()["job_id"]
    wait_job(client, sid, jid)
    sdir = tmp_path / sid
    assert (sdir / "session.json").exists()
    snaps = list(sdir.glob("v*_clustering.json"))
    assert snaps
    doc = json.loads(snaps[-1].read_text())
    assert "id" in doc and "children" in doc
