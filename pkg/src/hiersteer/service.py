"""Session-based HTTP steering service (FastAPI, /api/v1)."""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .brt import BrtConfig, cluster, rebuild_subtree
from .corpus import Corpus, Document, EmbeddingStore, build_corpus, tokenize
from .dcm import ClusterStats, DcmParams, log_dcm_doc_given_node
from .errors import (HiersteerError, IllegalMerge, JobAlreadyRunning,
                     NodeNotFound, SchemaViolation)
from .extract import ExtractConfig, extract_constraint_tree
from .kb import KnowledgeBase, parse_kb
from .layout import category_count_map, doi_cut, optimize_ordering
from .rosetree import RoseTree
from .uncertainty import (aggregate, knowledge_uncertainty, membership_matrix,
                          model_uncertainty, structure_uncertainty)

UNDO_DEPTH = 50


@dataclass
class SessionConfig:
    lam: float = 1e-6
    q: float = 0.10
    K: int = 50
    rho: float = 0.9
    gamma: float | None = None
    seed: int = 0
    pi0: float = 0.5
    triplet_cap: int = 200_000
    approx: bool = False

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "q": self.q, "K": self.K, "rho": self.rho,
                "gamma": self.gamma, "seed": self.seed, "pi0": self.pi0,
                "triplet_cap": self.triplet_cap, "approx": self.approx}


@dataclass
class Job:
    id: str
    kind: str
    status: str = "running"     # running | done | cancelled | failed
    progress: float = 0.0
    error: str | None = None
    cancel_event: threading.Event = field(default_factory=threading.Event)
    thread: threading.Thread | None = None


@dataclass
class Session:
    id: str
    corpus: Corpus
    kb: KnowledgeBase | None
    store: EmbeddingStore | None
    config: SessionConfig
    data_dir: str
    constraint_tree: RoseTree | None = None
    clustering_tree: RoseTree | None = None
    unassigned: list[str] = field(default_factory=list)
    version: int = 0
    jobs: dict[str, Job] = field(default_factory=dict)
    active_job: Job | None = None
    undo_stack: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    model_scores: dict[str, dict[int, float]] = field(default_factory=dict)

    # ----- snapshots / undo -----

    def snapshot(self) -> dict:
        return {
            "version": self.version,
            "constraint": json.dumps(self.constraint_tree.serialize(),
                                     sort_keys=True)
            if self.constraint_tree else None,
            "clustering": json.dumps(self.clustering_tree.serialize(),
                                     sort_keys=True)
            if self.clustering_tree else None,
            "unassigned": list(self.unassigned),
            "records": [{"id": d.id, "text": d.body or ""}
                        for d in self.corpus.docs],
            "config": self.config.as_dict(),
        }

    def push_undo(self):
        self.undo_stack.append(self.snapshot())
        if len(self.undo_stack) > UNDO_DEPTH:
            self.undo_stack.pop(0)

    def restore(self, snap: dict):
        self.constraint_tree = RoseTree.parse(json.loads(snap["constraint"])) \
            if snap["constraint"] else None
        self.clustering_tree = RoseTree.parse(json.loads(snap["clustering"])) \
            if snap["clustering"] else None
        self.unassigned = list(snap["unassigned"])
        # Rebuild docs against the shared vocabulary so KB term ids stay valid.
        vocab = self.corpus.vocab
        docs = [Document.from_tokens(str(r["id"]), tokenize(r["text"]), vocab,
                                     body=r["text"]) for r in snap["records"]]
        self.corpus = Corpus(docs, vocab)
        self.model_scores = {}

    def bump(self) -> int:
        self.version += 1
        self.persist()
        return self.version

    def persist(self):
        sdir = os.path.join(self.data_dir, self.id)
        os.makedirs(sdir, exist_ok=True)
        for which, tree in (("constraint", self.constraint_tree),
                            ("clustering", self.clustering_tree)):
            if tree is not None:
                path = os.path.join(sdir, f"v{self.version:06d}_{which}.json")
                with open(path, "w", encoding="utf-8") as fh:
                    json.dump(tree.serialize(), fh, sort_keys=True)
        with open(os.path.join(sdir, "session.json"), "w", encoding="utf-8") as fh:
            json.dump({"id": self.id, "version": self.version,
                       "config": self.config.as_dict(),
                       "unassigned": self.unassigned}, fh)

    # ----- derived state -----

    def tree(self, which: str) -> RoseTree:
        if which == "constraint":
            t = self.constraint_tree
        elif which == "clustering":
            t = self.clustering_tree
        else:
            raise ApiError(404, "NotFound", f"unknown tree {which!r}")
        if t is None:
            raise ApiError(404, "NotFound", f"no {which} tree yet")
        return t

    def recompute_stats(self, tree: RoseTree):
        def walk(nid: int) -> ClusterStats:
            node = tree.nodes[nid]
            pooled: dict[int, int] = {}
            count = 0
            for d in node.docs:
                if d in self.corpus.index_of:
                    count += 1
                    for tid, c in self.corpus.doc(d).counts.items():
                        pooled[tid] = pooled.get(tid, 0) + c
            for c in node.children:
                sub = walk(c)
                count += sub.doc_count
                for tid, cc in sub.pooled_counts.items():
                    pooled[tid] = pooled.get(tid, 0) + cc
            node.stats = ClusterStats(doc_count=count, pooled_counts=pooled)
            return node.stats

        walk(tree.root)

    def refresh_uncertainty(self):
        for which, tree in (("clustering", self.clustering_tree),
                            ("constraint", self.constraint_tree)):
            if tree is None:
                continue
            other = self.constraint_tree if which == "clustering" \
                else self.clustering_tree
            nids = tree.subtree_nodes(tree.root)
            model = self.model_scores.get(which)
            if model is None or any(nid not in model for nid in nids):
                try:
                    model = model_uncertainty(tree)
                except HiersteerError:
                    model = {nid: (0.0 if tree.nodes[nid].is_leaf else 0.5)
                             for nid in nids}
                self.model_scores[which] = model
            if other is not None and set(tree.doc_ids()) & set(other.doc_ids()):
                know = knowledge_uncertainty(tree, other)
            else:
                know = {nid: 0.0 for nid in nids}
            struct = structure_uncertainty(tree, self.corpus, self.store)
            scores = aggregate({nid: model.get(nid, 0.5) for nid in nids},
                               know, struct)
            for nid, sc in scores.items():
                tree.nodes[nid].uncertainty = sc.as_dict()

    def stamp_manual(self, tree: RoseTree, node_id: int, mode: str):
        tree.nodes[node_id].provenance = {"mode": mode, "manual": True,
                                          "log_likelihood_ratio": 0.0,
                                          "violations": 0,
                                          "log_posterior_ratio": 0.0}
        cached = self.model_scores.get(
            "clustering" if tree is self.clustering_tree else "constraint")
        if cached is not None:
            cached[node_id] = 0.5


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, path: str = ""):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.path = path


def create_app(data_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="hiersteer", version="1.0")
    app.state.data_dir = data_dir or os.environ.get("DATA_DIR", "./hiersteer_data")
    app.state.sessions = {}

    def get_session(sid: str) -> Session:
        s = app.state.sessions.get(sid)
        if s is None:
            raise ApiError(404, "NotFound", f"unknown session {sid!r}")
        return s

    def require_idle(s: Session):
        if s.active_job is not None and s.active_job.status == "running":
            raise ApiError(409, "JobAlreadyRunning",
                           "a job is already running for this session")

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        body = {"code": exc.code, "message": exc.message}
        if exc.path:
            body["path"] = exc.path
        return JSONResponse(status_code=exc.status, content=body)

    @app.exception_handler(HiersteerError)
    async def _domain_error(request: Request, exc: HiersteerError):
        status = 400
        if isinstance(exc, (NodeNotFound,)):
            status = 404
        elif isinstance(exc, JobAlreadyRunning):
            status = 409
        elif isinstance(exc, IllegalMerge):
            status = 422
        body = {"code": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, SchemaViolation) and exc.path:
            body["path"] = exc.path
        return JSONResponse(status_code=status, content=body)

    # ----- sessions -----

    @app.post("/api/v1/sessions", status_code=201)
    async def create_session(body: dict):
        records = body.get("corpus")
        if not isinstance(records, list) or not records:
            raise ApiError(400, "EmptyCorpus", "corpus must be a non-empty list",
                           path="/corpus")
        corpus = build_corpus(records)
        kb = None
        if body.get("kb"):
            kb = parse_kb(body["kb"], corpus.vocab)
        store = None
        cfg = SessionConfig()
        for key, val in (body.get("config") or {}).items():
            attr = "lam" if key == "lambda" else key
            if hasattr(cfg, attr):
                setattr(cfg, attr, val)
        sid = uuid.uuid4().hex[:12]
        s = Session(id=sid, corpus=corpus, kb=kb, store=store, config=cfg,
                    data_dir=app.state.data_dir)
        app.state.sessions[sid] = s
        s.persist()
        return {"id": sid, "version": s.version, "docs": len(corpus),
                "kb_nodes": len(kb) if kb else 0}

    @app.get("/api/v1/sessions/{sid}")
    async def get_session_info(sid: str):
        s = get_session(sid)
        return {"id": s.id, "version": s.version, "docs": len(s.corpus),
                "config": s.config.as_dict(),
                "has_constraint_tree": s.constraint_tree is not None,
                "has_clustering_tree": s.clustering_tree is not None,
                "unassigned": s.unassigned,
                "job": _job_info(s.active_job) if s.active_job else None}

    # ----- jobs -----

    def _job_info(job: Job) -> dict:
        out = {"id": job.id, "kind": job.kind, "status": job.status,
               "progress": job.progress}
        if job.error:
            out["error"] = job.error
        return out

    def start_job(s: Session, kind: str, work) -> dict:
        require_idle(s)
        job = Job(id=uuid.uuid4().hex[:12], kind=kind)
        s.jobs[job.id] = job
        s.active_job = job

        def run():
            try:
                work(job)
                if job.cancel_event.is_set():
                    job.status = "cancelled"
                else:
                    job.progress = 1.0
                    job.status = "done"
            except Exception as e:  # surfaced through job polling
                job.status = "failed"
                job.error = str(e)

        job.thread = threading.Thread(target=run, daemon=True)
        job.thread.start()
        return {"job_id": job.id}

    @app.get("/api/v1/sessions/{sid}/jobs/{jid}")
    async def get_job(sid: str, jid: str):
        s = get_session(sid)
        job = s.jobs.get(jid)
        if job is None:
            raise ApiError(404, "NotFound", f"unknown job {jid!r}")
        return _job_info(job)

    @app.delete("/api/v1/sessions/{sid}/jobs/{jid}")
    async def cancel_job(sid: str, jid: str):
        s = get_session(sid)
        job = s.jobs.get(jid)
        if job is None:
            raise ApiError(404, "NotFound", f"unknown job {jid!r}")
        job.cancel_event.set()
        return {"id": job.id, "status": job.status}

    # ----- extraction / clustering -----

    @app.post("/api/v1/sessions/{sid}/extract", status_code=202)
    async def extract(sid: str, body: dict | None = None):
        s = get_session(sid)
        if s.kb is None:
            raise ApiError(400, "EmptyKb", "session has no knowledge base")
        body = body or {}
        cfg = ExtractConfig(
            K=body.get("K", s.config.K), q=body.get("q", s.config.q),
            rho=body.get("rho", s.config.rho),
            gamma=body.get("gamma", s.config.gamma),
            seed=body.get("seed", s.config.seed),
            min_ants=body.get("min_ants"))

        def work(job: Job):
            def cb(done, total):
                job.progress = done / max(1, total)
            res = extract_constraint_tree(s.corpus, s.kb, cfg, store=s.store,
                                          progress_cb=cb,
                                          cancel_event=job.cancel_event)
            with s.lock:
                s.push_undo()
                s.constraint_tree = res.tree
                s.recompute_stats(s.constraint_tree)
                s.model_scores.pop("constraint", None)
                s.refresh_uncertainty()
                s.bump()

        return start_job(s, "extract", work)

    @app.post("/api/v1/sessions/{sid}/cluster", status_code=202)
    async def run_cluster(sid: str, body: dict | None = None):
        s = get_session(sid)
        body = body or {}
        lam = body.get("lambda", s.config.lam)
        constraints = []
        if lam > 0 and s.constraint_tree is not None:
            dec = s.constraint_tree.decompose(cap=s.config.triplet_cap,
                                              seed=s.config.seed)
            constraints = dec.items

        def work(job: Job):
            def cb(done, total):
                job.progress = done / max(1, total)
            params = DcmParams(vocab_size=max(1, s.corpus.vocab.size))
            tree = cluster(s.corpus, constraints=constraints, lam=lam,
                           params=params,
                           config=BrtConfig(pi0=s.config.pi0,
                                            approx=s.config.approx),
                           progress_cb=cb, cancel_event=job.cancel_event)
            with s.lock:
                s.push_undo()
                s.clustering_tree = tree
                s.unassigned = [d.id for d in s.corpus.docs
                                if d.id not in set(tree.doc_ids())]
                s.model_scores.pop("clustering", None)
                s.refresh_uncertainty()
                s.bump()

        return start_job(s, "cluster", work)

    # ----- tree edits -----

    def _check_merge(tree: RoseTree, src: int, dst: int, mode: str):
        if src == dst:
            raise IllegalMerge("src and dst must differ")
        if src not in tree.nodes or dst not in tree.nodes:
            raise NodeNotFound(str(src if src not in tree.nodes else dst))
        if mode not in ("absorb", "join", "collapse"):
            raise IllegalMerge(f"unknown mode {mode!r}")
        src_sub = set(tree.subtree_nodes(src))
        if dst in src_sub:
            raise IllegalMerge("dst is a descendant of src")
        if mode != "absorb" and src in set(tree.subtree_nodes(dst)):
            raise IllegalMerge("src is a descendant of dst")
        if tree.root == src:
            raise IllegalMerge("cannot merge the root away")

    def _detach(tree: RoseTree, nid: int):
        parent = tree.nodes[nid].parent
        if parent is not None:
            tree.nodes[parent].children.remove(nid)
        tree.nodes[nid].parent = None
        return parent

    @app.post("/api/v1/sessions/{sid}/tree/{which}/merge")
    async def merge(sid: str, which: str, body: dict):
        s = get_session(sid)
        require_idle(s)
        tree = s.tree(which)
        src, dst, mode = body.get("src"), body.get("dst"), body.get("mode")
        with s.lock:
            _check_merge(tree, src, dst, mode)
            s.push_undo()
            if mode == "join":
                dst_parent = tree.nodes[dst].parent
                node = tree.new_node(label=body.get("label", ""))
                if dst_parent is None:
                    tree.root = node.id
                else:
                    pc = tree.nodes[dst_parent].children
                    pc[pc.index(dst)] = node.id
                    node.parent = dst_parent
                _detach(tree, src)
                tree.nodes[dst].parent = node.id
                tree.nodes[src].parent = node.id
                node.children = [dst, src]
                s.stamp_manual(tree, node.id, "join")
                new_id = node.id
            elif mode == "absorb":
                _detach(tree, src)
                tree.attach(dst, src)
                new_id = dst
            else:  # collapse
                _detach(tree, src)
                for c in list(tree.nodes[src].children):
                    tree.attach(dst, c)
                if tree.nodes[src].docs:
                    tree.nodes[dst].docs.extend(tree.nodes[src].docs)
                tree.nodes.pop(src, None)
                new_id = dst
            s.recompute_stats(tree)
            s.refresh_uncertainty()
            return {"version": s.bump(), "node": new_id}

    @app.delete("/api/v1/sessions/{sid}/tree/{which}/nodes/{nid}")
    async def remove_node(sid: str, which: str, nid: int):
        s = get_session(sid)
        require_idle(s)
        tree = s.tree(which)
        with s.lock:
            if nid not in tree.nodes or nid not in set(tree.subtree_nodes(tree.root)):
                raise NodeNotFound(str(nid))
            if nid == tree.root:
                raise IllegalMerge("cannot remove the root")
            s.push_undo()
            freed = tree.docs_under(nid)
            _detach(tree, nid)
            for sub in tree.subtree_nodes(nid):
                tree.nodes.pop(sub, None)
            s.unassigned.extend(d for d in freed if d not in s.unassigned)
            s.recompute_stats(tree)
            s.refresh_uncertainty()
            return {"version": s.bump(), "unassigned": s.unassigned}

    @app.post("/api/v1/sessions/{sid}/tree/{which}/nodes/{nid}/rename")
    async def rename(sid: str, which: str, nid: int, body: dict):
        s = get_session(sid)
        require_idle(s)
        tree = s.tree(which)
        with s.lock:
            if nid not in tree.nodes:
                raise NodeNotFound(str(nid))
            s.push_undo()
            tree.nodes[nid].label = str(body.get("label", ""))
            return {"version": s.bump()}

    @app.post("/api/v1/sessions/{sid}/tree/{which}/nodes/{nid}/rebuild",
              status_code=202)
    async def rebuild(sid: str, which: str, nid: int):
        s = get_session(sid)
        tree = s.tree(which)
        if nid not in tree.nodes:
            raise NodeNotFound(str(nid))

        def work(job: Job):
            params = DcmParams(vocab_size=max(1, s.corpus.vocab.size))
            new_tree = rebuild_subtree(tree, nid, s.corpus, params=params)
            with s.lock:
                s.push_undo()
                if which == "clustering":
                    s.clustering_tree = new_tree
                else:
                    s.constraint_tree = new_tree
                s.recompute_stats(new_tree)
                s.model_scores.pop(which, None)
                s.refresh_uncertainty()
                s.bump()

        return start_job(s, "rebuild", work)

    # ----- documents -----

    def _remove_doc_leaf(s: Session, tree: RoseTree, doc: str):
        leaf_of = tree.leaf_of_doc()
        if doc not in leaf_of:
            return
        nid = leaf_of[doc]
        tree.nodes[nid].docs.remove(doc)
        # Prune emptied leaf chains, but never the root.
        while nid != tree.root and not tree.nodes[nid].docs \
                and not tree.nodes[nid].children:
            parent = _detach(tree, nid)
            tree.nodes.pop(nid, None)
            nid = parent

    def _attach_doc(s: Session, tree: RoseTree, doc: str, target: int):
        leaf = tree.new_node(label=doc, docs=[doc])
        tree.attach(target, leaf.id)

    @app.post("/api/v1/sessions/{sid}/docs/move")
    async def move_docs(sid: str, body: dict):
        s = get_session(sid)
        require_idle(s)
        which = body.get("tree", "clustering")
        tree = s.tree(which)
        docs = body.get("docs") or []
        target = body.get("to")
        with s.lock:
            if target not in tree.nodes:
                raise NodeNotFound(str(target))
            for d in docs:
                if d not in s.corpus.index_of:
                    raise ApiError(404, "NotFound", f"unknown document {d!r}")
            s.push_undo()
            for d in docs:
                _remove_doc_leaf(s, tree, d)
                if d in s.unassigned:
                    s.unassigned.remove(d)
                _attach_doc(s, tree, d, target)
            s.recompute_stats(tree)
            s.refresh_uncertainty()
            return {"version": s.bump()}

    def _best_attachment(s: Session, tree: RoseTree, doc: Document) -> int:
        params = DcmParams(vocab_size=max(1, s.corpus.vocab.size))
        best, best_score = tree.root, -float("inf")
        for nid in tree.subtree_nodes(tree.root):
            node = tree.nodes[nid]
            if node.is_leaf or node.stats is None:
                continue
            score = log_dcm_doc_given_node(doc, node.stats.pooled_counts, params)
            if score > best_score:
                best, best_score = nid, score
        return best

    @app.post("/api/v1/sessions/{sid}/docs/add")
    async def add_docs(sid: str, body: dict):
        s = get_session(sid)
        require_idle(s)
        records = body.get("docs") or []
        target = body.get("target")
        with s.lock:
            s.push_undo()
            new_docs = []
            for i, rec in enumerate(records):
                if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
                    raise SchemaViolation("record must have 'id' and 'text'",
                                          path=f"/docs/{i}")
                if rec["id"] in s.corpus.index_of:
                    raise SchemaViolation(f"duplicate document id {rec['id']!r}",
                                          path=f"/docs/{i}/id")
                doc = Document.from_tokens(str(rec["id"]),
                                           tokenize(rec["text"]),
                                           s.corpus.vocab, body=rec["text"])
                s.corpus.docs.append(doc)
                s.corpus.index_of[doc.id] = len(s.corpus.docs) - 1
                new_docs.append(doc)
            s.corpus.invalidate_cache()
            placed = {}
            if s.clustering_tree is not None:
                tree = s.clustering_tree
                for doc in new_docs:
                    nid = target if target is not None \
                        else _best_attachment(s, tree, doc)
                    if nid not in tree.nodes:
                        raise NodeNotFound(str(nid))
                    _attach_doc(s, tree, doc.id, nid)
                    placed[doc.id] = nid
                s.recompute_stats(tree)
            else:
                s.unassigned.extend(d.id for d in new_docs)
            s.refresh_uncertainty()
            return {"version": s.bump(), "placed": placed}

    # ----- config / undo -----

    @app.patch("/api/v1/sessions/{sid}/config")
    async def patch_config(sid: str, body: dict):
        s = get_session(sid)
        with s.lock:
            for key, val in body.items():
                attr = "lam" if key == "lambda" else key
                if not hasattr(s.config, attr):
                    raise ApiError(400, "SchemaViolation",
                                   f"unknown config key {key!r}", path=f"/{key}")
                setattr(s.config, attr, val)
            s.persist()
            return {"config": s.config.as_dict()}

    @app.post("/api/v1/sessions/{sid}/undo")
    async def undo(sid: str):
        s = get_session(sid)
        require_idle(s)
        with s.lock:
            if not s.undo_stack:
                raise ApiError(422, "NothingToUndo", "undo stack is empty")
            snap = s.undo_stack.pop()
            s.restore(snap)
            for tree in (s.constraint_tree, s.clustering_tree):
                if tree is not None:
                    s.recompute_stats(tree)
            s.refresh_uncertainty()
            return {"version": s.bump()}

    # ----- reads -----

    def _node_vectors(s: Session, tree: RoseTree):
        mus, members = membership_matrix(tree, s.corpus, s.store)
        import numpy as np
        from .corpus import TfIdfModel, doc_vectors_matrix
        vectors = doc_vectors_matrix(s.corpus, s.store, TfIdfModel(s.corpus))
        out = {}
        for nid, rows in members.items():
            if rows:
                v = vectors[rows].mean(axis=0)
                n = np.linalg.norm(v)
                out[nid] = v / n if n > 0 else v
        return out

    def _first_level_categories(s: Session) -> tuple[dict[str, int], int]:
        src = s.constraint_tree or s.clustering_tree
        if src is None:
            return {}, 1
        cat_of: dict[str, int] = {}
        kids = src.nodes[src.root].children
        for k, c in enumerate(kids):
            for d in src.docs_under(c):
                cat_of[d] = k
        return cat_of, max(1, len(kids))

    @app.get("/api/v1/sessions/{sid}/tree/{which}")
    async def get_tree(sid: str, which: str, focus: int | None = None,
                       pinned: str | None = None, budget: int = 50):
        s = get_session(sid)
        tree = s.tree(which)
        cat_of, ncat = _first_level_categories(s)
        counts = category_count_map(tree, cat_of, ncat)
        ordering = optimize_ordering(tree, _node_vectors(s, tree), counts,
                                     seed=s.config.seed)
        focus_id = focus if focus is not None else tree.root
        pins = {int(p) for p in pinned.split(",") if p} if pinned else set()
        overall = {nid: (tree.nodes[nid].uncertainty or {}).get("overall", 0.0)
                   for nid in tree.subtree_nodes(tree.root)}
        cut = doi_cut(tree, overall, focus_id, pins, budget=budget)
        return {
            "version": s.version,
            "tree": tree.serialize(),
            "layout": {
                "order": {str(k): v for k, v in ordering.order.items()},
                "visible": sorted(cut.visible),
                "collapsed": sorted(cut.collapsed),
            },
            "categories": {d: k for d, k in cat_of.items()},
        }

    @app.get("/api/v1/sessions/{sid}/nodes/{nid}")
    async def get_node(sid: str, nid: int, tree: str = "clustering",
                       page: int = 0, page_size: int = 20):
        s = get_session(sid)
        t = s.tree(tree)
        if nid not in t.nodes:
            raise NodeNotFound(str(nid))
        node = t.nodes[nid]
        pooled = node.stats.pooled_counts if node.stats else {}
        top = sorted(pooled.items(), key=lambda kv: (-kv[1], kv[0]))[:20]
        docs = sorted(t.docs_under(nid))
        start = page * page_size
        return {
            "id": nid, "label": node.label, "kb_ref": node.kb_ref,
            "top_terms": [[s.corpus.vocab.word(tid), int(c)] for tid, c in top],
            "docs": docs[start:start + page_size],
            "page": page, "page_size": page_size, "total_docs": len(docs),
            "uncertainty": node.uncertainty,
        }

    @app.get("/api/v1/sessions/{sid}/tree/{which}/nodes/{nid}/linked")
    async def linked_nodes(sid: str, which: str, nid: int):
        s = get_session(sid)
        tree = s.tree(which)
        other_which = "clustering" if which == "constraint" else "constraint"
        other = s.tree(other_which)
        if nid not in tree.nodes:
            raise NodeNotFound(str(nid))
        docs = set(tree.docs_under(nid))
        leaf_of = other.leaf_of_doc()
        counts: dict[int, int] = {}
        for d in docs:
            leaf = leaf_of.get(d)
            if leaf is None:
                continue
            container = other.nodes[leaf].parent
            container = leaf if container is None else container
            counts[container] = counts.get(container, 0) + 1
        return {"tree": other_which,
                "nodes": [{"id": k, "shared_docs": v}
                          for k, v in sorted(counts.items())]}

    return app


app = create_app()
