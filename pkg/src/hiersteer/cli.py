"""Command line entry points: extract, cluster, eval, synth, serve."""

from __future__ import annotations

import functools
import json
import os
import sys

import click

from .brt import BrtConfig, cluster as run_cluster
from .corpus import build_corpus, load_corpus_jsonl, load_embeddings
from .dcm import DcmParams
from .errors import HiersteerError, SchemaViolation
from .extract import ExtractConfig, extract_constraint_tree
from .kb import parse_kb
from .metrics import SynthConfig, layer_nmis, synth, triple_fan_accuracy
from .rosetree import RoseTree

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _fail(code: str, message: str, exit_code: int):
    sys.stderr.write(json.dumps({"code": code, "message": message}) + "\n")
    sys.exit(exit_code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (SchemaViolation, FileNotFoundError, json.JSONDecodeError) as e:
            _fail(type(e).__name__, str(e), EXIT_VALIDATION)
        except HiersteerError as e:
            _fail(type(e).__name__, str(e), EXIT_RUNTIME)
        except click.ClickException:
            raise
        except Exception as e:
            _fail(type(e).__name__, str(e), EXIT_RUNTIME)
    return wrapper


def _set_threads(threads: int | None):
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def _progress_bar(label: str):
    state = {"last": -1}

    def cb(done, total):
        pct = int(100 * done / max(1, total))
        if pct != state["last"] and pct % 5 == 0:
            sys.stderr.write(f"\r{label}: {pct:3d}%")
            sys.stderr.flush()
            state["last"] = pct

    return cb


def _read_stdin_bundle() -> dict:
    data = sys.stdin.read()
    if not data.strip():
        raise SchemaViolation("expected a JSON bundle on stdin")
    return json.loads(data)


def _write_json(obj: dict, out: str | None):
    text = json.dumps(obj, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text + "\n")


@click.group()
def main():
    """Constraint-guided hierarchical document clustering toolkit."""


@main.command()
@click.option("--corpus", "corpus_path", type=str, required=True,
              help="Corpus JSONL path.")
@click.option("--kb", "kb_path", type=str, required=True, help="KB JSON path.")
@click.option("--embeddings", type=str, default=None)
@click.option("--out", type=str, default=None, help="Output tree JSON path.")
@click.option("--k", "k_top", type=int, default=50, show_default=True)
@click.option("--q", type=float, default=0.10, show_default=True)
@click.option("--rho", type=float, default=0.9, show_default=True)
@click.option("--gamma", type=float, default=None)
@click.option("--min-ants", type=int, default=None)
@click.option("--iters", type=int, default=30, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=None)
@click.option("--progress", is_flag=True)
@handle_errors
def extract(corpus_path, kb_path, embeddings, out, k_top, q, rho, gamma,
            min_ants, iters, seed, threads, progress):
    """Extract a constraint tree from a knowledge base."""
    _set_threads(threads)
    corpus = load_corpus_jsonl(corpus_path)
    with open(kb_path, encoding="utf-8") as fh:
        kb = parse_kb(json.load(fh), corpus.vocab)
    store = load_embeddings(embeddings, corpus.vocab) if embeddings else None
    cfg = ExtractConfig(K=k_top, q=q, rho=rho, gamma=gamma, min_ants=min_ants,
                        iters=iters, seed=seed)
    cb = _progress_bar("extract") if progress else None
    res = extract_constraint_tree(corpus, kb, cfg, store=store, progress_cb=cb)
    if progress:
        sys.stderr.write("\n")
    _write_json(res.tree.serialize(), out)
    meta = {"coverage": res.coverage, "num_ants": res.num_ants,
            "iterations": res.iterations, "gamma": res.gamma, "seed": res.seed}
    (sys.stdout if out else sys.stderr).write(json.dumps(meta, sort_keys=True) + "\n")


@main.command("cluster")
@click.option("--corpus", "corpus_path", type=str, default=None,
              help="Corpus JSONL path; omit to read a bundle from stdin.")
@click.option("--constraints", "constraints_path", type=str, default=None,
              help="Constraint tree JSON path.")
@click.option("--lambda", "lam", type=float, default=1e-6, show_default=True)
@click.option("--pi0", type=float, default=0.5, show_default=True)
@click.option("--cap", type=int, default=200_000, show_default=True,
              help="Max constraint triplets decomposed from the tree.")
@click.option("--approx", is_flag=True, help="Neighbor-pruned candidate scoring.")
@click.option("--out", type=str, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=None)
@click.option("--progress", is_flag=True)
@handle_errors
def cluster_cmd(corpus_path, constraints_path, lam, pi0, cap, approx, out,
                seed, threads, progress):
    """Cluster a corpus, optionally guided by a constraint tree."""
    _set_threads(threads)
    truth = None
    if corpus_path:
        corpus = load_corpus_jsonl(corpus_path)
    else:
        bundle = _read_stdin_bundle()
        if "corpus" not in bundle:
            raise SchemaViolation("stdin bundle missing 'corpus'", path="/corpus")
        corpus = build_corpus(bundle["corpus"])
        truth = bundle.get("truth")
    constraints = []
    if constraints_path and lam > 0:
        with open(constraints_path, encoding="utf-8") as fh:
            ctree = RoseTree.parse(json.load(fh))
        constraints = ctree.decompose(cap=cap, seed=seed).items
    params = DcmParams(vocab_size=max(1, corpus.vocab.size))
    cb = _progress_bar("cluster") if progress else None
    tree = run_cluster(corpus, constraints=constraints, lam=lam, params=params,
                       config=BrtConfig(pi0=pi0, approx=approx), progress_cb=cb)
    if progress:
        sys.stderr.write("\n")
    payload = tree.serialize()
    if truth is not None:
        payload = {"tree": payload, "truth": truth}
    _write_json(payload, out)


@main.command("eval")
@click.option("--candidate", type=str, default=None,
              help="Candidate tree JSON; omit to read {'tree','truth'} from stdin.")
@click.option("--truth", "truth_path", type=str, default=None)
@click.option("--cap", type=int, default=200_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@handle_errors
def eval_cmd(candidate, truth_path, cap, seed):
    """Triple/fan accuracy and average per-layer NMI of a candidate tree."""
    if candidate and truth_path:
        with open(candidate, encoding="utf-8") as fh:
            cand = RoseTree.parse(json.load(fh))
        with open(truth_path, encoding="utf-8") as fh:
            tru = RoseTree.parse(json.load(fh))
    else:
        bundle = _read_stdin_bundle()
        if "tree" not in bundle or "truth" not in bundle:
            raise SchemaViolation("stdin bundle must carry 'tree' and 'truth'")
        cand = RoseTree.parse(bundle["tree"])
        tru = RoseTree.parse(bundle["truth"])
    layers = layer_nmis(cand, tru)
    result = {
        "triple_fan": triple_fan_accuracy(cand, tru, cap=cap, seed=seed),
        "avg_nmi": sum(layers) / len(layers) if layers else 1.0,
        "layers": layers,
    }
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")


@main.command("synth")
@click.option("--branching", type=str, default="3,3", show_default=True,
              help="Comma-separated children per level.")
@click.option("--docs-per-leaf", type=int, default=10, show_default=True)
@click.option("--vocab", type=int, default=500, show_default=True)
@click.option("--concentration", type=float, default=0.1, show_default=True)
@click.option("--noise", type=float, default=0.0, show_default=True)
@click.option("--doc-length", type=int, default=60, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=str, default=None,
              help="Write corpus.jsonl, kb.json, truth.json here instead of stdout.")
@handle_errors
def synth_cmd(branching, docs_per_leaf, vocab, concentration, noise,
              doc_length, seed, out_dir):
    """Generate a synthetic corpus, truth hierarchy, and mirrored KB."""
    cfg = SynthConfig(branching=tuple(int(b) for b in branching.split(",")),
                      docs_per_leaf=docs_per_leaf, vocab=vocab,
                      concentration=concentration, noise=noise,
                      doc_length=doc_length, seed=seed)
    data = synth(cfg)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "corpus.jsonl"), "w", encoding="utf-8") as fh:
            for rec in data.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        with open(os.path.join(out_dir, "kb.json"), "w", encoding="utf-8") as fh:
            json.dump(data.kb_raw, fh, sort_keys=True)
        with open(os.path.join(out_dir, "truth.json"), "w", encoding="utf-8") as fh:
            json.dump(data.truth.serialize(), fh, sort_keys=True)
    else:
        bundle = {"corpus": data.records, "kb": data.kb_raw,
                  "truth": data.truth.serialize()}
        sys.stdout.write(json.dumps(bundle, sort_keys=True) + "\n")


@main.command()
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=None,
              help="Defaults to $PORT or 8000.")
@click.option("--data-dir", type=str, default=None,
              help="Defaults to $DATA_DIR or ./hiersteer_data.")
@handle_errors
def serve(host, port, data_dir):
    """Run the interactive steering HTTP service."""
    import uvicorn

    from .service import create_app
    port = port or int(os.environ.get("PORT", "8000"))
    uvicorn.run(create_app(data_dir), host=host, port=port)


if __name__ == "__main__":
    main()
