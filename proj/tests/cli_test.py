"""End-to-end checks of the xote command-line tool.

Usage: cli_test.py <path to xote binary>
"""

import json
import math
import os
import random
import subprocess
import sys
import tempfile

XOTE = sys.argv[1]
HERE = os.path.dirname(os.path.abspath(__file__))
failures = []


def run(*args, expect=0):
    p = subprocess.run([XOTE, *args], capture_output=True, text=True)
    if p.returncode != expect:
        raise AssertionError(f"{' '.join(args)} exited {p.returncode}, expected {expect}\n{p.stderr}")
    return p


def case(fn):
    try:
        fn()
        print(f"ok   {fn.__name__}")
    except Exception as e:  # noqa: BLE001
        failures.append(fn.__name__)
        print(f"FAIL {fn.__name__}: {e}")
    return fn


FUNCTION = ["the", "was", "and", "i", "loved", "very", "it", "but"]
NOUNS = ["pizza", "wine", "pasta", "service", "staff", "salad"]
ADJS = ["great", "bad", "tasty", "slow", "rude"]
DIM = 8


def orthogonal(d, rng):
    rows = []
    for _ in range(d):
        v = [rng.gauss(0, 1) for _ in range(d)]
        for _ in range(2):
            for r in rows:
                c = sum(a * b for a, b in zip(v, r))
                v = [a - c * b for a, b in zip(v, r)]
        n = math.sqrt(sum(a * a for a in v))
        rows.append([a / n for a in v])
    return rows


def write_vectors(path, words, vecs):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(words)} {DIM}\n")
        for w, v in zip(words, vecs):
            f.write(w + " " + " ".join(f"{x:.10f}" for x in v) + "\n")


def sentence_xml(sid, words, targets):
    text, starts = "", []
    for i, w in enumerate(words):
        if i and w != ".":
            text += " "
        starts.append(len(text))
        text += w
    ops = "".join(
        f'<Opinion target="{text[starts[a]:starts[b - 1] + len(words[b - 1])]}" '
        f'from="{starts[a]}" to="{starts[b - 1] + len(words[b - 1])}"/>'
        for a, b in targets
    )
    return f'<sentence id="{sid}"><text>{text}</text><Opinions>{ops}</Opinions></sentence>'


def corpus_xml(path, prefix, n, seed):
    rng = random.Random(seed)
    out = []
    for k in range(n):
        noun, noun2, adj = rng.choice(NOUNS), rng.choice(NOUNS), rng.choice(ADJS)
        if k % 3 == 0:
            w, t = ["the", noun, "was", adj, "."], [(1, 2)]
        elif k % 3 == 1:
            w, t = ["i", "loved", "the", noun, "and", "the", noun2, "."], [(3, 4), (6, 7)]
        else:
            w, t = ["it", "was", adj, "but", "the", noun, "was", "very", adj, "."], [(5, 6)]
        w = [x if x == "." else prefix + x for x in w]
        out.append(sentence_xml(f"{prefix}{k}", w, t))
    with open(path, "w", encoding="utf-8") as f:
        f.write("<Reviews><Review><sentences>" + "".join(out) + "</sentences></Review></Reviews>\n")


def build_fixture(d):
    rng = random.Random(7)
    words = FUNCTION + NOUNS + ADJS + ["."]
    noun_c = [rng.gauss(0, 1) for _ in range(DIM)]
    adj_c = [rng.gauss(0, 1) for _ in range(DIM)]
    lat = []
    for w in words:
        base = noun_c if w in NOUNS else adj_c if w in ADJS else [0.0] * DIM
        scale = 0.5 if w in NOUNS or w in ADJS else 1.0
        lat.append([b + scale * rng.gauss(0, 1) for b in base])
    rot = orthogonal(DIM, rng)
    rotated = [[sum(v[k] * rot[k][j] for k in range(DIM)) for j in range(DIM)] for v in lat]
    write_vectors(os.path.join(d, "en.vec"), words, lat)
    write_vectors(os.path.join(d, "xx.vec"), [w if w == "." else "x_" + w for w in words], rotated)
    with open(os.path.join(d, "xx-en.dict"), "w") as f:
        for w in words:
            f.write(("." if w == "." else "x_" + w) + "\t" + w + "\n")
    corpus_xml(os.path.join(d, "en_train.xml"), "", 60, 1)
    corpus_xml(os.path.join(d, "en_test.xml"), "", 20, 2)
    corpus_xml(os.path.join(d, "xx_train.xml"), "x_", 60, 1)
    corpus_xml(os.path.join(d, "xx_test.xml"), "x_", 20, 3)


def base_config(d, **extra):
    cfg = {
        "schema_version": 1,
        "output": "out",
        "pivot": "en",
        "languages": {
            "en": {"train": "en_train.xml", "test": "en_test.xml", "embeddings": "en.vec"},
            "xx": {"train": "xx_train.xml", "test": "xx_test.xml", "embeddings": "xx.vec",
                   "dictionary": "xx-en.dict"},
        },
        "model": {"layers": 2, "conv_dim": 24, "dense_dim": 24},
        "train": {"batch_size": 8, "max_epochs": 25, "patience": 5, "seeds": [1, 2],
                  "adam": {"alpha": 0.01}},
    }
    cfg.update(extra)
    path = os.path.join(d, "config.json")
    with open(path, "w") as f:
        json.dump(cfg, f)
    return path


tmp = tempfile.TemporaryDirectory()
D = tmp.name
build_fixture(D)


@case
def ingest_fixture():
    out = os.path.join(D, "ingest")
    p = run("ingest", os.path.join(HERE, "fixtures", "three_sentences.xml"), "--lang", "en", "--out", out,
            "--embeddings", "en=" + os.path.join(D, "en.vec"))
    rep = json.loads(p.stdout)
    assert (rep["sentences"], rep["tokens"], rep["targets"]) == (3, 25, 2), rep
    assert rep["null_targets"] == 1 and rep["duplicate_targets"] == 1, rep
    assert rep["embedded_tokens"] == 25, rep
    conll = open(os.path.join(out, "three_sentences.conll")).read()
    assert "wine\t4\t8\tI\n" in conll
    assert json.load(open(os.path.join(out, "three_sentences.report.json"))) == rep


@case
def align_recovers_rotation():
    out = os.path.join(D, "xx-en.xprj")
    p = run("align", os.path.join(D, "xx.vec"), os.path.join(D, "en.vec"), os.path.join(D, "xx-en.dict"),
            "--src-lang", "xx", "--tgt-lang", "en", "--test-fraction", "0.2", "--out", out)
    rep = json.loads(p.stdout)
    assert rep["orthogonality_error"] < 1e-8, rep
    assert rep["precision_at_1"] == 1.0, rep
    assert os.path.getsize(out) == 4 + 4 + 4 + 4 + DIM * DIM * 8


@case
def convert_vectors():
    out = os.path.join(D, "en.xemb")
    rep = json.loads(run("convert-vectors", os.path.join(D, "en.vec"), "--lang", "en", "--out", out).stdout)
    assert rep == {"language": "en", "words": 20, "dim": DIM}, rep
    assert open(out, "rb").read(4) == b"XEMB"


@case
def train_eval_predict():
    cfg = base_config(D, sources=["en"], target="xx")
    p = run("train", "--config", cfg, "--seed", "3")
    summary = json.loads(p.stdout)
    ckpt = summary["checkpoint"]
    assert ckpt.endswith(os.path.join("train", "en-xx", "seed-3", "model.xote")), ckpt
    record = json.load(open(os.path.join(os.path.dirname(ckpt), "run.json")))
    assert record["seed"] == 3 and record["source_langs"] == ["en"]
    assert record["test_f1"] > 0.8, record

    # Same config and seed: byte-identical artifacts.
    first = open(ckpt, "rb").read()
    run("train", "--config", cfg, "--seed", "3")
    assert open(ckpt, "rb").read() == first

    ev = json.loads(run("eval", ckpt, os.path.join(D, "en_test.xml"), "--lang", "en",
                        "--embeddings", "en=" + os.path.join(D, "en.vec"),
                        "--out", os.path.join(D, "eval.json")).stdout)
    assert ev["f1"] > 0.8, ev
    assert json.load(open(os.path.join(D, "eval.json")))["f1"] == ev["f1"]

    text = os.path.join(D, "raw.txt")
    with open(text, "w") as f:
        f.write("the wine was great .\n\ni loved the pasta and the staff .\n")
    lines = run("predict", ckpt, text, "--lang", "en", "--embeddings", "en=" + os.path.join(D, "en.vec")).stdout
    rows = [json.loads(x) for x in lines.splitlines()]
    assert [r["line"] for r in rows] == [1, 2, 3]
    assert rows[1]["spans"] == []
    assert {"start": 4, "end": 8, "text": "wine"} in rows[0]["spans"], rows[0]


@case
def eval_perfect_model_on_gold():
    # A model that overfits a 20-sentence corpus scores F1 1.0 on that corpus.
    d = os.path.join(D, "perfect")
    os.makedirs(d, exist_ok=True)
    corpus_xml(os.path.join(d, "tiny.xml"), "", 20, 5)
    cfg = {"schema_version": 1, "output": os.path.join(d, "out"),
           "languages": {"en": {"train": os.path.join(d, "tiny.xml"), "embeddings": os.path.join(D, "en.vec")}},
           "sources": ["en"],
           "model": {"layers": 1, "conv_dim": 32, "dense_dim": 32, "dropout_embed": 0.0, "dropout_hidden": 0.0},
           "train": {"batch_size": 4, "max_epochs": 60, "patience": 60, "seeds": [1], "adam": {"alpha": 0.01}}}
    path = os.path.join(d, "c.json")
    json.dump(cfg, open(path, "w"))
    ckpt = json.loads(run("train", "--config", path).stdout)["checkpoint"]
    ev = json.loads(run("eval", ckpt, os.path.join(d, "tiny.xml"), "--lang", "en", "--config", path).stdout)
    assert ev["f1"] == 1.0, ev


@case
def zero_shot_grid_is_symmetric():
    cfg = base_config(D)
    p = run("zero-shot", "--config", cfg, "--workers", "2")
    grid = json.load(open(os.path.join(D, "out", "zero-shot", "grid.json")))
    assert grid["languages"] == ["en", "xx"]
    m = grid["mean_f1"]
    assert m[0][0] > 0.8, m
    assert abs(m[0][1] - m[0][0]) < 0.05 and abs(m[1][0] - m[1][1]) < 0.05, m
    assert p.stdout.startswith("source\\target,en,xx\n")
    for src in ("en", "xx"):
        for tgt in ("en", "xx"):
            for seed in (1, 2):
                assert os.path.exists(os.path.join(D, "out", "zero-shot", f"{src}-{tgt}", f"seed-{seed}", "run.json"))
    leftovers = [f for _, _, fs in os.walk(os.path.join(D, "out")) for f in fs if ".tmp." in f]
    assert not leftovers, leftovers


@case
def leave_one_out_and_curve():
    cfg = base_config(D, sources=["en"], target="xx", curve_sizes=[0, 10])
    run("loo", "--config", cfg, "--seed", "1")
    table = json.load(open(os.path.join(D, "out", "leave-one-out", "table.json")))
    assert [r["target"] for r in table["rows"]] == ["en", "xx"]
    assert os.path.exists(os.path.join(D, "out", "leave-one-out", "all-xx", "seed-1", "run.json"))
    run("curve", "--config", cfg, "--seed", "1")
    curve = json.load(open(os.path.join(D, "out", "curve", "en-xx", "curve.json")))
    assert [p["target_samples"] for p in curve["points"]] == [0, 10]
    assert curve["points"][0]["monolingual_f1"] == 0.0
    assert os.path.exists(os.path.join(D, "out", "curve", "en-xx", "seed-1", "cross-10.json"))


@case
def errors_are_json_on_stderr():
    p = run("train", "--bogus", expect=2)
    assert json.loads(p.stderr)["error"]["kind"] == "usage"

    bad = os.path.join(D, "bad.json")
    json.dump({"schema_version": 99}, open(bad, "w"))
    p = run("zero-shot", "--config", bad, expect=2)
    err = json.loads(p.stderr)["error"]
    assert err["kind"] == "config" and "schema_version" in err["message"], err

    json.dump({"languages": {}}, open(bad, "w"))
    assert "schema_version" in json.loads(run("train", "--config", bad, expect=2).stderr)["error"]["message"]

    json.dump({"schema_version": 1, "languages": {"en": {"train": "missing.xml"}}}, open(bad, "w"))
    assert "not found" in json.loads(run("train", "--config", bad, expect=2).stderr)["error"]["message"]

    broken = os.path.join(D, "broken.xml")
    open(broken, "w").write("<Reviews>\n<sentence id='1'>\n</Reviews>\n")
    err = json.loads(run("ingest", broken, "--lang", "en", expect=1).stderr)["error"]
    assert err["kind"] == "format" and err["line"] > 0, err

    ragged = os.path.join(D, "ragged.vec")
    open(ragged, "w").write("a 1 2\nb 1\n")
    err = json.loads(run("convert-vectors", ragged, "--lang", "en", "--out", os.path.join(D, "r.xemb"),
                         expect=1).stderr)["error"]
    assert err["line"] == 2, err
    assert not os.path.exists(os.path.join(D, "r.xemb"))


print(f"{len(failures)} failed" if failures else "all CLI checks passed")
sys.exit(1 if failures else 0)
