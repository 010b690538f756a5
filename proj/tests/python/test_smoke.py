import json

import pytest

import llmdetect

CORPUS = (
    "response_id,learner_id,lesson_id,item_id,text,coder_a,coder_b,mcq_correct\n"
    "r1,L1,les,i1,i think u should ask him what happend,0,0,1\n"
    "r2,L1,les,i2,\"Additionally, it is crucial to foster a supportive environment.\",1,1,0\n"
    "r3,L2,les,i1,tell the student good job,0,0,1\n"
    "r4,L2,les,i2,\"Furthermore, acknowledging effort is essential.\",1,0,1\n"
    "r5,L3,les,i1,ask what they tried,0,0,0\n"
    "r6,L3,les,i2,\"Moreover, it is important to delve into the reasoning.\",1,1,1\n"
)


@pytest.fixture
def corpus_path(tmp_path):
    p = tmp_path / "corpus.csv"
    p.write_text(CORPUS)
    return str(p)


def test_load_corpus_derives_consensus(corpus_path):
    rows = llmdetect.load_corpus(corpus_path)
    assert [r["consensus"] for r in rows] == [0, 1, 0, 0.5, 0, 1]
    assert rows[4]["mcq_correct"] is False


def test_kappa():
    assert llmdetect.cohens_kappa([0, 1, 0.5], [0, 1, 0.5], 1) == pytest.approx(1.0)
    assert llmdetect.cohens_kappa([0, 0], [0, 0], 1) is None
    with pytest.raises(ValueError):
        llmdetect.cohens_kappa([0.25], [0], 0)


def test_per_class_kappa(corpus_path):
    k = llmdetect.per_class_kappa(corpus_path)
    assert set(k) == {"0", "0.5", "1"}
    assert k["0.5"] is None


def test_split_keeps_learners_together(corpus_path):
    train, test = llmdetect.learner_split(corpus_path, 0.8, 7)
    assert len(train) + len(test) == 6
    assert len(train) == 4


def test_features_and_classifier():
    texts = ["i dunno lol", "ok so i told him", "Additionally, it is crucial to foster growth.",
             "Furthermore, it is essential to delve deeper."] * 5
    y = [0, 0, 1, 1] * 5
    x = [list(llmdetect.extract_features(t).values()) for t in texts]
    assert len(x[0]) == len(llmdetect.feature_names())
    for kind in ("logistic", "forest"):
        model = llmdetect.train(x, y, kind, {"seed": 3, "trees_count": 10})
        pred = llmdetect.predict_labels(model, x)
        report = llmdetect.classification_report(y, pred)
        assert report["accuracy"] == pytest.approx(1.0)


def test_fit_glmm_pooled_boundary():
    records = []
    for i in range(20):
        for j in range(6):
            records.append((f"L{i}", f"u{j}", False, j < 5))
        for j in range(8):
            records.append((f"L{i}", f"f{j}", True, j < 7))
    fit = llmdetect.fit_glmm(records)
    assert fit["converged"]
    assert fit["sigma_u"] == 0
    import math
    assert fit["beta0"] == pytest.approx(math.log(5), abs=1e-4)
    assert fit["beta1"] == pytest.approx(math.log(7) - math.log(5), abs=1e-4)


def test_run_cli(tmp_path, corpus_path):
    code, out, err = llmdetect.run_cli("ingest", "--input", corpus_path, "--out", tmp_path)
    assert code == 0, err
    run_dir = out.strip().splitlines()[-1].split(": ", 1)[1]
    summary = json.loads((tmp_path / run_dir.split("/")[-1] / "summary.json").read_text())
    assert summary["total"] == 6
    assert llmdetect.run_cli("bogus")[0] == 1
